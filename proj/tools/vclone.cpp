// Copyright 2026 The vclone Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "vclone/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return vclone::cli::run(argc, argv, std::cout, std::cerr); }
