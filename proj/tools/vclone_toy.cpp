// Copyright 2026 The vclone Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Writes the two-voice toy corpus used by the smoke tests.

#include "vclone/toy_corpus.hpp"

#include <CLI11.hpp>

#include <exception>
#include <iostream>

int main(int argc, char** argv) {
  CLI::App app{"Write a synthetic two-voice corpus"};
  std::string dir;
  app.add_option("--output-dir", dir, "Destination directory")->required();
  CLI11_PARSE(app, argc, argv);
  try {
    const auto s = vclone::toy::write_scenario(dir);
    std::cout << s.pretrain_manifest.string() << '\n'
              << s.finetune_manifest.string() << '\n'
              << s.target_validation.string() << '\n'
              << s.other_validation.string() << '\n';
  } catch (const std::exception& e) {
    std::cerr << "vclone-toy: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
