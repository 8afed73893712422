// Copyright 2026 The vclone Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Command-line workflow: pretrain, subset, finetune, synthesize, vocode and
// evaluate. Settings resolve as defaults < --config file < --set overrides.

#pragma once

#include "vclone/finetune.hpp"

#include <json.hpp>

#include <iosfwd>
#include <string_view>

namespace vclone::cli {

enum ExitCode : int {
  kSuccess = 0,
  kUsageError = 2,
  kDataError = 3,
  kRuntimeFailure = 4,
};

nlohmann::json default_config();

// Recursively applies `patch` to `config`. Keys that do not exist in
// `config` and object/value shape changes raise ConfigError.
void merge_config(nlohmann::json& config, const nlohmann::json& patch);

// "a.b.c=value"; the value is parsed as JSON when possible, else a string.
void apply_override(nlohmann::json& config, std::string_view assignment);

struct Settings {
  std::uint64_t seed = 0;
  mel::MelConfig mel;
  pitch::YinConfig yin;
  acoustic::AcousticConfig acoustic;
  vocoder::VocoderConfig vocoder;
  finetune::PretrainOptions pretrain;
  finetune::VocoderTrainOptions vocoder_pretrain;
  double finetune_lr = 1e-4;
  double finetune_vocoder_lr = 2e-4;
  std::size_t finetune_batch_size = 8;
  std::int64_t checkpoint_every = 0;
};

// Converts a merged config into typed settings; throws ConfigError.
Settings resolve(const nlohmann::json& config);

// Runs one command. Returns an ExitCode; diagnostics go to `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace vclone::cli
