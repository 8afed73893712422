// Copyright 2026 The vclone Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Synthetic voices for smoke tests and demos. Every character is rendered as
// a harmonic stack on the voice's f0 with a character-specific spectral peak;
// spaces and punctuation are silence.

#pragma once

#include "vclone/data.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace vclone::toy {

struct Voice {
  int speaker_id = 0;
  double f0_hz = 110.0;
};

struct RenderConfig {
  int sample_rate_hz = 22050;
  int samples_per_char = 1280;  // five 256-sample frames
  double amplitude = 0.3;
};

std::vector<double> render(const std::string& text, const Voice& voice,
                           const RenderConfig& config = {});

// Writes one 16-bit WAV per text as <prefix>_<index>.wav and a manifest.
std::vector<data::UtteranceRecord> write_corpus(const std::filesystem::path& dir,
                                                const std::string& prefix,
                                                const std::vector<std::string>& texts,
                                                const Voice& voice,
                                                const RenderConfig& config = {});

struct Scenario {
  std::filesystem::path pretrain_manifest;     // voice A, 8 utterances
  std::filesystem::path finetune_manifest;     // voice B, 2 utterances
  std::filesystem::path target_validation;     // voice B, held out
  std::filesystem::path other_validation;      // voice A, held out
};

// Voice A is speaker 0 at 110 Hz, voice B is speaker 1 at 220 Hz.
Scenario write_scenario(const std::filesystem::path& dir, const RenderConfig& config = {});

}  // namespace vclone::toy
