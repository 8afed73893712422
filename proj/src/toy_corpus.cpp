// Copyright 2026 The vclone Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "vclone/toy_corpus.hpp"

#include "vclone/audio.hpp"

#include <cmath>
#include <numbers>
#include <string_view>

namespace vclone::toy {

namespace {

constexpr std::string_view kSounding = "abcdefghijklmnopqrstuvwxyz0123456789";
constexpr double kMaxHarmonicHz = 5000.0;
constexpr int kRamp = 64;

const std::vector<std::string> kPretrainTexts = {
    "a big cat", "she hid", "red fox", "go now",
    "blue sky",  "mud pie", "we ran",  "old tree",
};
const std::vector<std::string> kFinetuneTexts = {"the sun", "fat dog"};
const std::vector<std::string> kTargetValidationTexts = {"hot tea", "big sun", "cat nap"};
const std::vector<std::string> kOtherValidationTexts = {"a red cap", "dog ran", "sky pie"};

}  // namespace

std::vector<double> render(const std::string& text, const Voice& voice,
                           const RenderConfig& config) {
  const int n = config.samples_per_char;
  std::vector<double> out(text.size() * static_cast<std::size_t>(n), 0.0);
  const double sr = config.sample_rate_hz;
  for (std::size_t c = 0; c < text.size(); ++c) {
    const char ch = static_cast<char>(std::tolower(static_cast<unsigned char>(text[c])));
    const auto k = kSounding.find(ch);
    if (k == std::string_view::npos) continue;
    const double peak = 400.0 + 90.0 * static_cast<double>(k);
    std::vector<double> weights;
    double norm = 0.0;
    for (int h = 1; h * voice.f0_hz < std::min(kMaxHarmonicHz, sr / 2); ++h) {
      const double f = h * voice.f0_hz;
      const double w = 0.15 / h + std::exp(-std::pow((f - peak) / 250.0, 2));
      weights.push_back(w);
      norm += w;
    }
    for (int i = 0; i < n; ++i) {
      const std::size_t idx = c * static_cast<std::size_t>(n) + static_cast<std::size_t>(i);
      const double t = static_cast<double>(idx) / sr;
      double s = 0.0;
      for (std::size_t h = 0; h < weights.size(); ++h) {
        s += weights[h] * std::sin(2.0 * std::numbers::pi * voice.f0_hz * static_cast<double>(h + 1) * t);
      }
      double env = 1.0;
      if (i < kRamp) env = 0.5 - 0.5 * std::cos(std::numbers::pi * i / kRamp);
      if (n - 1 - i < kRamp) env = 0.5 - 0.5 * std::cos(std::numbers::pi * (n - 1 - i) / kRamp);
      out[idx] = config.amplitude * env * s / norm;
    }
  }
  return out;
}

std::vector<data::UtteranceRecord> write_corpus(const std::filesystem::path& dir,
                                                const std::string& prefix,
                                                const std::vector<std::string>& texts,
                                                const Voice& voice,
                                                const RenderConfig& config) {
  std::filesystem::create_directories(dir / "wavs");
  std::vector<data::UtteranceRecord> records;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    audio::Waveform w{render(texts[i], voice, config), config.sample_rate_hz};
    const auto path =
        std::filesystem::absolute(dir / "wavs" / (prefix + "_" + std::to_string(i) + ".wav"));
    audio::write_wav(path, w);
    records.push_back({path, texts[i], voice.speaker_id, w.duration_sec()});
  }
  data::write_manifest(dir / (prefix + ".json"), records);
  return records;
}

Scenario write_scenario(const std::filesystem::path& dir, const RenderConfig& config) {
  const Voice a{0, 110.0};
  const Voice b{1, 220.0};
  write_corpus(dir, "pretrain", kPretrainTexts, a, config);
  write_corpus(dir, "finetune", kFinetuneTexts, b, config);
  write_corpus(dir, "target_validation", kTargetValidationTexts, b, config);
  write_corpus(dir, "other_validation", kOtherValidationTexts, a, config);
  return {dir / "pretrain.json", dir / "finetune.json", dir / "target_validation.json",
          dir / "other_validation.json"};
}

}  // namespace vclone::toy
