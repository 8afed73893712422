// Copyright 2026 The vclone Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// YIN fundamental-frequency estimation and token-level pitch averaging.

#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <vector>

namespace vclone::pitch {

struct YinConfig {
  int sample_rate_hz = 22050;
  int frame_length = 2048;
  int hop_length = 256;  // must match the mel hop for frame alignment
  double fmin_hz = 65.0;
  double fmax_hz = 2093.0;
  double threshold = 0.15;

  void validate() const;  // throws ConfigError
};

struct PitchContour {
  std::vector<double> f0_hz;  // 0 where unvoiced
  std::vector<bool> voiced;

  std::size_t size() const { return f0_hz.size(); }
};

// d(tau) = sum_{j < W} (frame[j] - frame[j + tau])^2 for tau in [0, tau_max),
// with W = frame.size() - tau_max. Requires frame.size() >= 2 * tau_max.
std::vector<double> yin_difference(std::span<const double> frame,
                                   std::size_t tau_max);

// Cumulative mean normalized difference; 0/0 is mapped to 1.
std::vector<double> cmnd(std::span<const double> d);

// Frame t is centered on sample t * hop_length (zero padded at the edges),
// giving floor(len / hop) + 1 frames, the same count as the centered mel
// extraction. `frames` overrides the count.
PitchContour estimate_f0(std::span<const double> waveform,
                         const YinConfig& config,
                         std::optional<std::size_t> frames = std::nullopt);

// Mean f0 over each token's voiced frames; 0 when a token has none.
std::vector<double> average_pitch_per_token(const PitchContour& contour,
                                            std::span<const int> durations);

// Little-endian: uint32 length, float32 f0[length], uint8 voiced[length].
void write_pitch_cache(const std::filesystem::path& path,
                       const PitchContour& contour);
PitchContour read_pitch_cache(const std::filesystem::path& path);

}  // namespace vclone::pitch
