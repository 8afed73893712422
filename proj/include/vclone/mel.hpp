// Copyright 2026 The vclone Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Log-mel spectrogram extraction, shared by the data pipeline and the
// vocoder's spectral loss so both see bit-identical features.

#pragma once

#include "vclone/autograd.hpp"

#include <span>
#include <vector>

namespace vclone::mel {

using ag::Matrix;

// Floor applied to mel magnitudes before the natural log.
inline constexpr double kLogFloor = 1e-5;

struct MelConfig {
  int sample_rate_hz = 22050;
  int n_fft = 1024;
  int hop_length = 256;
  int win_length = 1024;
  int n_mels = 80;
  double fmin_hz = 0.0;
  double fmax_hz = 8000.0;
  // Reflect-pad n_fft/2 on both sides so frame t is centered on sample
  // t*hop_length. Without centering frames start at t*hop_length.
  bool center = true;

  void validate() const;  // throws ConfigError
  bool operator==(const MelConfig&) const = default;
};

struct MelSpectrogram {
  Matrix values;  // T x n_mels, natural-log magnitudes
  MelConfig config;

  Eigen::Index frames() const { return values.rows(); }
};

// Slaney-style mel scale (linear below 1 kHz, logarithmic above).
double hz_to_mel(double hz);
double mel_to_hz(double mel);

// (n_fft/2 + 1) x n_mels triangular filters with area normalization.
const Matrix& filterbank(const MelConfig& config);

// Number of frames produced for a waveform of `length` samples.
Eigen::Index frame_count(Eigen::Index length, const MelConfig& config);

// Throws DataError for short or non-finite input.
MelSpectrogram compute_mel(std::span<const double> waveform,
                           const MelConfig& config);

// Differentiable variant: waveform is L x 1, result T x n_mels.
ag::Var log_mel(const ag::Var& waveform, const MelConfig& config);

}  // namespace vclone::mel
