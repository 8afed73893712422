// Copyright 2026 The vclone Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <filesystem>
#include <span>
#include <vector>

namespace vclone::audio {

struct Waveform {
  std::vector<double> samples;  // mono, nominally in [-1, 1]
  int sample_rate = 0;

  double duration_sec() const {
    return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate
                           : 0.0;
  }
};

// 16-bit PCM mono RIFF/WAVE. Other encodings are rejected with DataError.
Waveform read_wav(const std::filesystem::path& path);
void write_wav(const std::filesystem::path& path, const Waveform& wave);

// Band-limited resampling with a Hann-windowed sinc kernel.
std::vector<double> resample(std::span<const double> samples, int from_rate,
                             int to_rate);

// Reads a WAV file and resamples it to `target_rate` when needed.
Waveform load_audio(const std::filesystem::path& path, int target_rate);

}  // namespace vclone::audio
