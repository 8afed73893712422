// Copyright 2026 The vclone Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "vclone/pitch.hpp"

#include "vclone/errors.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>

namespace vclone::pitch {

static_assert(std::endian::native == std::endian::little,
              "cache formats assume a little-endian host");

void YinConfig::validate() const {
  if (sample_rate_hz <= 0 || frame_length <= 0 || hop_length <= 0) {
    throw ConfigError("yin config: sizes must be positive");
  }
  if (!(0.0 < fmin_hz && fmin_hz < fmax_hz && fmax_hz <= sample_rate_hz / 2.0)) {
    throw ConfigError("yin config: need 0 < fmin < fmax <= sample_rate/2");
  }
  if (frame_length < sample_rate_hz / fmin_hz) {
    throw ConfigError("yin config: frame_length must cover one fmin period");
  }
  if (!(threshold > 0.0 && threshold < 1.0)) {
    throw ConfigError("yin config: threshold must lie in (0, 1)");
  }
}

std::vector<double> yin_difference(std::span<const double> frame,
                                   std::size_t tau_max) {
  if (tau_max == 0 || frame.size() < 2 * tau_max) {
    throw ConfigError("yin_difference: tau_max too large for frame");
  }
  const std::size_t width = frame.size() - tau_max;
  std::vector<double> d(tau_max, 0.0);
  for (std::size_t tau = 1; tau < tau_max; ++tau) {
    double acc = 0.0;
    for (std::size_t j = 0; j < width; ++j) {
      const double diff = frame[j] - frame[j + tau];
      acc += diff * diff;
    }
    d[tau] = acc;
  }
  return d;
}

std::vector<double> cmnd(std::span<const double> d) {
  std::vector<double> out(d.size(), 1.0);
  double running = 0.0;
  for (std::size_t tau = 1; tau < d.size(); ++tau) {
    running += d[tau];
    out[tau] = running > 0.0 ? d[tau] * static_cast<double>(tau) / running : 1.0;
  }
  return out;
}

PitchContour estimate_f0(std::span<const double> waveform,
                         const YinConfig& config,
                         std::optional<std::size_t> frames) {
  config.validate();
  const double sr = config.sample_rate_hz;
  const auto tau_lo = static_cast<std::size_t>(
      std::max(2.0, std::ceil(sr / config.fmax_hz)));
  const auto tau_hi = static_cast<std::size_t>(std::floor(sr / config.fmin_hz));
  const std::size_t width = static_cast<std::size_t>(config.frame_length) / 2;
  const std::size_t tau_max = std::min(width, tau_hi + 2);
  if (tau_lo > tau_hi || tau_hi + 1 >= tau_max) {
    throw ConfigError("estimate_f0: lag band is empty for the given fmin/fmax");
  }
  if (waveform.empty()) throw DataError("estimate_f0: empty waveform");

  const std::size_t n_frames =
      frames.value_or(waveform.size() / static_cast<std::size_t>(config.hop_length) + 1);
  PitchContour out;
  out.f0_hz.assign(n_frames, 0.0);
  out.voiced.assign(n_frames, false);

  const std::size_t span = width + tau_max;
  const auto half = static_cast<long>(config.frame_length / 2);
  std::vector<double> frame(span);
  for (std::size_t t = 0; t < n_frames; ++t) {
    const long start = static_cast<long>(t) * config.hop_length - half;
    for (std::size_t j = 0; j < span; ++j) {
      const long src = start + static_cast<long>(j);
      frame[j] = (src >= 0 && src < static_cast<long>(waveform.size()))
                     ? waveform[static_cast<std::size_t>(src)]
                     : 0.0;
    }
    const std::vector<double> dn = cmnd(yin_difference(frame, tau_max));

    std::size_t tau = tau_lo;
    for (; tau <= tau_hi; ++tau) {
      if (dn[tau] < config.threshold) break;
    }
    if (tau > tau_hi) continue;
    while (tau + 1 <= tau_hi && dn[tau + 1] < dn[tau]) ++tau;

    double refined = static_cast<double>(tau);
    const double a = dn[tau - 1];
    const double b = dn[tau];
    const double c = dn[tau + 1];
    const double denom = a - 2.0 * b + c;
    if (denom > 0.0) {
      const double shift = 0.5 * (a - c) / denom;
      if (std::abs(shift) < 1.0) refined += shift;
    }
    const double f0 = sr / refined;
    if (f0 < config.fmin_hz || f0 > config.fmax_hz) continue;
    out.f0_hz[t] = f0;
    out.voiced[t] = true;
  }
  return out;
}

std::vector<double> average_pitch_per_token(const PitchContour& contour,
                                            std::span<const int> durations) {
  std::size_t total = 0;
  for (int d : durations) {
    if (d < 0) throw ConfigError("average_pitch_per_token: negative duration");
    total += static_cast<std::size_t>(d);
  }
  if (total != contour.size()) {
    throw ConfigError("average_pitch_per_token: durations sum to " +
                      std::to_string(total) + " but contour has " +
                      std::to_string(contour.size()) + " frames");
  }
  std::vector<double> out(durations.size(), 0.0);
  std::size_t t = 0;
  for (std::size_t i = 0; i < durations.size(); ++i) {
    double acc = 0.0;
    int voiced = 0;
    for (int k = 0; k < durations[i]; ++k, ++t) {
      if (contour.voiced[t]) {
        acc += contour.f0_hz[t];
        ++voiced;
      }
    }
    if (voiced > 0) out[i] = acc / voiced;
  }
  return out;
}

void write_pitch_cache(const std::filesystem::path& path,
                       const PitchContour& contour) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write pitch cache: " + path.string());
  const auto n = static_cast<std::uint32_t>(contour.size());
  out.write(reinterpret_cast<const char*>(&n), sizeof n);
  for (double f : contour.f0_hz) {
    const auto v = static_cast<float>(f);
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
  }
  for (bool v : contour.voiced) {
    const char b = v ? 1 : 0;
    out.write(&b, 1);
  }
}

PitchContour read_pitch_cache(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open pitch cache: " + path.string());
  std::uint32_t n = 0;
  in.read(reinterpret_cast<char*>(&n), sizeof n);
  PitchContour out;
  out.f0_hz.resize(n);
  out.voiced.resize(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    float v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    out.f0_hz[i] = v;
  }
  for (std::uint32_t i = 0; i < n; ++i) {
    char b = 0;
    in.read(&b, 1);
    out.voiced[i] = b != 0;
  }
  if (!in) throw DataError("truncated pitch cache: " + path.string());
  return out;
}

}  // namespace vclone::pitch
