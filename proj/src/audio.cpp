// Copyright 2026 The vclone Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "vclone/audio.hpp"

#include "vclone/errors.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numbers>

namespace vclone::audio {

namespace {

std::uint32_t read_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) |
         (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void put_u32(std::ofstream& out, std::uint32_t v) {
  const std::array<char, 4> b{static_cast<char>(v & 0xff),
                              static_cast<char>((v >> 8) & 0xff),
                              static_cast<char>((v >> 16) & 0xff),
                              static_cast<char>((v >> 24) & 0xff)};
  out.write(b.data(), 4);
}

void put_u16(std::ofstream& out, std::uint16_t v) {
  const std::array<char, 2> b{static_cast<char>(v & 0xff),
                              static_cast<char>((v >> 8) & 0xff)};
  out.write(b.data(), 2);
}

}  // namespace

Waveform read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open audio file: " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw DataError("not a RIFF/WAVE file: " + path.string());
  }

  Waveform wave;
  bool have_fmt = false;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    const std::uint32_t size = read_u32(chunk + 4);
    const std::size_t body = pos + 8;
    if (body + size > bytes.size()) {
      throw DataError("truncated WAV chunk in " + path.string());
    }
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16) throw DataError("short fmt chunk in " + path.string());
      const std::uint16_t format = read_u16(bytes.data() + body);
      const std::uint16_t channels = read_u16(bytes.data() + body + 2);
      wave.sample_rate = static_cast<int>(read_u32(bytes.data() + body + 4));
      const std::uint16_t bits = read_u16(bytes.data() + body + 14);
      if (format != 1 || bits != 16) {
        throw DataError("only 16-bit PCM WAV is supported: " + path.string());
      }
      if (channels != 1) {
        throw DataError("only mono WAV is supported: " + path.string());
      }
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      if (!have_fmt) throw DataError("data before fmt in " + path.string());
      const std::size_t n = size / 2;
      wave.samples.resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        const auto v = static_cast<std::int16_t>(
            read_u16(bytes.data() + body + 2 * i));
        wave.samples[i] = static_cast<double>(v) / 32768.0;
      }
      return wave;
    }
    pos = body + size + (size & 1u);
  }
  throw DataError("no data chunk in " + path.string());
}

void write_wav(const std::filesystem::path& path, const Waveform& wave) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write audio file: " + path.string());
  const auto n = static_cast<std::uint32_t>(wave.samples.size());
  out.write("RIFF", 4);
  put_u32(out, 36 + 2 * n);
  out.write("WAVEfmt ", 8);
  put_u32(out, 16);
  put_u16(out, 1);
  put_u16(out, 1);
  put_u32(out, static_cast<std::uint32_t>(wave.sample_rate));
  put_u32(out, static_cast<std::uint32_t>(wave.sample_rate) * 2);
  put_u16(out, 2);
  put_u16(out, 16);
  out.write("data", 4);
  put_u32(out, 2 * n);
  for (double s : wave.samples) {
    const auto v = static_cast<std::int16_t>(
        std::clamp(std::lround(s * 32768.0), -32768L, 32767L));
    put_u16(out, static_cast<std::uint16_t>(v));
  }
}

std::vector<double> resample(std::span<const double> samples, int from_rate,
                             int to_rate) {
  if (from_rate <= 0 || to_rate <= 0) {
    throw ConfigError("resample: sample rates must be positive");
  }
  if (from_rate == to_rate) return {samples.begin(), samples.end()};

  constexpr int kZeroCrossings = 16;
  const double ratio = static_cast<double>(to_rate) / from_rate;
  const double cutoff = std::min(1.0, ratio);
  const double half_width = kZeroCrossings / cutoff;
  const auto n_in = static_cast<long>(samples.size());
  const auto n_out = static_cast<long>(std::floor(n_in * ratio));

  std::vector<double> out(static_cast<std::size_t>(std::max(0L, n_out)));
  for (long n = 0; n < n_out; ++n) {
    const double t = n / ratio;
    const long lo = static_cast<long>(std::ceil(t - half_width));
    const long hi = static_cast<long>(std::floor(t + half_width));
    double acc = 0.0;
    for (long k = std::max(0L, lo); k <= std::min(n_in - 1, hi); ++k) {
      const double x = t - k;
      const double arg = std::numbers::pi * cutoff * x;
      const double sinc = std::abs(arg) < 1e-12 ? 1.0 : std::sin(arg) / arg;
      const double window =
          0.5 + 0.5 * std::cos(std::numbers::pi * x / half_width);
      acc += samples[static_cast<std::size_t>(k)] * cutoff * sinc * window;
    }
    out[static_cast<std::size_t>(n)] = acc;
  }
  return out;
}

Waveform load_audio(const std::filesystem::path& path, int target_rate) {
  Waveform wave = read_wav(path);
  if (wave.sample_rate != target_rate) {
    wave.samples = resample(wave.samples, wave.sample_rate, target_rate);
    wave.sample_rate = target_rate;
  }
  return wave;
}

}  // namespace vclone::audio
