// Copyright 2026 The vclone Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "vclone/mel.hpp"

#include "vclone/errors.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <tuple>

namespace vclone::mel {

namespace {

constexpr double kMinLogHz = 1000.0;
constexpr double kLinearSlope = 200.0 / 3.0;  // Hz per mel below 1 kHz
const double kMinLogMel = kMinLogHz / kLinearSlope;
const double kLogStep = std::log(6.4) / 27.0;

// Windowed DFT bases and the mel filterbank for one configuration.
struct Analysis {
  Matrix cos_basis;  // n_fft x bins, window folded in
  Matrix sin_basis;
  Matrix filters;    // bins x n_mels
};

using Key = std::tuple<int, int, int, int, double, double>;

const Analysis& analysis_for(const MelConfig& c) {
  static std::mutex mu;
  static std::map<Key, Analysis> cache;
  const Key key{c.sample_rate_hz, c.n_fft, c.win_length, c.n_mels, c.fmin_hz,
                c.fmax_hz};
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;

  Analysis a;
  const int bins = c.n_fft / 2 + 1;
  // Periodic Hann window of win_length, centered in the n_fft frame.
  std::vector<double> window(static_cast<std::size_t>(c.n_fft), 0.0);
  const int offset = (c.n_fft - c.win_length) / 2;
  for (int i = 0; i < c.win_length; ++i) {
    window[static_cast<std::size_t>(offset + i)] =
        0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / c.win_length);
  }
  a.cos_basis.resize(c.n_fft, bins);
  a.sin_basis.resize(c.n_fft, bins);
  for (int j = 0; j < c.n_fft; ++j) {
    for (int b = 0; b < bins; ++b) {
      // Reduce the phase index mod n_fft to keep the angle small and exact.
      const long phase = (static_cast<long>(j) * b) % c.n_fft;
      const double angle = 2.0 * std::numbers::pi * phase / c.n_fft;
      a.cos_basis(j, b) = window[static_cast<std::size_t>(j)] * std::cos(angle);
      a.sin_basis(j, b) = -window[static_cast<std::size_t>(j)] * std::sin(angle);
    }
  }

  a.filters = Matrix::Zero(bins, c.n_mels);
  const double mel_lo = hz_to_mel(c.fmin_hz);
  const double mel_hi = hz_to_mel(c.fmax_hz);
  std::vector<double> edges(static_cast<std::size_t>(c.n_mels + 2));
  for (int m = 0; m < c.n_mels + 2; ++m) {
    edges[static_cast<std::size_t>(m)] =
        mel_to_hz(mel_lo + (mel_hi - mel_lo) * m / (c.n_mels + 1));
  }
  for (int m = 0; m < c.n_mels; ++m) {
    const double left = edges[static_cast<std::size_t>(m)];
    const double center = edges[static_cast<std::size_t>(m + 1)];
    const double right = edges[static_cast<std::size_t>(m + 2)];
    const double norm = 2.0 / (right - left);
    for (int b = 0; b < bins; ++b) {
      const double f = static_cast<double>(b) * c.sample_rate_hz / c.n_fft;
      const double rise = (f - left) / (center - left);
      const double fall = (right - f) / (right - center);
      const double w = std::max(0.0, std::min(rise, fall));
      a.filters(b, m) = w * norm;
    }
  }
  return cache.emplace(key, std::move(a)).first->second;
}

// Sample index feeding frame t, column j; -1 for an implicit zero.
std::vector<Eigen::Index> frame_index(Eigen::Index length, Eigen::Index frames,
                                      const MelConfig& c) {
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(frames * c.n_fft));
  const Eigen::Index pad = c.n_fft / 2;
  for (Eigen::Index t = 0; t < frames; ++t) {
    for (Eigen::Index j = 0; j < c.n_fft; ++j) {
      Eigen::Index src;
      if (c.center) {
        src = t * c.hop_length + j - pad;
        if (src < 0) src = -src;
        if (src >= length) src = 2 * (length - 1) - src;
      } else {
        src = t * c.hop_length + j - (c.n_fft - c.win_length) / 2;
        if (src < 0 || src >= length) src = -1;
      }
      idx[static_cast<std::size_t>(t * c.n_fft + j)] = src;
    }
  }
  return idx;
}

struct Forward {
  Matrix re, im, mag, mel;
  std::vector<Eigen::Index> index;
};

Forward run_forward(std::span<const double> x, const MelConfig& c) {
  const auto length = static_cast<Eigen::Index>(x.size());
  const Eigen::Index frames = frame_count(length, c);
  const Analysis& a = analysis_for(c);
  Forward f;
  f.index = frame_index(length, frames, c);
  Matrix buf(frames, c.n_fft);
  for (Eigen::Index t = 0; t < frames; ++t) {
    for (Eigen::Index j = 0; j < c.n_fft; ++j) {
      const Eigen::Index src = f.index[static_cast<std::size_t>(t * c.n_fft + j)];
      buf(t, j) = src >= 0 ? x[static_cast<std::size_t>(src)] : 0.0;
    }
  }
  f.re.noalias() = buf * a.cos_basis;
  f.im.noalias() = buf * a.sin_basis;
  f.mag = (f.re.array().square() + f.im.array().square()).sqrt();
  f.mel.noalias() = f.mag * a.filters;
  return f;
}

void check_input(std::span<const double> x, const MelConfig& c) {
  c.validate();
  const auto length = static_cast<Eigen::Index>(x.size());
  if (length < c.win_length) {
    throw DataError("waveform shorter than win_length (" +
                    std::to_string(length) + " < " +
                    std::to_string(c.win_length) + ")");
  }
  if (c.center && length <= c.n_fft / 2) {
    throw DataError("waveform too short for reflect padding");
  }
  for (double v : x) {
    if (!std::isfinite(v)) throw DataError("waveform contains non-finite samples");
  }
}

}  // namespace

void MelConfig::validate() const {
  if (sample_rate_hz <= 0 || n_fft <= 0 || hop_length <= 0 || win_length <= 0 ||
      n_mels <= 0) {
    throw ConfigError("mel config: sizes must be positive");
  }
  if (!(hop_length <= win_length && win_length <= n_fft)) {
    throw ConfigError("mel config: need hop_length <= win_length <= n_fft");
  }
  if (!(0.0 <= fmin_hz && fmin_hz < fmax_hz && fmax_hz <= sample_rate_hz / 2.0)) {
    throw ConfigError("mel config: need 0 <= fmin < fmax <= sample_rate/2");
  }
}

double hz_to_mel(double hz) {
  if (hz < kMinLogHz) return hz / kLinearSlope;
  return kMinLogMel + std::log(hz / kMinLogHz) / kLogStep;
}

double mel_to_hz(double mel) {
  if (mel < kMinLogMel) return mel * kLinearSlope;
  return kMinLogHz * std::exp(kLogStep * (mel - kMinLogMel));
}

const Matrix& filterbank(const MelConfig& config) {
  config.validate();
  return analysis_for(config).filters;
}

Eigen::Index frame_count(Eigen::Index length, const MelConfig& c) {
  const Eigen::Index padded = c.center ? length + c.n_fft : length;
  const Eigen::Index span = c.center ? c.n_fft : c.win_length;
  if (padded < span) return 0;
  return (padded - span) / c.hop_length + 1;
}

MelSpectrogram compute_mel(std::span<const double> waveform,
                           const MelConfig& config) {
  check_input(waveform, config);
  Forward f = run_forward(waveform, config);
  MelSpectrogram out;
  out.config = config;
  out.values = f.mel.cwiseMax(kLogFloor).array().log();
  return out;
}

ag::Var log_mel(const ag::Var& waveform, const MelConfig& config) {
  if (waveform.cols() != 1) throw ConfigError("log_mel: waveform must be L x 1");
  std::span<const double> x(waveform.value().data(),
                            static_cast<std::size_t>(waveform.rows()));
  check_input(x, config);
  auto f = std::make_shared<Forward>(run_forward(x, config));
  Matrix out = f->mel.cwiseMax(kLogFloor).array().log();
  return ag::make_op(
      std::move(out), {waveform}, [waveform, f, config](const ag::Node& self) {
        const Analysis& a = analysis_for(config);
        Matrix gmel = (f->mel.array() > kLogFloor)
                          .select(self.grad.array() / f->mel.array(), 0.0);
        Matrix gmag(gmel.rows(), a.filters.rows());
        gmag.noalias() = gmel * a.filters.transpose();
        Matrix safe = f->mag.cwiseMax(1e-12);
        Matrix gre = gmag.cwiseProduct(f->re).cwiseQuotient(safe);
        Matrix gim = gmag.cwiseProduct(f->im).cwiseQuotient(safe);
        Matrix gbuf(gre.rows(), config.n_fft);
        gbuf.noalias() = gre * a.cos_basis.transpose();
        gbuf.noalias() += gim * a.sin_basis.transpose();
        ag::Matrix gx = ag::Matrix::Zero(waveform.rows(), 1);
        for (Eigen::Index t = 0; t < gbuf.rows(); ++t) {
          for (Eigen::Index j = 0; j < config.n_fft; ++j) {
            const Eigen::Index src =
                f->index[static_cast<std::size_t>(t * config.n_fft + j)];
            if (src >= 0) gx(src, 0) += gbuf(t, j);
          }
        }
        waveform.node()->accumulate(gx);
      });
}

}  // namespace vclone::mel
