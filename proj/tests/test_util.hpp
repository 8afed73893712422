// Copyright 2026 The vclone Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include "vclone/autograd.hpp"
#include "vclone/data.hpp"
#include "vclone/toy_corpus.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

namespace vclone::test_util {

class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("vclone_test_" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6});
}

// Central difference of f with respect to entry (r, c) of *x.
inline double central_difference(const std::function<double()>& f, ag::Matrix& x,
                                 Eigen::Index r, Eigen::Index c, double eps = 1e-4) {
  const double saved = x(r, c);
  x(r, c) = saved + eps;
  const double up = f();
  x(r, c) = saved - eps;
  const double down = f();
  x(r, c) = saved;
  return (up - down) / (2.0 * eps);
}

// Largest relative error between backprop gradients and central differences
// over every entry of `inputs` (or every `stride`-th entry).
inline double max_gradient_error(const std::function<ag::Var()>& build,
                                 std::vector<ag::Var> inputs, double eps = 1e-4,
                                 Eigen::Index stride = 1) {
  for (auto& v : inputs) v.zero_grad();
  ag::backward(build());
  std::vector<ag::Matrix> analytic;
  for (auto& v : inputs) {
    analytic.push_back(v.has_grad() ? v.grad() : ag::Matrix::Zero(v.rows(), v.cols()));
  }
  double worst = 0.0;
  auto f = [&] {
    ag::NoGradGuard guard;
    return build().item();
  };
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    ag::Matrix& x = inputs[k].mutable_value();
    for (Eigen::Index i = 0; i < x.size(); i += stride) {
      const Eigen::Index r = i / x.cols();
      const Eigen::Index c = i % x.cols();
      const double numeric = central_difference(f, x, r, c, eps);
      worst = std::max(worst, rel_err(analytic[k](r, c), numeric));
    }
  }
  return worst;
}

inline ag::Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng,
                                double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  ag::Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

// In-memory example rendered with a toy voice; no files are written.
inline data::Example toy_example(const std::string& text, const toy::Voice& voice,
                                 const data::Tokenizer& tokenizer,
                                 const mel::MelConfig& mel_config = {},
                                 const pitch::YinConfig& yin_config = {},
                                 const std::string& id = "utt") {
  data::Example ex;
  ex.waveform = toy::render(text, voice);
  ex.record = {"/toy/" + id + ".wav", text, voice.speaker_id,
               static_cast<double>(ex.waveform.size()) / mel_config.sample_rate_hz};
  ex.tokens = tokenizer.tokenize(text);
  ex.mel = mel::compute_mel(ex.waveform, mel_config);
  ex.pitch = pitch::estimate_f0(ex.waveform, yin_config, static_cast<std::size_t>(ex.mel.frames()));
  return ex;
}

}  // namespace vclone::test_util
