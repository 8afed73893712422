// Copyright 2026 The vclone Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "vclone/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace vclone::nn {

double Rng::normal(double mean, double stddev) {
  std::normal_distribution<double> dist(mean, stddev);
  return dist(engine_);
}

double Rng::uniform(double lo, double hi) {
  std::uniform_real_distribution<double> dist(lo, hi);
  return dist(engine_);
}

Matrix Rng::normal_matrix(Eigen::Index rows, Eigen::Index cols, double stddev) {
  Matrix m(rows, cols);
  std::normal_distribution<double> dist(0.0, stddev);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(engine_);
  return m;
}

Var ParamStore::add(const std::string& name, Matrix init) {
  auto [it, inserted] = params_.emplace(name, ag::parameter(std::move(init)));
  if (!inserted) throw std::logic_error("duplicate parameter: " + name);
  return it->second;
}

const Var& ParamStore::get(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::out_of_range("no parameter: " + name);
  return it->second;
}

bool ParamStore::contains(const std::string& name) const {
  return params_.count(name) != 0;
}

void ParamStore::erase(const std::string& name) { params_.erase(name); }

std::size_t ParamStore::count() const {
  std::size_t n = 0;
  for (const auto& [_, p] : params_) n += static_cast<std::size_t>(p.value().size());
  return n;
}

void ParamStore::zero_grad() {
  for (auto& [_, p] : params_) {
    Var v = p;
    v.zero_grad();
  }
}

std::size_t ParamStore::copy_from(const ParamStore& other) {
  std::size_t copied = 0;
  for (auto& [name, p] : params_) {
    auto it = other.params_.find(name);
    if (it == other.params_.end()) continue;
    const Matrix& src = it->second.value();
    if (src.rows() != p.rows() || src.cols() != p.cols()) {
      throw std::invalid_argument("shape mismatch copying parameter " + name);
    }
    Var v = p;
    v.mutable_value() = src;
    ++copied;
  }
  return copied;
}

ParamStore ParamStore::clone() const {
  ParamStore out;
  for (const auto& [name, p] : params_) out.add(name, p.value());
  return out;
}

Linear::Linear(ParamStore& store, const std::string& name, int in, int out,
               Rng& rng, bool with_bias) {
  weight = store.add(name + ".w",
                     rng.normal_matrix(in, out, std::sqrt(1.0 / in)));
  if (with_bias) bias = store.add(name + ".b", Matrix::Zero(1, out));
}

Var Linear::operator()(const Var& x) const {
  Var y = ag::matmul(x, weight);
  return bias.defined() ? ag::add_row(y, bias) : y;
}

Conv1d::Conv1d(ParamStore& store, const std::string& name, int in, int out,
               int kernel, Rng& rng, int dilation, int stride, int padding,
               bool with_bias, double init_std) {
  spec.kernel = kernel;
  spec.stride = stride;
  spec.dilation = dilation;
  spec.padding = padding >= 0 ? padding : dilation * (kernel - 1) / 2;
  const double stddev =
      init_std > 0.0 ? init_std : std::sqrt(1.0 / (kernel * in));
  weight = store.add(name + ".w", rng.normal_matrix(kernel * in, out, stddev));
  if (with_bias) bias = store.add(name + ".b", Matrix::Zero(1, out));
}

Var Conv1d::operator()(const Var& x) const {
  return ag::conv1d(x, weight, bias, spec);
}

ConvTranspose1d::ConvTranspose1d(ParamStore& store, const std::string& name,
                                 int in, int out, int kernel, int stride,
                                 int padding, Rng& rng) {
  spec.kernel = kernel;
  spec.stride = stride;
  spec.padding = padding;
  weight = store.add(name + ".w",
                     rng.normal_matrix(in, kernel * out,
                                       std::sqrt(1.0 / (in * kernel / stride))));
  bias = store.add(name + ".b", Matrix::Zero(1, out));
}

Var ConvTranspose1d::operator()(const Var& x) const {
  return ag::conv_transpose1d(x, weight, bias, spec);
}

LayerNorm::LayerNorm(ParamStore& store, const std::string& name, int width) {
  gain = store.add(name + ".g", Matrix::Ones(1, width));
  bias = store.add(name + ".b", Matrix::Zero(1, width));
}

Var LayerNorm::operator()(const Var& x) const {
  return ag::layer_norm_rows(x, gain, bias);
}

void Adam::step(ParamStore& store, double lr) {
  const double rate = lr > 0.0 ? lr : config_.lr;
  ++steps_;

  double scale = 1.0;
  if (config_.clip_norm > 0.0) {
    double sq = 0.0;
    for (const auto& [_, p] : store.all())
      if (p.has_grad()) sq += p.grad().squaredNorm();
    const double norm = std::sqrt(sq);
    if (norm > config_.clip_norm) scale = config_.clip_norm / norm;
  }

  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(steps_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(steps_));
  for (const auto& [name, p] : store.all()) {
    if (!p.has_grad()) continue;
    Matrix g = p.grad() * scale;
    auto& m = m_[name];
    auto& v = v_[name];
    if (m.size() == 0) {
      m = Matrix::Zero(p.rows(), p.cols());
      v = Matrix::Zero(p.rows(), p.cols());
    }
    m = config_.beta1 * m + (1.0 - config_.beta1) * g;
    v = config_.beta2 * v + (1.0 - config_.beta2) * g.cwiseAbs2();
    Var param = p;
    param.mutable_value().array() -=
        rate * (m.array() / bc1) / ((v.array() / bc2).sqrt() + config_.eps);
  }
}

Matrix positional_encoding(Eigen::Index rows, Eigen::Index width) {
  Matrix pe(rows, width);
  for (Eigen::Index t = 0; t < rows; ++t) {
    for (Eigen::Index i = 0; i < width; ++i) {
      const double rate =
          std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / width);
      pe(t, i) = (i % 2 == 0) ? std::sin(t * rate) : std::cos(t * rate);
    }
  }
  return pe;
}

}  // namespace vclone::nn
