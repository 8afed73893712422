// Copyright 2026 The vclone Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Named parameter storage, basic layers and the Adam optimizer.

#pragma once

#include "vclone/autograd.hpp"

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

namespace vclone::nn {

using ag::Matrix;
using ag::Var;

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  double normal(double mean, double stddev);
  double uniform(double lo, double hi);
  std::uint64_t next() { return engine_(); }
  std::mt19937_64& engine() { return engine_; }
  Matrix normal_matrix(Eigen::Index rows, Eigen::Index cols, double stddev);

 private:
  std::mt19937_64 engine_;
};

// Parameters keyed by hierarchical name ("encoder.0.attn.q.w"). Iteration
// order is lexicographic, which keeps optimizer updates and serialization
// deterministic.
class ParamStore {
 public:
  Var add(const std::string& name, Matrix init);
  const Var& get(const std::string& name) const;
  bool contains(const std::string& name) const;
  void erase(const std::string& name);
  const std::map<std::string, Var>& all() const { return params_; }
  std::size_t count() const;  // total scalar parameters
  void zero_grad();
  // Overwrites values of every parameter present in both stores.
  // Returns the number of tensors copied; shapes must agree.
  std::size_t copy_from(const ParamStore& other);
  ParamStore clone() const;

 private:
  std::map<std::string, Var> params_;
};

struct Linear {
  Var weight;  // in x out
  Var bias;    // 1 x out
  Linear() = default;
  Linear(ParamStore& store, const std::string& name, int in, int out, Rng& rng,
         bool with_bias = true);
  Var operator()(const Var& x) const;
};

struct Conv1d {
  Var weight;  // (kernel*in) x out
  Var bias;
  ag::ConvSpec spec;
  Conv1d() = default;
  // Padding defaults to "same" for stride 1.
  Conv1d(ParamStore& store, const std::string& name, int in, int out,
         int kernel, Rng& rng, int dilation = 1, int stride = 1,
         int padding = -1, bool with_bias = true, double init_std = -1.0);
  Var operator()(const Var& x) const;
};

struct ConvTranspose1d {
  Var weight;  // in x (kernel*out)
  Var bias;
  ag::ConvSpec spec;
  ConvTranspose1d() = default;
  ConvTranspose1d(ParamStore& store, const std::string& name, int in, int out,
                  int kernel, int stride, int padding, Rng& rng);
  Var operator()(const Var& x) const;
};

struct LayerNorm {
  Var gain;
  Var bias;
  LayerNorm() = default;
  LayerNorm(ParamStore& store, const std::string& name, int width);
  Var operator()(const Var& x) const;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 0.0;  // 0 disables global-norm clipping
};

class Adam {
 public:
  explicit Adam(AdamConfig config) : config_(config) {}

  // Applies one update to every parameter of `store` that has a gradient,
  // using `lr` in place of the configured rate when positive.
  void step(ParamStore& store, double lr = -1.0);

  const AdamConfig& config() const { return config_; }
  std::int64_t steps() const { return steps_; }
  void set_steps(std::int64_t s) { steps_ = s; }
  std::map<std::string, Matrix>& first_moment() { return m_; }
  std::map<std::string, Matrix>& second_moment() { return v_; }
  const std::map<std::string, Matrix>& first_moment() const { return m_; }
  const std::map<std::string, Matrix>& second_moment() const { return v_; }

 private:
  AdamConfig config_;
  std::int64_t steps_ = 0;
  std::map<std::string, Matrix> m_;
  std::map<std::string, Matrix> v_;
};

// Sinusoidal position table, rows x width.
Matrix positional_encoding(Eigen::Index rows, Eigen::Index width);

}  // namespace vclone::nn
