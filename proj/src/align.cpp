// Copyright 2026 The vclone Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "vclone/align.hpp"

#include "vclone/errors.hpp"

#include <cmath>
#include <limits>

namespace vclone::align {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(-std::abs(a - b)));
}

double log_beta(double a, double b) {
  return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
}

void normalize_rows(Matrix& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const double mx = m.row(r).maxCoeff();
    const double lse = mx + std::log((m.row(r).array() - mx).exp().sum());
    m.row(r).array() -= lse;
  }
}

void require_paths(Eigen::Index frames, Eigen::Index tokens) {
  if (tokens < 1) throw ConfigError("alignment needs at least one token");
  if (frames < tokens) {
    throw DataError("no monotone alignment: " + std::to_string(frames) +
                    " frames for " + std::to_string(tokens) + " tokens");
  }
}

}  // namespace

int Durations::total() const {
  int t = 0;
  for (int f : frames) t += f;
  return t;
}

SoftAlignment soft_alignment(const Matrix& text_keys, const Matrix& mel_queries) {
  if (text_keys.cols() != mel_queries.cols() || text_keys.cols() < 1) {
    throw ConfigError("soft_alignment: keys and queries need a shared width >= 1");
  }
  if (!text_keys.allFinite() || !mel_queries.allFinite()) {
    throw DataError("soft_alignment: non-finite input");
  }
  SoftAlignment out;
  ag::NoGradGuard no_grad;
  out.log_probs = ag::log_softmax_rows(ag::neg_sq_distance(ag::constant(mel_queries),
                                                           ag::constant(text_keys)))
                      .value();
  return out;
}

Matrix static_prior(Eigen::Index n, Eigen::Index frames, double strength) {
  if (!(strength > 0.0)) throw ConfigError("static_prior: strength must be positive");
  if (n < 1 || frames < 1) throw ConfigError("static_prior: empty shape");
  const double trials = static_cast<double>(n - 1);
  Matrix prior(frames, n);
  for (Eigen::Index t = 0; t < frames; ++t) {
    const double a = strength * static_cast<double>(t + 1);
    const double b = strength * static_cast<double>(frames - t);
    for (Eigen::Index k = 0; k < n; ++k) {
      const double kk = static_cast<double>(k);
      prior(t, k) = std::lgamma(trials + 1.0) - std::lgamma(kk + 1.0) -
                    std::lgamma(trials - kk + 1.0) +
                    log_beta(kk + a, trials - kk + b) - log_beta(a, b);
    }
  }
  normalize_rows(prior);
  return prior;
}

SoftAlignment apply_prior(const SoftAlignment& soft, const Matrix& log_prior) {
  if (soft.log_probs.rows() != log_prior.rows() ||
      soft.log_probs.cols() != log_prior.cols()) {
    throw ConfigError("apply_prior: shape mismatch");
  }
  SoftAlignment out{soft.log_probs + log_prior};
  normalize_rows(out.log_probs);
  return out;
}

double forward_sum(const Matrix& lp, Matrix* grad) {
  const Eigen::Index frames = lp.rows();
  const Eigen::Index n = lp.cols();
  require_paths(frames, n);

  // alpha(t, i): log mass of path prefixes ending at token i on frame t.
  Matrix alpha = Matrix::Constant(frames, n, kNegInf);
  alpha(0, 0) = lp(0, 0);
  for (Eigen::Index t = 1; t < frames; ++t) {
    const Eigen::Index lo = std::max<Eigen::Index>(0, n - (frames - t));
    const Eigen::Index hi = std::min(t, n - 1);
    for (Eigen::Index i = lo; i <= hi; ++i) {
      const double prev = i > 0 ? log_add(alpha(t - 1, i), alpha(t - 1, i - 1))
                                : alpha(t - 1, i);
      alpha(t, i) = lp(t, i) + prev;
    }
  }
  const double log_z = alpha(frames - 1, n - 1);

  if (grad != nullptr) {
    // beta(t, i): log mass of path suffixes after frame t given token i.
    Matrix beta = Matrix::Constant(frames, n, kNegInf);
    beta(frames - 1, n - 1) = 0.0;
    for (Eigen::Index t = frames - 2; t >= 0; --t) {
      for (Eigen::Index i = 0; i < n; ++i) {
        double acc = lp(t + 1, i) + beta(t + 1, i);
        if (i + 1 < n) acc = log_add(acc, lp(t + 1, i + 1) + beta(t + 1, i + 1));
        beta(t, i) = acc;
      }
    }
    grad->resize(frames, n);
    for (Eigen::Index t = 0; t < frames; ++t) {
      for (Eigen::Index i = 0; i < n; ++i) {
        const double post = alpha(t, i) + beta(t, i) - log_z;
        (*grad)(t, i) = post == kNegInf ? 0.0 : -std::exp(post);
      }
    }
  }
  return -log_z;
}

double forward_sum(const SoftAlignment& soft) {
  return forward_sum(soft.log_probs, nullptr);
}

ag::Var forward_sum_loss(const ag::Var& log_probs) {
  Matrix grad;
  Matrix out(1, 1);
  out(0, 0) = forward_sum(log_probs.value(), &grad);
  return ag::make_op(std::move(out), {log_probs},
                     [log_probs, grad = std::move(grad)](const ag::Node& self) {
                       log_probs.node()->accumulate(grad * self.grad(0, 0));
                     });
}

HardAlignment viterbi(const SoftAlignment& soft) {
  const Matrix& lp = soft.log_probs;
  const Eigen::Index frames = lp.rows();
  const Eigen::Index n = lp.cols();
  require_paths(frames, n);

  Matrix delta = Matrix::Constant(frames, n, kNegInf);
  std::vector<unsigned char> advanced(static_cast<std::size_t>(frames * n), 0);
  delta(0, 0) = lp(0, 0);
  for (Eigen::Index t = 1; t < frames; ++t) {
    const Eigen::Index lo = std::max<Eigen::Index>(0, n - (frames - t));
    const Eigen::Index hi = std::min(t, n - 1);
    for (Eigen::Index i = lo; i <= hi; ++i) {
      const double stay = delta(t - 1, i);
      const double move = i > 0 ? delta(t - 1, i - 1) : kNegInf;
      if (move > stay) {
        delta(t, i) = lp(t, i) + move;
        advanced[static_cast<std::size_t>(t * n + i)] = 1;
      } else {
        delta(t, i) = lp(t, i) + stay;
      }
    }
  }
  HardAlignment hard;
  hard.path.resize(static_cast<std::size_t>(frames));
  Eigen::Index i = n - 1;
  for (Eigen::Index t = frames - 1; t >= 0; --t) {
    hard.path[static_cast<std::size_t>(t)] = static_cast<int>(i);
    if (t > 0 && advanced[static_cast<std::size_t>(t * n + i)]) --i;
  }
  return hard;
}

double path_score(const Matrix& log_probs, const HardAlignment& hard) {
  double s = 0.0;
  for (std::size_t t = 0; t < hard.path.size(); ++t) {
    s += log_probs(static_cast<Eigen::Index>(t), hard.path[t]);
  }
  return s;
}

void validate_path(const HardAlignment& hard, int n) {
  const auto& p = hard.path;
  if (p.empty() || n < 1) throw DataError("alignment path is empty");
  if (p.front() != 0) throw DataError("alignment path must start at token 0");
  if (p.back() != n - 1) throw DataError("alignment path must end at the last token");
  for (std::size_t t = 1; t < p.size(); ++t) {
    const int step = p[t] - p[t - 1];
    if (step != 0 && step != 1) {
      throw DataError("alignment path must advance by 0 or 1 per frame");
    }
  }
}

Durations extract_durations(const HardAlignment& hard, int n) {
  validate_path(hard, n);
  Durations d;
  d.frames.assign(static_cast<std::size_t>(n), 0);
  for (int token : hard.path) ++d.frames[static_cast<std::size_t>(token)];
  return d;
}

HardAlignment path_from_durations(const Durations& durations) {
  HardAlignment hard;
  for (std::size_t i = 0; i < durations.frames.size(); ++i) {
    if (durations.frames[i] < 0) throw ConfigError("negative duration");
    hard.path.insert(hard.path.end(), static_cast<std::size_t>(durations.frames[i]),
                     static_cast<int>(i));
  }
  return hard;
}

AlignmentEncoder::AlignmentEncoder(nn::ParamStore& store, const std::string& name,
                                   const EncoderConfig& config, nn::Rng& rng)
    : config_(config),
      key_proj_(store, name + ".key", config.text_width, config.width, 3, rng),
      query_in_(store, name + ".query0", config.n_mels, config.width, 3, rng),
      query_out_(store, name + ".query1", config.width, config.width, 1, rng) {}

ag::Var AlignmentEncoder::log_alignment(const ag::Var& token_embeddings,
                                        const ag::Var& mel_frames) const {
  ag::Var keys = key_proj_(token_embeddings);
  ag::Var queries = query_out_(ag::relu(query_in_(mel_frames)));
  ag::Var logits = ag::neg_sq_distance(queries, keys);
  ag::Var prior = ag::constant(
      static_prior(token_embeddings.rows(), mel_frames.rows(), config_.prior_strength));
  return ag::log_softmax_rows(ag::add(ag::log_softmax_rows(logits), prior));
}

}  // namespace vclone::align
