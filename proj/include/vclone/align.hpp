// Copyright 2026 The vclone Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Learnable monotonic text-to-mel alignment: soft alignment from pairwise
// distances, a static beta-binomial prior, the forward-sum loss over all
// monotone surjective paths, and Viterbi hard durations.

#pragma once

#include "vclone/autograd.hpp"
#include "vclone/nn.hpp"

#include <string>
#include <vector>

namespace vclone::align {

using ag::Matrix;

// T x n; every row is a log-distribution over the n text tokens.
struct SoftAlignment {
  Matrix log_probs;

  Eigen::Index frames() const { return log_probs.rows(); }
  Eigen::Index tokens() const { return log_probs.cols(); }
};

// path[t] is the token emitting frame t. Monotone, starts at 0, ends at n-1,
// steps of 0 or 1.
struct HardAlignment {
  std::vector<int> path;
};

struct Durations {
  std::vector<int> frames;

  int total() const;
};

// log_probs[t, i] = log_softmax_i(-||query[t] - key[i]||^2).
SoftAlignment soft_alignment(const Matrix& text_keys, const Matrix& mel_queries);

// Row t is the log pmf of BetaBinomial(n-1, strength*(t+1), strength*(T-t)).
Matrix static_prior(Eigen::Index n, Eigen::Index frames, double strength);

// Adds the log prior and renormalizes every row.
SoftAlignment apply_prior(const SoftAlignment& soft, const Matrix& log_prior);

// -log of the total probability over monotone surjective paths (no blank).
double forward_sum(const SoftAlignment& soft);
// Same loss with its gradient d loss / d log_probs (negative posteriors).
double forward_sum(const Matrix& log_probs, Matrix* grad);
ag::Var forward_sum_loss(const ag::Var& log_probs);

// Highest-scoring valid path; ties keep the current token.
HardAlignment viterbi(const SoftAlignment& soft);
double path_score(const Matrix& log_probs, const HardAlignment& hard);

void validate_path(const HardAlignment& hard, int n);
Durations extract_durations(const HardAlignment& hard, int n);
// Frame-to-token map implied by repeating token i durations[i] times.
HardAlignment path_from_durations(const Durations& durations);

struct EncoderConfig {
  int text_width = 0;  // token embedding width
  int n_mels = 80;
  int width = 32;
  double prior_strength = 1.0;
};

// Text keys: one conv over token embeddings. Mel queries: two convs over
// mel frames.
class AlignmentEncoder {
 public:
  AlignmentEncoder() = default;
  AlignmentEncoder(nn::ParamStore& store, const std::string& name,
                   const EncoderConfig& config, nn::Rng& rng);

  // Prior-adjusted, row-normalized log alignment (T x n), differentiable.
  ag::Var log_alignment(const ag::Var& token_embeddings,
                        const ag::Var& mel_frames) const;

  const EncoderConfig& config() const { return config_; }

 private:
  EncoderConfig config_;
  nn::Conv1d key_proj_;
  nn::Conv1d query_in_;
  nn::Conv1d query_out_;
};

}  // namespace vclone::align
