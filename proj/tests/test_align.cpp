// Copyright 2026 The vclone Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "vclone/align.hpp"
#include "vclone/errors.hpp"

#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <limits>

namespace vclone::align {
namespace {

// Every monotone path that starts at token 0, ends at n-1 and advances by
// 0 or 1 per frame.
std::vector<std::vector<int>> enumerate_paths(int n, int frames) {
  std::vector<std::vector<int>> out;
  std::vector<int> path(static_cast<std::size_t>(frames), 0);
  std::function<void(int)> rec = [&](int t) {
    if (t == frames) {
      if (path.back() == n - 1) out.push_back(path);
      return;
    }
    for (int step = 0; step <= 1; ++step) {
      const int next = path[t - 1] + step;
      if (next >= n) continue;
      path[t] = next;
      rec(t + 1);
    }
  };
  if (frames >= 1) rec(1);
  return out;
}

double score(const Matrix& lp, const std::vector<int>& path) {
  double s = 0.0;
  for (std::size_t t = 0; t < path.size(); ++t) s += lp(static_cast<Eigen::Index>(t), path[t]);
  return s;
}

// Argmax path; among equal scores the one that is greatest when compared
// from the last frame backward.
std::vector<int> oracle_best(const Matrix& lp) {
  const auto paths = enumerate_paths(static_cast<int>(lp.cols()), static_cast<int>(lp.rows()));
  std::vector<int> best;
  double best_score = -std::numeric_limits<double>::infinity();
  for (const auto& p : paths) {
    const double s = score(lp, p);
    const bool later = best.empty() || std::lexicographical_compare(best.rbegin(), best.rend(),
                                                                    p.rbegin(), p.rend());
    if (s > best_score || (s == best_score && later)) {
      best = p;
      best_score = s;
    }
  }
  return best;
}

double oracle_forward_sum(const Matrix& lp) {
  std::vector<double> scores;
  for (const auto& p : enumerate_paths(static_cast<int>(lp.cols()), static_cast<int>(lp.rows()))) {
    scores.push_back(score(lp, p));
  }
  const double m = *std::max_element(scores.begin(), scores.end());
  double acc = 0.0;
  for (double s : scores) acc += std::exp(s - m);
  return -(m + std::log(acc));
}

TEST(Enumeration, PathCountsAreBinomial) {
  EXPECT_EQ(enumerate_paths(1, 4).size(), 1u);
  EXPECT_EQ(enumerate_paths(3, 6).size(), 10u);  // C(5, 2)
  EXPECT_EQ(enumerate_paths(4, 6).size(), 10u);  // C(5, 3)
  EXPECT_EQ(enumerate_paths(4, 3).size(), 0u);
}

TEST(ForwardSum, MatchesEnumerationOnAllSmallShapes) {
  std::mt19937_64 rng(1);
  for (int n = 1; n <= 4; ++n) {
    for (int frames = n; frames <= 6; ++frames) {
      for (int rep = 0; rep < 5; ++rep) {
        const Matrix lp = test_util::random_matrix(frames, n, rng, 2.0);
        EXPECT_NEAR(forward_sum(SoftAlignment{lp}), oracle_forward_sum(lp), 1e-6)
            << "n=" << n << " T=" << frames;
      }
    }
  }
}

TEST(ForwardSum, RejectsImpossibleShapes) {
  EXPECT_THROW(forward_sum(SoftAlignment{Matrix::Zero(2, 3)}), DataError);
}

TEST(ForwardSum, GradientIsNegativePosterior) {
  std::mt19937_64 rng(2);
  Matrix lp = test_util::random_matrix(6, 3, rng);
  Matrix grad;
  forward_sum(lp, &grad);
  for (Eigen::Index t = 0; t < lp.rows(); ++t) EXPECT_NEAR(grad.row(t).sum(), -1.0, 1e-9);
  auto f = [&] { return forward_sum(SoftAlignment{lp}); };
  for (Eigen::Index t = 0; t < lp.rows(); ++t) {
    for (Eigen::Index i = 0; i < lp.cols(); ++i) {
      const double numeric = test_util::central_difference(f, lp, t, i);
      EXPECT_LT(test_util::rel_err(grad(t, i), numeric), 1e-4);
    }
  }
}

TEST(ForwardSum, AutogradGradientCheck) {
  std::mt19937_64 rng(3);
  ag::Var x = ag::parameter(test_util::random_matrix(5, 3, rng));
  EXPECT_LT(test_util::max_gradient_error(
                [&] { return forward_sum_loss(ag::log_softmax_rows(x)); }, {x}),
            1e-4);
}

TEST(Viterbi, MatchesEnumerationOnRandomScores) {
  std::mt19937_64 rng(4);
  for (int n = 1; n <= 4; ++n) {
    for (int frames = n; frames <= 6; ++frames) {
      for (int rep = 0; rep < 5; ++rep) {
        const Matrix lp = test_util::random_matrix(frames, n, rng);
        const auto hard = viterbi(SoftAlignment{lp});
        EXPECT_EQ(hard.path, oracle_best(lp)) << "n=" << n << " T=" << frames;
        EXPECT_NEAR(path_score(lp, hard), score(lp, oracle_best(lp)), 1e-12);
      }
    }
  }
}

TEST(Viterbi, TieBreakOnIntegerScores) {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> small(-1, 1);
  int tied_cases = 0;
  for (int n = 1; n <= 4; ++n) {
    for (int frames = n; frames <= 6; ++frames) {
      for (int rep = 0; rep < 20; ++rep) {
        Matrix lp(frames, n);
        for (Eigen::Index k = 0; k < lp.size(); ++k) lp.data()[k] = small(rng);
        const auto paths = enumerate_paths(n, frames);
        const double best = score(lp, oracle_best(lp));
        int optimal = 0;
        for (const auto& p : paths) optimal += score(lp, p) == best ? 1 : 0;
        tied_cases += optimal > 1 ? 1 : 0;
        EXPECT_EQ(viterbi(SoftAlignment{lp}).path, oracle_best(lp));
      }
    }
  }
  EXPECT_GT(tied_cases, 50);
  // All-zero scores: backtracking stays on a token when tied, so the path advances early.
  EXPECT_EQ(viterbi(SoftAlignment{Matrix::Zero(5, 3)}).path, (std::vector<int>{0, 1, 2, 2, 2}));
}

TEST(Prior, BetaBinomialRows) {
  const int n = 4;
  const int frames = 7;
  const double s = 1.5;
  const Matrix prior = static_prior(n, frames, s);
  auto lbeta = [](double a, double b) { return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b); };
  for (int t = 0; t < frames; ++t) {
    const double a = s * (t + 1);
    const double b = s * (frames - t);
    double total = 0.0;
    for (int k = 0; k < n; ++k) {
      const double log_choose =
          std::lgamma(n) - std::lgamma(k + 1.0) - std::lgamma(static_cast<double>(n - k));
      const double expected = log_choose + lbeta(k + a, n - 1 - k + b) - lbeta(a, b);
      EXPECT_NEAR(prior(t, k), expected, 1e-9);
      total += std::exp(prior(t, k));
    }
    EXPECT_NEAR(total, 1.0, 1e-9);
  }
  EXPECT_EQ(static_prior(1, 5, 1.0), Matrix::Zero(5, 1));
  // Early frames favor early tokens.
  EXPECT_GT(prior(0, 0), prior(0, n - 1));
  EXPECT_GT(prior(frames - 1, n - 1), prior(frames - 1, 0));
}

TEST(Prior, ApplyRenormalizes) {
  std::mt19937_64 rng(6);
  const SoftAlignment soft =
      soft_alignment(test_util::random_matrix(3, 4, rng), test_util::random_matrix(6, 4, rng));
  const SoftAlignment adjusted = apply_prior(soft, static_prior(3, 6, 1.0));
  for (Eigen::Index t = 0; t < 6; ++t) {
    EXPECT_NEAR(soft.log_probs.row(t).array().exp().sum(), 1.0, 1e-12);
    EXPECT_NEAR(adjusted.log_probs.row(t).array().exp().sum(), 1.0, 1e-12);
  }
  EXPECT_THROW(apply_prior(soft, static_prior(3, 5, 1.0)), ConfigError);
}

TEST(SoftAlignment, NearestKeyWins) {
  Matrix keys = (Matrix(2, 1) << 0.0, 10.0).finished();
  Matrix queries = (Matrix(3, 1) << 0.1, 9.0, 0.0).finished();
  const auto soft = soft_alignment(keys, queries);
  EXPECT_GT(soft.log_probs(0, 0), soft.log_probs(0, 1));
  EXPECT_GT(soft.log_probs(1, 1), soft.log_probs(1, 0));
  EXPECT_NEAR(soft.log_probs(2, 0), -std::log1p(std::exp(-100.0)), 1e-12);
}

TEST(Durations, ExtractAndRebuild) {
  const HardAlignment hard{{0, 0, 1, 2, 2, 2}};
  const Durations d = extract_durations(hard, 3);
  EXPECT_EQ(d.frames, (std::vector<int>{2, 1, 3}));
  EXPECT_EQ(d.total(), 6);
  EXPECT_EQ(path_from_durations(d).path, hard.path);
  EXPECT_THROW(validate_path(HardAlignment{{0, 2}}, 3), DataError);
  EXPECT_THROW(validate_path(HardAlignment{{1, 2}}, 3), DataError);
  EXPECT_THROW(validate_path(HardAlignment{{0, 1}}, 3), DataError);
  EXPECT_NO_THROW(validate_path(hard, 3));
}

TEST(Encoder, LogAlignmentRowsNormalized) {
  nn::ParamStore store;
  nn::Rng rng(7);
  EncoderConfig cfg;
  cfg.text_width = 6;
  cfg.n_mels = 5;
  cfg.width = 4;
  AlignmentEncoder enc(store, "align", cfg, rng);
  std::mt19937_64 g(8);
  const auto la = enc.log_alignment(ag::constant(test_util::random_matrix(3, 6, g)),
                                    ag::constant(test_util::random_matrix(9, 5, g)));
  ASSERT_EQ(la.rows(), 9);
  ASSERT_EQ(la.cols(), 3);
  for (Eigen::Index t = 0; t < 9; ++t) {
    EXPECT_NEAR(la.value().row(t).array().exp().sum(), 1.0, 1e-12);
  }
}

}  // namespace
}  // namespace vclone::align
