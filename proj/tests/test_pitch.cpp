// Copyright 2026 The vclone Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "vclone/errors.hpp"
#include "vclone/pitch.hpp"

#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

namespace vclone::pitch {
namespace {

std::vector<double> sine(double hz, int n, int sr, double amp) {
  std::vector<double> w(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) w[i] = amp * std::sin(2.0 * std::numbers::pi * hz * i / sr);
  return w;
}

TEST(Yin, DifferenceMatchesDoubleLoop) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> frame(256);
  for (auto& v : frame) v = n(rng);
  const std::size_t tau_max = 100;
  const auto d = yin_difference(frame, tau_max);
  ASSERT_EQ(d.size(), tau_max);
  const std::size_t w = frame.size() - tau_max;
  for (std::size_t tau = 0; tau < tau_max; ++tau) {
    double acc = 0.0;
    for (std::size_t j = 0; j < w; ++j) acc += (frame[j] - frame[j + tau]) * (frame[j] - frame[j + tau]);
    EXPECT_NEAR(d[tau], acc, 1e-9 * std::max(1.0, acc));
  }
}

TEST(Yin, CumulativeMeanNormalization) {
  const std::vector<double> d{0.0, 2.0, 1.0, 3.0};
  const auto c = cmnd(d);
  ASSERT_EQ(c.size(), 4u);
  EXPECT_DOUBLE_EQ(c[0], 1.0);
  EXPECT_DOUBLE_EQ(c[1], 2.0 / (2.0 / 1.0));
  EXPECT_DOUBLE_EQ(c[2], 1.0 / (3.0 / 2.0));
  EXPECT_DOUBLE_EQ(c[3], 3.0 / (6.0 / 3.0));
  const auto z = cmnd(std::vector<double>{0.0, 0.0, 0.0});
  EXPECT_DOUBLE_EQ(z[1], 1.0);
  EXPECT_DOUBLE_EQ(z[2], 1.0);
}

class YinSine : public ::testing::TestWithParam<double> {};

TEST_P(YinSine, RecoversFrequencyOnInteriorFrames) {
  const double hz = GetParam();
  YinConfig c;
  const auto w = sine(hz, c.sample_rate_hz, c.sample_rate_hz, 0.5);
  const auto contour = estimate_f0(w, c);
  ASSERT_EQ(contour.size(), w.size() / c.hop_length + 1);
  const std::size_t edge = static_cast<std::size_t>(c.frame_length / 2 / c.hop_length) + 1;
  for (std::size_t t = edge; t + edge < contour.size(); ++t) {
    ASSERT_TRUE(contour.voiced[t]) << "frame " << t;
    EXPECT_NEAR(contour.f0_hz[t], hz, 0.01 * hz) << "frame " << t;
  }
}

INSTANTIATE_TEST_SUITE_P(Tones, YinSine, ::testing::Values(110.0, 220.0, 440.0));

TEST(Yin, AmplitudeScalingInvariance) {
  YinConfig c;
  const auto w = sine(220.0, 8000, c.sample_rate_hz, 0.5);
  std::vector<double> scaled(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) scaled[i] = w[i] * 0.25;
  const auto a = estimate_f0(w, c);
  const auto b = estimate_f0(scaled, c);
  EXPECT_EQ(a.voiced, b.voiced);
  EXPECT_EQ(a.f0_hz, b.f0_hz);
}

TEST(Yin, SilenceIsUnvoiced) {
  YinConfig c;
  std::vector<double> w(4096, 0.0);
  const auto contour = estimate_f0(w, c);
  for (std::size_t t = 0; t < contour.size(); ++t) {
    EXPECT_FALSE(contour.voiced[t]);
    EXPECT_EQ(contour.f0_hz[t], 0.0);
  }
}

TEST(Yin, WhiteNoiseIsMostlyUnvoiced) {
  YinConfig c;
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> w(22050);
  for (auto& v : w) v = u(rng);
  const auto contour = estimate_f0(w, c);
  std::size_t voiced = 0;
  for (bool v : contour.voiced) voiced += v ? 1 : 0;
  EXPECT_LT(static_cast<double>(voiced), 0.5 * static_cast<double>(contour.size()));
}

TEST(Yin, FrameOverride) {
  YinConfig c;
  const auto w = sine(220.0, 4000, c.sample_rate_hz, 0.5);
  EXPECT_EQ(estimate_f0(w, c, 7).size(), 7u);
}

TEST(Yin, ConfigValidation) {
  YinConfig c;
  c.fmin_hz = 5000.0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Pitch, TokenAverageUsesVoicedFramesOnly) {
  PitchContour c;
  c.f0_hz = {100.0, 0.0, 120.0, 200.0, 0.0, 0.0};
  c.voiced = {true, false, true, true, false, false};
  const std::vector<int> durations{3, 1, 2};
  const auto avg = average_pitch_per_token(c, durations);
  ASSERT_EQ(avg.size(), 3u);
  EXPECT_DOUBLE_EQ(avg[0], 110.0);
  EXPECT_DOUBLE_EQ(avg[1], 200.0);
  EXPECT_DOUBLE_EQ(avg[2], 0.0);
}

TEST(Pitch, CacheRoundTrip) {
  test_util::TempDir dir;
  PitchContour c;
  c.f0_hz = {0.0, 110.5, 220.25};
  c.voiced = {false, true, true};
  write_pitch_cache(dir.path() / "p.bin", c);
  const auto back = read_pitch_cache(dir.path() / "p.bin");
  EXPECT_EQ(back.voiced, c.voiced);
  ASSERT_EQ(back.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_FLOAT_EQ(back.f0_hz[i], c.f0_hz[i]);
  EXPECT_EQ(std::filesystem::file_size(dir.path() / "p.bin"), 4u + 3u * 4u + 3u);
}

}  // namespace
}  // namespace vclone::pitch
