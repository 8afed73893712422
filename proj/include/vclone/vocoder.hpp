// Copyright 2026 The vclone Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Miniature HiFi-GAN: a transposed-convolution generator with multi-receptive
// field residual blocks, multi-period and multi-scale discriminators, and the
// LS-GAN, feature-matching and mel-spectrogram losses.

#pragma once

#include "vclone/mel.hpp"
#include "vclone/nn.hpp"

#include <span>
#include <string>
#include <vector>

namespace vclone::vocoder {

using ag::Matrix;
using ag::Var;

struct VocoderConfig {
  int n_mels = 80;
  std::vector<int> upsample_factors{8, 8, 2, 2};
  int initial_channels = 128;  // halved after every upsampling stage
  std::vector<int> resblock_kernels{3, 5};
  std::vector<int> resblock_dilations{1, 3};
  std::vector<int> mpd_periods{2, 3, 5, 7, 11};
  int msd_scales = 3;
  int disc_channels = 16;
  double lambda_fm = 2.0;
  double lambda_mel = 45.0;
  int segment_frames = 32;  // training crop length in mel frames

  int hop_length() const;
  void validate(const mel::MelConfig& mel_config) const;  // throws ConfigError
};

struct DiscriminatorOutput {
  std::vector<Var> logits;                 // one score map per sub-discriminator
  std::vector<std::vector<Var>> features;  // per sub-discriminator layer outputs
};

struct Discrimination {
  DiscriminatorOutput mpd;
  DiscriminatorOutput msd;
};

class Generator {
 public:
  Generator() = default;
  Generator(nn::ParamStore& store, const VocoderConfig& config, nn::Rng& rng);
  // mel: T x n_mels -> waveform (T * hop) x 1 in [-1, 1].
  Var operator()(const Var& mel) const;

 private:
  struct ResBlock {
    std::vector<nn::Conv1d> dilated;
    std::vector<nn::Conv1d> plain;
  };
  struct Stage {
    nn::ConvTranspose1d up;
    std::vector<ResBlock> blocks;
  };
  VocoderConfig config_;
  nn::Conv1d pre_;
  std::vector<Stage> stages_;
  nn::Conv1d post_;
};

class Discriminators {
 public:
  Discriminators() = default;
  Discriminators(nn::ParamStore& store, const VocoderConfig& config, nn::Rng& rng);
  // waveform: L x 1 with L >= the largest period.
  Discrimination operator()(const Var& waveform) const;

 private:
  struct Stack {
    std::vector<nn::Conv1d> layers;
    nn::Conv1d post;
  };
  Stack make_period_stack(nn::ParamStore& store, const std::string& name, nn::Rng& rng);
  Stack make_scale_stack(nn::ParamStore& store, const std::string& name, nn::Rng& rng);
  static void run_stack(const Stack& stack, const Var& x, std::vector<Var>& features,
                        Var& logits);

  VocoderConfig config_;
  std::vector<Stack> period_stacks_;
  std::vector<Stack> scale_stacks_;
};

// Sum over sub-discriminators of mean((D(real)-1)^2) + mean(D(fake)^2).
Var discriminator_loss(std::span<const Var> real_logits, std::span<const Var> fake_logits);
// Sum over sub-discriminators of mean((D(fake)-1)^2).
Var generator_adversarial_loss(std::span<const Var> fake_logits);
// Sum over paired layers of mean |real - fake| (unweighted).
Var feature_matching_loss(const std::vector<std::vector<Var>>& real,
                          const std::vector<std::vector<Var>>& fake);
// mean |log_mel(real) - log_mel(fake)| (unweighted).
Var spectral_loss(const Var& real, const Var& fake, const mel::MelConfig& mel_config);

struct VocoderLosses {
  Var generator;      // adversarial + lambda_fm * fm + lambda_mel * spectral
  Var discriminator;
  double adversarial = 0.0;
  double feature_matching = 0.0;  // weighted
  double spectral = 0.0;          // weighted
};

VocoderLosses vocoder_losses(const Discriminators& disc, const Var& real, const Var& fake,
                             const VocoderConfig& config, const mel::MelConfig& mel_config);

class Vocoder {
 public:
  Vocoder(const VocoderConfig& config, const mel::MelConfig& mel_config, std::uint64_t seed);
  Vocoder(const Vocoder&) = delete;
  Vocoder& operator=(const Vocoder&) = delete;
  Vocoder(Vocoder&&) = default;
  Vocoder& operator=(Vocoder&&) = default;

  const VocoderConfig& config() const { return config_; }
  const mel::MelConfig& mel_config() const { return mel_config_; }
  nn::ParamStore& generator_params() { return gen_params_; }
  nn::ParamStore& discriminator_params() { return disc_params_; }
  const nn::ParamStore& generator_params() const { return gen_params_; }
  const nn::ParamStore& discriminator_params() const { return disc_params_; }
  const Generator& generator() const { return generator_; }
  const Discriminators& discriminators() const { return discriminators_; }

  // Inference; throws DataError on a mel-bin mismatch.
  std::vector<double> generate(const mel::MelSpectrogram& mel) const;
  Discrimination discriminate(std::span<const double> waveform) const;

 private:
  VocoderConfig config_;
  mel::MelConfig mel_config_;
  nn::ParamStore gen_params_;
  nn::ParamStore disc_params_;
  Generator generator_;
  Discriminators discriminators_;
};

}  // namespace vclone::vocoder
