// Copyright 2026 The vclone Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Non-autoregressive spectrogram synthesizer: a feed-forward transformer
// encoder over tokens, per-token duration and pitch predictors, a pitch
// embedding added to the encoder output, discrete upsampling by duration, and
// a second feed-forward transformer that decodes mel frames. An optional
// speaker table is broadcast-added to the token embeddings.

#pragma once

#include "vclone/align.hpp"
#include "vclone/data.hpp"
#include "vclone/mel.hpp"
#include "vclone/nn.hpp"
#include "vclone/pitch.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace vclone::acoustic {

using ag::Matrix;
using ag::Var;

struct LossWeights {
  double pitch = 0.1;     // alpha
  double duration = 0.1;  // beta
  double align = 1.0;     // gamma
};

struct AcousticConfig {
  int vocab_size = 0;
  int embed_dim = 192;
  int encoder_layers = 4;
  int decoder_layers = 4;
  int heads = 2;
  int conv_filter = 768;
  int conv_kernel = 3;
  int predictor_filter = 256;
  int predictor_kernel = 3;
  int n_mels = 80;
  int align_width = 32;
  double prior_strength = 1.0;
  double speaker_init_std = 0.05;
  LossWeights weights;
  int n_speakers = 1;

  void validate() const;  // throws ConfigError
  bool multi_speaker() const { return n_speakers > 1; }
};

struct LossBreakdown {
  double total = 0.0;
  double mel = 0.0;
  double pitch = 0.0;
  double duration = 0.0;
  double align = 0.0;
};

// L = mse(y_hat, y) + a*mse(p_hat, p) + b*mse(d_hat, d) + g*align_loss.
// Durations are compared in the log1p domain. Each MSE is a mean over
// elements.
Var total_loss(const Var& y_hat, const Var& y, const Var& p_hat, const Var& p,
               const Var& d_hat, const Var& d, const Var& align_loss,
               const LossWeights& weights, LossBreakdown* breakdown = nullptr);

// One training utterance in model terms.
struct TrainingItem {
  std::span<const int> token_ids;
  const Matrix* mel = nullptr;  // T x n_mels
  const pitch::PitchContour* pitch = nullptr;
  std::optional<int> speaker;  // table row, multi-speaker models only
};

struct Synthesis {
  mel::MelSpectrogram mel;
  align::Durations durations;
  std::vector<double> token_pitch;
};

class AcousticModel {
 public:
  AcousticModel(const AcousticConfig& config, std::uint64_t seed);
  AcousticModel(const AcousticModel&) = delete;
  AcousticModel& operator=(const AcousticModel&) = delete;
  AcousticModel(AcousticModel&&) = default;
  AcousticModel& operator=(AcousticModel&&) = default;

  const AcousticConfig& config() const { return config_; }
  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }

  // h = FFTr(x + Repeat(speakerEmb)), or FFTr(x) for single-speaker models.
  Var encode(std::span<const int> token_ids, std::optional<int> speaker) const;
  Var predict_duration(const Var& h) const;
  Var predict_pitch(const Var& h) const;
  // g = h + PitchEmbedding(p), p is n x 1.
  Var add_pitch_embedding(const Var& h, const Var& token_pitch) const;
  Var upsample(const Var& g, const align::Durations& durations) const;
  Var decode(const Var& upsampled) const;

  // Aligner output for a token sequence against mel frames.
  Var log_alignment(std::span<const int> token_ids, const Matrix& mel) const;
  align::Durations align_durations(std::span<const int> token_ids,
                                   const Matrix& mel) const;

  Var training_loss(const TrainingItem& item, LossBreakdown* breakdown = nullptr) const;

  // Inference with predicted durations (scaled by pace) and pitch.
  Synthesis synthesize(std::span<const int> token_ids, std::optional<int> speaker,
                       const mel::MelConfig& mel_config, double pace = 1.0) const;
  // Inference with durations forced by aligning against a reference mel.
  Synthesis synthesize_with_reference_durations(std::span<const int> token_ids,
                                                const mel::MelSpectrogram& reference,
                                                std::optional<int> speaker) const;

 private:
  struct FftLayer {
    nn::Linear q, k, v, o;
    nn::LayerNorm norm1, norm2;
    nn::Conv1d conv1, conv2;
  };
  struct Predictor {
    nn::Conv1d conv1, conv2;
    nn::LayerNorm norm1, norm2;
    nn::Linear out;
  };

  FftLayer make_layer(const std::string& name, nn::Rng& rng);
  Predictor make_predictor(const std::string& name, nn::Rng& rng);
  Var run_layer(const FftLayer& layer, const Var& x) const;
  Var run_stack(const std::vector<FftLayer>& stack, const Var& x) const;
  Var run_predictor(const Predictor& p, const Var& h) const;
  Var embed(std::span<const int> token_ids) const;
  void check_speaker(std::optional<int> speaker) const;
  Synthesis finish(const Var& g, align::Durations durations,
                   std::vector<double> token_pitch,
                   const mel::MelConfig& mel_config) const;

  AcousticConfig config_;
  nn::ParamStore params_;
  Var embedding_;
  Var speaker_table_;
  std::vector<FftLayer> encoder_;
  std::vector<FftLayer> decoder_;
  Predictor duration_predictor_;
  Predictor pitch_predictor_;
  nn::Conv1d pitch_embedding_;
  nn::Linear mel_proj_;
  align::AlignmentEncoder aligner_;
};

// Inference durations: max(1, round(expm1(d_hat) * pace)) per token.
align::Durations durations_from_prediction(const Matrix& d_hat, double pace);

}  // namespace vclone::acoustic
