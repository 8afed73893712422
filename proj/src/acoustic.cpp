// Copyright 2026 The vclone Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "vclone/acoustic.hpp"

#include "vclone/errors.hpp"

#include <cmath>

namespace vclone::acoustic {

namespace {

Matrix column(std::span<const double> values) {
  Matrix m(static_cast<Eigen::Index>(values.size()), 1);
  for (std::size_t i = 0; i < values.size(); ++i) {
    m(static_cast<Eigen::Index>(i), 0) = values[i];
  }
  return m;
}

}  // namespace

void AcousticConfig::validate() const {
  if (vocab_size < 1) throw ConfigError("acoustic config: vocab_size must be >= 1");
  if (embed_dim < 1 || heads < 1 || embed_dim % heads != 0) {
    throw ConfigError("acoustic config: embed_dim must be a positive multiple of heads");
  }
  if (encoder_layers < 0 || decoder_layers < 0 || conv_filter < 1 ||
      predictor_filter < 1 || n_mels < 1 || align_width < 1) {
    throw ConfigError("acoustic config: layer sizes must be positive");
  }
  if (conv_kernel < 1 || conv_kernel % 2 == 0 || predictor_kernel < 1 ||
      predictor_kernel % 2 == 0) {
    throw ConfigError("acoustic config: kernels must be odd");
  }
  if (weights.pitch < 0 || weights.duration < 0 || weights.align < 0) {
    throw ConfigError("acoustic config: loss weights must be non-negative");
  }
  if (n_speakers < 1) throw ConfigError("acoustic config: n_speakers must be >= 1");
  if (!(prior_strength > 0.0)) throw ConfigError("acoustic config: prior_strength");
}

Var total_loss(const Var& y_hat, const Var& y, const Var& p_hat, const Var& p,
               const Var& d_hat, const Var& d, const Var& align_loss,
               const LossWeights& weights, LossBreakdown* breakdown) {
  if (y_hat.rows() != y.rows() || y_hat.cols() != y.cols() ||
      p_hat.rows() != p.rows() || d_hat.rows() != d.rows() ||
      p_hat.rows() != d_hat.rows()) {
    throw ConfigError("total_loss: shape mismatch");
  }
  Var mel_term = ag::mse(y_hat, y);
  Var pitch_term = ag::mse(p_hat, p);
  Var dur_term = ag::mse(d_hat, d);
  Var loss = ag::add(
      ag::add(mel_term, ag::scale(pitch_term, weights.pitch)),
      ag::add(ag::scale(dur_term, weights.duration),
              ag::scale(align_loss, weights.align)));
  if (breakdown != nullptr) {
    breakdown->mel = mel_term.item();
    breakdown->pitch = pitch_term.item();
    breakdown->duration = dur_term.item();
    breakdown->align = align_loss.item();
    breakdown->total = loss.item();
  }
  return loss;
}

AcousticModel::AcousticModel(const AcousticConfig& config, std::uint64_t seed)
    : config_(config) {
  config_.validate();
  nn::Rng rng(seed);
  const int d = config_.embed_dim;
  embedding_ = params_.add("embedding", rng.normal_matrix(config_.vocab_size, d, 0.3));
  if (config_.multi_speaker()) {
    speaker_table_ = params_.add(
        "speaker_table", rng.normal_matrix(config_.n_speakers, d, config_.speaker_init_std));
  }
  for (int i = 0; i < config_.encoder_layers; ++i) {
    encoder_.push_back(make_layer("encoder." + std::to_string(i), rng));
  }
  duration_predictor_ = make_predictor("duration_predictor", rng);
  pitch_predictor_ = make_predictor("pitch_predictor", rng);
  pitch_embedding_ = nn::Conv1d(params_, "pitch_embedding", 1, d, 3, rng, 1, 1, -1,
                                true, 1e-3);
  for (int i = 0; i < config_.decoder_layers; ++i) {
    decoder_.push_back(make_layer("decoder." + std::to_string(i), rng));
  }
  mel_proj_ = nn::Linear(params_, "mel_proj", d, config_.n_mels, rng);
  align::EncoderConfig ac{d, config_.n_mels, config_.align_width, config_.prior_strength};
  aligner_ = align::AlignmentEncoder(params_, "aligner", ac, rng);
}

AcousticModel::FftLayer AcousticModel::make_layer(const std::string& name, nn::Rng& rng) {
  const int d = config_.embed_dim;
  FftLayer l;
  l.q = nn::Linear(params_, name + ".attn.q", d, d, rng);
  l.k = nn::Linear(params_, name + ".attn.k", d, d, rng);
  l.v = nn::Linear(params_, name + ".attn.v", d, d, rng);
  l.o = nn::Linear(params_, name + ".attn.o", d, d, rng);
  l.norm1 = nn::LayerNorm(params_, name + ".norm1", d);
  l.conv1 = nn::Conv1d(params_, name + ".conv1", d, config_.conv_filter,
                       config_.conv_kernel, rng);
  l.conv2 = nn::Conv1d(params_, name + ".conv2", config_.conv_filter, d,
                       config_.conv_kernel, rng);
  l.norm2 = nn::LayerNorm(params_, name + ".norm2", d);
  return l;
}

AcousticModel::Predictor AcousticModel::make_predictor(const std::string& name,
                                                       nn::Rng& rng) {
  const int d = config_.embed_dim;
  const int f = config_.predictor_filter;
  Predictor p;
  p.conv1 = nn::Conv1d(params_, name + ".conv1", d, f, config_.predictor_kernel, rng);
  p.norm1 = nn::LayerNorm(params_, name + ".norm1", f);
  p.conv2 = nn::Conv1d(params_, name + ".conv2", f, f, config_.predictor_kernel, rng);
  p.norm2 = nn::LayerNorm(params_, name + ".norm2", f);
  p.out = nn::Linear(params_, name + ".out", f, 1, rng);
  return p;
}

Var AcousticModel::run_layer(const FftLayer& layer, const Var& x) const {
  const int heads = config_.heads;
  const int dh = config_.embed_dim / heads;
  Var q = layer.q(x);
  Var k = layer.k(x);
  Var v = layer.v(x);
  std::vector<Var> outs;
  outs.reserve(static_cast<std::size_t>(heads));
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  for (int h = 0; h < heads; ++h) {
    Var qh = ag::slice_cols(q, h * dh, dh);
    Var kh = ag::slice_cols(k, h * dh, dh);
    Var vh = ag::slice_cols(v, h * dh, dh);
    Var scores = ag::scale(ag::matmul(qh, ag::transpose(kh)), inv_sqrt);
    outs.push_back(ag::matmul(ag::softmax_rows(scores), vh));
  }
  Var attn = layer.o(heads == 1 ? outs.front() : ag::concat_cols(outs));
  Var y = layer.norm1(ag::add(x, attn));
  Var ff = layer.conv2(ag::relu(layer.conv1(y)));
  return layer.norm2(ag::add(y, ff));
}

Var AcousticModel::run_stack(const std::vector<FftLayer>& stack, const Var& x) const {
  Var h = ag::add(x, ag::constant(nn::positional_encoding(x.rows(), x.cols())));
  for (const auto& layer : stack) h = run_layer(layer, h);
  return h;
}

Var AcousticModel::run_predictor(const Predictor& p, const Var& h) const {
  Var x = p.norm1(ag::relu(p.conv1(h)));
  x = p.norm2(ag::relu(p.conv2(x)));
  return p.out(x);
}

Var AcousticModel::embed(std::span<const int> token_ids) const {
  if (token_ids.empty()) throw DataError("empty token sequence");
  std::vector<Eigen::Index> idx(token_ids.begin(), token_ids.end());
  for (Eigen::Index id : idx) {
    if (id < 0 || id >= config_.vocab_size) {
      throw DataError("token id " + std::to_string(id) + " outside vocabulary");
    }
  }
  return ag::gather_rows(embedding_, idx);
}

void AcousticModel::check_speaker(std::optional<int> speaker) const {
  if (config_.multi_speaker()) {
    if (!speaker) throw ConfigError("multi-speaker model needs a speaker id");
    if (*speaker < 0 || *speaker >= config_.n_speakers) {
      throw ConfigError("speaker id " + std::to_string(*speaker) + " outside table of " +
                        std::to_string(config_.n_speakers));
    }
  } else if (speaker) {
    throw ConfigError("single-speaker model does not take a speaker id");
  }
}

Var AcousticModel::encode(std::span<const int> token_ids,
                          std::optional<int> speaker) const {
  check_speaker(speaker);
  Var x = embed(token_ids);
  if (speaker) x = ag::add_row(x, ag::slice_rows(speaker_table_, *speaker, 1));
  return run_stack(encoder_, x);
}

Var AcousticModel::predict_duration(const Var& h) const {
  return run_predictor(duration_predictor_, h);
}

Var AcousticModel::predict_pitch(const Var& h) const {
  return run_predictor(pitch_predictor_, h);
}

Var AcousticModel::add_pitch_embedding(const Var& h, const Var& token_pitch) const {
  if (token_pitch.rows() != h.rows() || token_pitch.cols() != 1) {
    throw ConfigError("add_pitch_embedding: pitch must be n x 1");
  }
  return ag::add(h, pitch_embedding_(token_pitch));
}

Var AcousticModel::upsample(const Var& g, const align::Durations& durations) const {
  if (static_cast<Eigen::Index>(durations.frames.size()) != g.rows()) {
    throw ConfigError("upsample: one duration per token required");
  }
  const align::HardAlignment path = align::path_from_durations(durations);
  if (path.path.empty()) throw ConfigError("upsample: durations sum to zero");
  std::vector<Eigen::Index> idx(path.path.begin(), path.path.end());
  return ag::gather_rows(g, idx);
}

Var AcousticModel::decode(const Var& upsampled) const {
  return mel_proj_(run_stack(decoder_, upsampled));
}

Var AcousticModel::log_alignment(std::span<const int> token_ids, const Matrix& mel) const {
  if (mel.cols() != config_.n_mels) throw DataError("mel bin count mismatch");
  return aligner_.log_alignment(embed(token_ids), ag::constant(mel));
}

align::Durations AcousticModel::align_durations(std::span<const int> token_ids,
                                                const Matrix& mel) const {
  ag::NoGradGuard no_grad;
  align::SoftAlignment soft{log_alignment(token_ids, mel).value()};
  return align::extract_durations(align::viterbi(soft),
                                  static_cast<int>(token_ids.size()));
}

Var AcousticModel::training_loss(const TrainingItem& item,
                                 LossBreakdown* breakdown) const {
  if (item.mel == nullptr || item.pitch == nullptr) {
    throw ConfigError("training item needs mel and pitch targets");
  }
  const Matrix& mel = *item.mel;
  if (mel.cols() != config_.n_mels) throw DataError("mel bin count mismatch");
  if (static_cast<Eigen::Index>(item.pitch->size()) != mel.rows()) {
    throw DataError("pitch contour and mel disagree on frame count");
  }
  const auto n = static_cast<int>(item.token_ids.size());

  Var log_align = log_alignment(item.token_ids, mel);
  Var align_loss = align::forward_sum_loss(log_align);
  const align::Durations durations = align::extract_durations(
      align::viterbi(align::SoftAlignment{log_align.value()}), n);

  Matrix dur_target(n, 1);
  for (int i = 0; i < n; ++i) {
    dur_target(i, 0) = std::log1p(static_cast<double>(durations.frames[static_cast<std::size_t>(i)]));
  }
  const Var pitch_target =
      ag::constant(column(pitch::average_pitch_per_token(*item.pitch, durations.frames)));

  Var h = encode(item.token_ids, item.speaker);
  Var d_hat = predict_duration(h);
  Var p_hat = predict_pitch(h);
  Var g = add_pitch_embedding(h, pitch_target);
  Var y_hat = decode(upsample(g, durations));
  return total_loss(y_hat, ag::constant(mel), p_hat, pitch_target, d_hat,
                    ag::constant(dur_target), align_loss, config_.weights, breakdown);
}

align::Durations durations_from_prediction(const Matrix& d_hat, double pace) {
  if (!(pace > 0.0)) throw ConfigError("pace must be positive");
  align::Durations d;
  d.frames.resize(static_cast<std::size_t>(d_hat.rows()));
  for (Eigen::Index i = 0; i < d_hat.rows(); ++i) {
    const double frames = std::round(std::expm1(d_hat(i, 0)) * pace);
    d.frames[static_cast<std::size_t>(i)] =
        static_cast<int>(std::max(1.0, std::min(frames, 1e6)));
  }
  return d;
}

Synthesis AcousticModel::finish(const Var& g, align::Durations durations,
                                std::vector<double> token_pitch,
                                const mel::MelConfig& mel_config) const {
  Synthesis out;
  out.mel.values = decode(upsample(g, durations)).value();
  out.mel.config = mel_config;
  out.durations = std::move(durations);
  out.token_pitch = std::move(token_pitch);
  return out;
}

Synthesis AcousticModel::synthesize(std::span<const int> token_ids,
                                    std::optional<int> speaker,
                                    const mel::MelConfig& mel_config,
                                    double pace) const {
  ag::NoGradGuard no_grad;
  Var h = encode(token_ids, speaker);
  align::Durations durations = durations_from_prediction(predict_duration(h).value(), pace);
  Var p_hat = predict_pitch(h);
  std::vector<double> pitch(p_hat.value().data(), p_hat.value().data() + p_hat.rows());
  return finish(add_pitch_embedding(h, p_hat), std::move(durations), std::move(pitch),
                mel_config);
}

Synthesis AcousticModel::synthesize_with_reference_durations(
    std::span<const int> token_ids, const mel::MelSpectrogram& reference,
    std::optional<int> speaker) const {
  ag::NoGradGuard no_grad;
  align::Durations durations = align_durations(token_ids, reference.values);
  Var h = encode(token_ids, speaker);
  Var p_hat = predict_pitch(h);
  std::vector<double> pitch(p_hat.value().data(), p_hat.value().data() + p_hat.rows());
  return finish(add_pitch_embedding(h, p_hat), std::move(durations), std::move(pitch),
                reference.config);
}

}  // namespace vclone::acoustic
