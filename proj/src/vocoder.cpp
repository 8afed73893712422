// Copyright 2026 The vclone Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "vclone/vocoder.hpp"

#include "vclone/errors.hpp"

#include <algorithm>
#include <set>

namespace vclone::vocoder {

namespace {

constexpr double kSlope = 0.1;

Var column(std::span<const double> samples) {
  Matrix m(static_cast<Eigen::Index>(samples.size()), 1);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    m(static_cast<Eigen::Index>(i), 0) = samples[i];
  }
  return ag::constant(std::move(m));
}

}  // namespace

int VocoderConfig::hop_length() const {
  int hop = 1;
  for (int f : upsample_factors) hop *= f;
  return hop;
}

void VocoderConfig::validate(const mel::MelConfig& mel_config) const {
  if (upsample_factors.empty()) throw ConfigError("vocoder: no upsample factors");
  for (int f : upsample_factors) {
    if (f < 2 || f % 2 != 0) throw ConfigError("vocoder: upsample factors must be even");
  }
  if (hop_length() != mel_config.hop_length) {
    throw ConfigError("vocoder: product of upsample factors must equal the mel hop (" +
                      std::to_string(hop_length()) + " vs " +
                      std::to_string(mel_config.hop_length) + ")");
  }
  if (n_mels != mel_config.n_mels) throw ConfigError("vocoder: n_mels differs from mel config");
  if (initial_channels >> upsample_factors.size() < 1) {
    throw ConfigError("vocoder: too few initial channels for the number of stages");
  }
  if (std::set<int>(mpd_periods.begin(), mpd_periods.end()).size() != mpd_periods.size()) {
    throw ConfigError("vocoder: periods must be pairwise distinct");
  }
  for (int p : mpd_periods) {
    if (p < 1) throw ConfigError("vocoder: periods must be positive");
  }
  if (msd_scales < 1 || disc_channels < 1) throw ConfigError("vocoder: discriminator sizes");
  if (resblock_kernels.empty() || resblock_dilations.empty()) {
    throw ConfigError("vocoder: residual block kernels and dilations required");
  }
  if (lambda_fm < 0 || lambda_mel < 0) throw ConfigError("vocoder: negative loss weight");
  if (segment_frames < 1) throw ConfigError("vocoder: segment_frames must be positive");
}

Generator::Generator(nn::ParamStore& store, const VocoderConfig& config, nn::Rng& rng)
    : config_(config) {
  int channels = config.initial_channels;
  pre_ = nn::Conv1d(store, "generator.pre", config.n_mels, channels, 7, rng);
  for (std::size_t s = 0; s < config.upsample_factors.size(); ++s) {
    const int u = config.upsample_factors[s];
    const std::string name = "generator.stage" + std::to_string(s);
    Stage stage;
    stage.up = nn::ConvTranspose1d(store, name + ".up", channels, channels / 2, 2 * u, u,
                                   u / 2, rng);
    channels /= 2;
    for (std::size_t b = 0; b < config.resblock_kernels.size(); ++b) {
      const int k = config.resblock_kernels[b];
      ResBlock block;
      for (std::size_t j = 0; j < config.resblock_dilations.size(); ++j) {
        const std::string prefix = name + ".res" + std::to_string(b) + "." + std::to_string(j);
        block.dilated.emplace_back(store, prefix + ".dilated", channels, channels, k, rng,
                                   config.resblock_dilations[j]);
        block.plain.emplace_back(store, prefix + ".plain", channels, channels, k, rng);
      }
      stage.blocks.push_back(std::move(block));
    }
    stages_.push_back(std::move(stage));
  }
  post_ = nn::Conv1d(store, "generator.post", channels, 1, 7, rng);
}

Var Generator::operator()(const Var& mel) const {
  Var x = pre_(mel);
  for (const auto& stage : stages_) {
    x = stage.up(ag::leaky_relu(x, kSlope));
    Var acc;
    for (const auto& block : stage.blocks) {
      Var y = x;
      for (std::size_t j = 0; j < block.dilated.size(); ++j) {
        Var t = block.dilated[j](ag::leaky_relu(y, kSlope));
        t = block.plain[j](ag::leaky_relu(t, kSlope));
        y = ag::add(y, t);
      }
      acc = acc.defined() ? ag::add(acc, y) : y;
    }
    x = ag::scale(acc, 1.0 / static_cast<double>(stage.blocks.size()));
  }
  return ag::tanh(post_(ag::leaky_relu(x, 0.01)));
}

Discriminators::Discriminators(nn::ParamStore& store, const VocoderConfig& config,
                               nn::Rng& rng)
    : config_(config) {
  for (int p : config.mpd_periods) {
    period_stacks_.push_back(make_period_stack(store, "mpd.p" + std::to_string(p), rng));
  }
  for (int s = 0; s < config.msd_scales; ++s) {
    scale_stacks_.push_back(make_scale_stack(store, "msd.s" + std::to_string(s), rng));
  }
}

Discriminators::Stack Discriminators::make_period_stack(nn::ParamStore& store,
                                                        const std::string& name,
                                                        nn::Rng& rng) {
  const int c = config_.disc_channels;
  Stack s;
  // Kernel (5, 1) convolutions over each period column.
  s.layers.emplace_back(store, name + ".0", 1, c / 2, 5, rng, 1, 3, 2);
  s.layers.emplace_back(store, name + ".1", c / 2, c, 5, rng, 1, 3, 2);
  s.layers.emplace_back(store, name + ".2", c, 2 * c, 5, rng, 1, 3, 2);
  s.layers.emplace_back(store, name + ".3", 2 * c, 2 * c, 5, rng, 1, 1, 2);
  s.post = nn::Conv1d(store, name + ".post", 2 * c, 1, 3, rng);
  return s;
}

Discriminators::Stack Discriminators::make_scale_stack(nn::ParamStore& store,
                                                       const std::string& name,
                                                       nn::Rng& rng) {
  const int c = config_.disc_channels;
  Stack s;
  s.layers.emplace_back(store, name + ".0", 1, c, 15, rng);
  s.layers.emplace_back(store, name + ".1", c, 2 * c, 11, rng, 1, 4, 5);
  s.layers.emplace_back(store, name + ".2", 2 * c, 4 * c, 11, rng, 1, 4, 5);
  s.layers.emplace_back(store, name + ".3", 4 * c, 4 * c, 5, rng);
  s.post = nn::Conv1d(store, name + ".post", 4 * c, 1, 3, rng);
  return s;
}

void Discriminators::run_stack(const Stack& stack, const Var& x, std::vector<Var>& features,
                               Var& logits) {
  Var h = x;
  for (const auto& layer : stack.layers) {
    h = ag::leaky_relu(layer(h), kSlope);
    features.push_back(h);
  }
  logits = stack.post(h);
  features.push_back(logits);
}

Discrimination Discriminators::operator()(const Var& waveform) const {
  if (waveform.cols() != 1 || waveform.rows() < 1) {
    throw DataError("discriminate: waveform must be a non-empty column");
  }
  const Eigen::Index len = waveform.rows();
  Discrimination out;

  for (std::size_t k = 0; k < config_.mpd_periods.size(); ++k) {
    const int period = config_.mpd_periods[k];
    if (len < period) {
      throw DataError("discriminate: waveform shorter than period " + std::to_string(period));
    }
    // Reflect-pad to a multiple of the period, then view as period columns.
    const Eigen::Index padded = (len + period - 1) / period * period;
    std::vector<Eigen::Index> pad_index(static_cast<std::size_t>(padded));
    for (Eigen::Index i = 0; i < padded; ++i) {
      pad_index[static_cast<std::size_t>(i)] = i < len ? i : std::max<Eigen::Index>(0, 2 * (len - 1) - i);
    }
    Var x = ag::gather_rows(waveform, pad_index);
    std::vector<Var> features;
    std::vector<Var> column_logits;
    std::vector<std::vector<Var>> column_features;
    for (int col = 0; col < period; ++col) {
      std::vector<Eigen::Index> idx;
      for (Eigen::Index i = col; i < padded; i += period) idx.push_back(i);
      std::vector<Var> f;
      Var logit;
      run_stack(period_stacks_[k], ag::gather_rows(x, idx), f, logit);
      column_logits.push_back(logit);
      column_features.push_back(std::move(f));
    }
    // Layer l's feature map stacks all columns side by side.
    for (std::size_t l = 0; l < column_features.front().size(); ++l) {
      std::vector<Var> cols;
      for (const auto& cf : column_features) cols.push_back(cf[l]);
      features.push_back(ag::concat_cols(cols));
    }
    out.mpd.logits.push_back(ag::concat_cols(column_logits));
    out.mpd.features.push_back(std::move(features));
  }

  Var x = waveform;
  for (std::size_t s = 0; s < scale_stacks_.size(); ++s) {
    if (s > 0) x = ag::avg_pool1d(x, 4, 2, 2);
    std::vector<Var> f;
    Var logit;
    run_stack(scale_stacks_[s], x, f, logit);
    out.msd.logits.push_back(logit);
    out.msd.features.push_back(std::move(f));
  }
  return out;
}

Var discriminator_loss(std::span<const Var> real_logits, std::span<const Var> fake_logits) {
  if (real_logits.size() != fake_logits.size() || real_logits.empty()) {
    throw ConfigError("discriminator_loss: mismatched sub-discriminator lists");
  }
  Var total;
  for (std::size_t i = 0; i < real_logits.size(); ++i) {
    const Var& r = real_logits[i];
    Var term = ag::add(ag::mse(r, ag::constant(Matrix::Ones(r.rows(), r.cols()))),
                       ag::mean(ag::square(fake_logits[i])));
    total = total.defined() ? ag::add(total, term) : term;
  }
  return total;
}

Var generator_adversarial_loss(std::span<const Var> fake_logits) {
  if (fake_logits.empty()) throw ConfigError("generator_adversarial_loss: no logits");
  Var total;
  for (const auto& f : fake_logits) {
    Var term = ag::mse(f, ag::constant(Matrix::Ones(f.rows(), f.cols())));
    total = total.defined() ? ag::add(total, term) : term;
  }
  return total;
}

Var feature_matching_loss(const std::vector<std::vector<Var>>& real,
                          const std::vector<std::vector<Var>>& fake) {
  if (real.size() != fake.size() || real.empty()) {
    throw ConfigError("feature_matching_loss: mismatched feature lists");
  }
  Var total;
  for (std::size_t i = 0; i < real.size(); ++i) {
    if (real[i].size() != fake[i].size()) {
      throw ConfigError("feature_matching_loss: mismatched layer counts");
    }
    for (std::size_t l = 0; l < real[i].size(); ++l) {
      Var term = ag::l1(real[i][l], fake[i][l]);
      total = total.defined() ? ag::add(total, term) : term;
    }
  }
  return total;
}

Var spectral_loss(const Var& real, const Var& fake, const mel::MelConfig& mel_config) {
  return ag::l1(mel::log_mel(real, mel_config), mel::log_mel(fake, mel_config));
}

VocoderLosses vocoder_losses(const Discriminators& disc, const Var& real, const Var& fake,
                             const VocoderConfig& config, const mel::MelConfig& mel_config) {
  if (real.rows() != fake.rows() || real.cols() != fake.cols()) {
    throw DataError("vocoder_losses: real and fake lengths differ");
  }
  Discrimination d_real = disc(real);
  Discrimination d_fake = disc(fake);

  std::vector<Var> real_logits = d_real.mpd.logits;
  real_logits.insert(real_logits.end(), d_real.msd.logits.begin(), d_real.msd.logits.end());
  std::vector<Var> fake_logits = d_fake.mpd.logits;
  fake_logits.insert(fake_logits.end(), d_fake.msd.logits.begin(), d_fake.msd.logits.end());
  auto real_features = d_real.mpd.features;
  real_features.insert(real_features.end(), d_real.msd.features.begin(),
                       d_real.msd.features.end());
  auto fake_features = d_fake.mpd.features;
  fake_features.insert(fake_features.end(), d_fake.msd.features.begin(),
                       d_fake.msd.features.end());

  VocoderLosses out;
  out.discriminator = discriminator_loss(real_logits, fake_logits);
  Var adv = generator_adversarial_loss(fake_logits);
  Var fm = ag::scale(feature_matching_loss(real_features, fake_features), config.lambda_fm);
  Var spec = ag::scale(spectral_loss(real, fake, mel_config), config.lambda_mel);
  out.generator = ag::add(adv, ag::add(fm, spec));
  out.adversarial = adv.item();
  out.feature_matching = fm.item();
  out.spectral = spec.item();
  return out;
}

Vocoder::Vocoder(const VocoderConfig& config, const mel::MelConfig& mel_config,
                 std::uint64_t seed)
    : config_(config), mel_config_(mel_config) {
  mel_config_.validate();
  config_.validate(mel_config_);
  nn::Rng rng(seed);
  generator_ = Generator(gen_params_, config_, rng);
  discriminators_ = Discriminators(disc_params_, config_, rng);
}

std::vector<double> Vocoder::generate(const mel::MelSpectrogram& mel) const {
  if (mel.values.cols() != config_.n_mels) {
    throw DataError("vocoder expects " + std::to_string(config_.n_mels) +
                    " mel bins, got " + std::to_string(mel.values.cols()));
  }
  if (mel.values.rows() < 1) throw DataError("vocoder: empty mel");
  ag::NoGradGuard no_grad;
  Var wave = generator_(ag::constant(mel.values));
  return {wave.value().data(), wave.value().data() + wave.rows()};
}

Discrimination Vocoder::discriminate(std::span<const double> waveform) const {
  ag::NoGradGuard no_grad;
  return discriminators_(column(waveform));
}

}  // namespace vclone::vocoder
