// Copyright 2026 The vclone Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "vclone/finetune.hpp"

#include "vclone/errors.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <random>
#include <set>

namespace vclone::finetune {

namespace {

using data::Example;

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

class LossLog {
 public:
  explicit LossLog(const std::filesystem::path& path) {
    if (path.empty()) return;
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    out_.open(path);
    if (!out_) throw DataError("cannot write loss log: " + path.string());
  }

  void write(const StepLog& s) {
    if (!out_.is_open()) return;
    if (!header_written_) {
      out_ << "step";
      for (const auto& [k, _] : s.values) out_ << '\t' << k;
      out_ << "\tspeakers\twall_sec\n";
      header_written_ = true;
    }
    out_ << s.step;
    for (const auto& [_, v] : s.values) out_ << '\t' << v;
    out_ << '\t';
    bool first = true;
    for (const auto& [spk, n] : s.speaker_counts) {
      out_ << (first ? "" : ",") << spk << ':' << n;
      first = false;
    }
    out_ << '\t' << s.wall_sec << '\n';
  }

 private:
  std::ofstream out_;
  bool header_written_ = false;
};

// Walks a pool in shuffled passes, redrawing the order after each pass.
class CyclingBatches {
 public:
  CyclingBatches(const std::vector<Example>& pool, std::uint64_t seed) : pool_(pool), rng_(seed) {
    if (pool.empty()) throw DataError("training pool is empty");
    reshuffle();
  }

  std::vector<const Example*> next(std::size_t batch_size) {
    std::vector<const Example*> batch;
    for (std::size_t i = 0; i < batch_size; ++i) {
      if (cursor_ == order_.size()) reshuffle();
      batch.push_back(&pool_[order_[cursor_++]]);
    }
    return batch;
  }

 private:
  void reshuffle() {
    order_.resize(pool_.size());
    for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
    std::shuffle(order_.begin(), order_.end(), rng_);
    cursor_ = 0;
  }

  const std::vector<Example>& pool_;
  std::mt19937_64 rng_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
};

std::vector<const Example*> unpack(
    const std::vector<data::BalancedBatches<const Example*>::Item>& items) {
  std::vector<const Example*> out;
  out.reserve(items.size());
  for (const auto& it : items) out.push_back(*it.value);
  return out;
}

int single_speaker(const std::vector<Example>& pool, const char* what) {
  if (pool.empty()) throw DataError(std::string(what) + " data is empty");
  const int id = pool.front().record.speaker_id;
  for (const auto& ex : pool) {
    if (ex.record.speaker_id != id) {
      throw DataError(std::string(what) + " data mixes several speakers");
    }
  }
  return id;
}

template <typename Bundle>
void maybe_checkpoint(const Bundle& bundle, const RunOutputs& outputs, bool final) {
  if (outputs.checkpoint_dir.empty()) return;
  if (final) {
    bundle.save(outputs.checkpoint_dir / "final.ckpt");
  } else if (outputs.checkpoint_every > 0 && bundle.step % outputs.checkpoint_every == 0) {
    bundle.save(outputs.checkpoint_dir / ("step_" + std::to_string(bundle.step) + ".ckpt"));
  }
}

void record(StepLog&& s, TrainResult* result, const RunOutputs& outputs, LossLog& log) {
  log.write(s);
  if (outputs.on_step) outputs.on_step(s);
  if (result != nullptr) result->log.push_back(std::move(s));
}

StepLog synth_step(SynthesizerBundle& b, const std::vector<const Example*>& batch, double lr) {
  auto& params = b.model.params();
  params.zero_grad();
  acoustic::LossBreakdown sum;
  StepLog s;
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (const Example* ex : batch) {
    acoustic::TrainingItem item{ex->tokens.ids, &ex->mel.values, &ex->pitch,
                                b.speaker_row(ex->record.speaker_id)};
    acoustic::LossBreakdown br;
    ag::Var loss = b.model.training_loss(item, &br);
    ag::backward(ag::scale(loss, inv));
    sum.total += br.total * inv;
    sum.mel += br.mel * inv;
    sum.pitch += br.pitch * inv;
    sum.duration += br.duration * inv;
    sum.align += br.align * inv;
    ++s.speaker_counts[ex->record.speaker_id];
  }
  b.optimizer.step(params, lr);
  params.zero_grad();
  ++b.step;
  s.step = b.step;
  s.values = {{"loss", sum.total}, {"mel", sum.mel},   {"pitch", sum.pitch},
              {"duration", sum.duration}, {"align", sum.align}, {"lr", lr}};
  return s;
}

struct Segment {
  ag::Matrix mel;
  ag::Matrix wave;
};

Segment crop(const Example& ex, int segment_frames, int hop, std::mt19937_64& rng) {
  const Eigen::Index frames = ex.mel.frames();
  const Eigen::Index len = std::min<Eigen::Index>(segment_frames, frames);
  std::uniform_int_distribution<Eigen::Index> pick(0, frames - len);
  const Eigen::Index start = pick(rng);
  Segment s;
  s.mel = ex.mel.values.middleRows(start, len);
  s.wave = ag::Matrix::Zero(len * hop, 1);
  for (Eigen::Index i = 0; i < len * hop; ++i) {
    const auto src = static_cast<std::size_t>(start * hop + i);
    if (src < ex.waveform.size()) s.wave(i, 0) = ex.waveform[src];
  }
  return s;
}

StepLog vocoder_step(VocoderBundle& b, const std::vector<const Example*>& batch,
                     std::mt19937_64& rng, double lr) {
  const auto& v = b.vocoder;
  const auto& cfg = v.config();
  const int hop = v.mel_config().hop_length;
  auto& gen = b.vocoder.generator_params();
  auto& disc = b.vocoder.discriminator_params();
  const double inv = 1.0 / static_cast<double>(batch.size());

  std::vector<Segment> segments;
  std::vector<ag::Var> fakes;
  StepLog s;
  for (const Example* ex : batch) {
    segments.push_back(crop(*ex, cfg.segment_frames, hop, rng));
    fakes.push_back(v.generator()(ag::constant(segments.back().mel)));
    ++s.speaker_counts[ex->record.speaker_id];
  }

  // Discriminator update on detached generator output.
  disc.zero_grad();
  double disc_total = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    ag::Var real = ag::constant(segments[i].wave);
    ag::Var fake = ag::constant(fakes[i].value());
    auto d_real = v.discriminators()(real);
    auto d_fake = v.discriminators()(fake);
    std::vector<ag::Var> rl = d_real.mpd.logits;
    rl.insert(rl.end(), d_real.msd.logits.begin(), d_real.msd.logits.end());
    std::vector<ag::Var> fl = d_fake.mpd.logits;
    fl.insert(fl.end(), d_fake.msd.logits.begin(), d_fake.msd.logits.end());
    ag::Var loss = vocoder::discriminator_loss(rl, fl);
    disc_total += loss.item() * inv;
    ag::backward(ag::scale(loss, inv));
  }
  b.discriminator_optimizer.step(disc, lr);
  disc.zero_grad();

  // Generator update.
  gen.zero_grad();
  double gen_total = 0.0, adv = 0.0, fm = 0.0, spec = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    ag::Var real = ag::constant(segments[i].wave);
    vocoder::Discrimination d_real;
    {
      ag::NoGradGuard no_grad;
      d_real = v.discriminators()(real);
    }
    auto d_fake = v.discriminators()(fakes[i]);
    std::vector<ag::Var> fl = d_fake.mpd.logits;
    fl.insert(fl.end(), d_fake.msd.logits.begin(), d_fake.msd.logits.end());
    auto rf = d_real.mpd.features;
    rf.insert(rf.end(), d_real.msd.features.begin(), d_real.msd.features.end());
    auto ff = d_fake.mpd.features;
    ff.insert(ff.end(), d_fake.msd.features.begin(), d_fake.msd.features.end());

    ag::Var a = vocoder::generator_adversarial_loss(fl);
    ag::Var f = ag::scale(vocoder::feature_matching_loss(rf, ff), cfg.lambda_fm);
    ag::Var sp = ag::scale(vocoder::spectral_loss(real, fakes[i], v.mel_config()), cfg.lambda_mel);
    ag::Var loss = ag::add(a, ag::add(f, sp));
    gen_total += loss.item() * inv;
    adv += a.item() * inv;
    fm += f.item() * inv;
    spec += sp.item() * inv;
    ag::backward(ag::scale(loss, inv));
  }
  b.generator_optimizer.step(gen, lr);
  gen.zero_grad();
  disc.zero_grad();

  ++b.step;
  s.step = b.step;
  s.values = {{"generator", gen_total}, {"discriminator", disc_total}, {"adversarial", adv},
              {"feature_matching", fm},  {"spectral", spec},           {"lr", lr}};
  return s;
}

SynthesizerBundle clone_synthesizer(const SynthesizerBundle& src, const acoustic::AcousticConfig& config,
                                    std::uint64_t seed) {
  SynthesizerBundle out{acoustic::AcousticModel(config, seed), src.vocabulary, src.mel_config,
                        src.yin_config, src.speaker_rows, src.step, src.optimizer};
  out.model.params().copy_from(src.model.params());
  return out;
}

VocoderBundle clone_vocoder(const VocoderBundle& src) {
  VocoderBundle out{vocoder::Vocoder(src.vocoder.config(), src.vocoder.mel_config(), 0), src.step,
                    src.generator_optimizer, src.discriminator_optimizer};
  out.vocoder.generator_params().copy_from(src.vocoder.generator_params());
  out.vocoder.discriminator_params().copy_from(src.vocoder.discriminator_params());
  return out;
}

void require_text(const std::vector<Example>& examples) {
  for (const auto& ex : examples) {
    if (ex.tokens.ids.empty()) {
      throw DataError("synthesizer training needs text for " + ex.record.audio_path.string());
    }
  }
}

void check_vocabulary(const SynthesizerBundle& b, const std::vector<Example>& examples) {
  require_text(examples);
  for (const auto& ex : examples) {
    for (std::size_t i = 0; i < ex.tokens.ids.size(); ++i) {
      const int id = ex.tokens.ids[i];
      if (id == data::Tokenizer::kUnknownId || id >= b.model.config().vocab_size) {
        throw DataError("vocabulary mismatch: symbol '" + ex.tokens.symbols[i] + "' in \"" +
                        ex.record.text + "\" is not in the pretrained vocabulary");
      }
    }
  }
}

void check_minutes(double minutes) {
  if (!(minutes > 0.0) || !std::isfinite(minutes)) {
    throw ConfigError("minutes must be a positive number");
  }
}

// Original-speaker pool capped at kOriginalPoolCap by seeded selection.
std::vector<Example> cap_pool(const std::vector<Example>& pool, std::uint64_t seed) {
  if (pool.size() <= kOriginalPoolCap) return pool;
  std::vector<Example> out;
  out.reserve(kOriginalPoolCap);
  for (std::size_t i : data::seeded_permutation(pool.size(), seed)) {
    if (out.size() == kOriginalPoolCap) break;
    out.push_back(pool[i]);
  }
  return out;
}

}  // namespace

Method parse_method(const std::string& name) {
  if (name == "direct") return Method::kDirect;
  if (name == "mixed") return Method::kMixed;
  throw ConfigError("unknown finetuning method '" + name + "' (expected direct or mixed)");
}

std::string method_name(Method m) { return m == Method::kDirect ? "direct" : "mixed"; }

std::int64_t scheduled_steps(Method method, double minutes) {
  check_minutes(minutes);
  const double per_minute = method == Method::kDirect ? 200.0 : 1000.0;
  return static_cast<std::int64_t>(std::llround(per_minute * minutes));
}

std::optional<int> SynthesizerBundle::speaker_row(int speaker_id) const {
  if (!model.config().multi_speaker()) return std::nullopt;
  auto it = speaker_rows.find(speaker_id);
  if (it == speaker_rows.end()) {
    throw DataError("speaker " + std::to_string(speaker_id) + " has no embedding row");
  }
  return it->second;
}

checkpoint::Container SynthesizerBundle::to_container() const {
  checkpoint::Container c;
  c.kind = "acoustic";
  c.step = step;
  c.meta["config"] = model.config();
  c.meta["vocabulary"] = vocabulary;
  c.meta["mel_config"] = mel_config;
  c.meta["yin_config"] = yin_config;
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& [spk, row] : speaker_rows) rows.push_back({spk, row});
  c.meta["speaker_rows"] = rows;
  checkpoint::put_params(c, "", model.params());
  checkpoint::put_optimizer(c, "", optimizer);
  return c;
}

SynthesizerBundle SynthesizerBundle::from_container(const checkpoint::Container& c) {
  if (c.kind != "acoustic") throw DataError("checkpoint holds a " + c.kind + " model, not acoustic");
  try {
    auto config = c.meta.at("config").get<acoustic::AcousticConfig>();
    SynthesizerBundle b{acoustic::AcousticModel(config, 0),
                        c.meta.at("vocabulary").get<std::vector<std::string>>(),
                        c.meta.at("mel_config").get<mel::MelConfig>(),
                        c.meta.at("yin_config").get<pitch::YinConfig>(),
                        {},
                        c.step,
                        checkpoint::get_optimizer(c, "")};
    for (const auto& pair : c.meta.at("speaker_rows")) {
      b.speaker_rows[pair.at(0).get<int>()] = pair.at(1).get<int>();
    }
    checkpoint::get_params(c, "", b.model.params());
    return b;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed acoustic checkpoint metadata: ") + e.what());
  }
}

void SynthesizerBundle::save(const std::filesystem::path& path) const {
  checkpoint::save(path, to_container());
}

SynthesizerBundle SynthesizerBundle::load(const std::filesystem::path& path) {
  return from_container(checkpoint::load(path));
}

checkpoint::Container VocoderBundle::to_container() const {
  checkpoint::Container c;
  c.kind = "vocoder";
  c.step = step;
  c.meta["config"] = vocoder.config();
  c.meta["mel_config"] = vocoder.mel_config();
  checkpoint::put_params(c, "", vocoder.generator_params());
  checkpoint::put_params(c, "", vocoder.discriminator_params());
  checkpoint::put_optimizer(c, "generator.", generator_optimizer);
  checkpoint::put_optimizer(c, "discriminator.", discriminator_optimizer);
  return c;
}

VocoderBundle VocoderBundle::from_container(const checkpoint::Container& c) {
  if (c.kind != "vocoder") throw DataError("checkpoint holds a " + c.kind + " model, not vocoder");
  try {
    VocoderBundle b{vocoder::Vocoder(c.meta.at("config").get<vocoder::VocoderConfig>(),
                                     c.meta.at("mel_config").get<mel::MelConfig>(), 0),
                    c.step, checkpoint::get_optimizer(c, "generator."),
                    checkpoint::get_optimizer(c, "discriminator.")};
    checkpoint::get_params(c, "", b.vocoder.generator_params());
    checkpoint::get_params(c, "", b.vocoder.discriminator_params());
    return b;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed vocoder checkpoint metadata: ") + e.what());
  }
}

void VocoderBundle::save(const std::filesystem::path& path) const {
  checkpoint::save(path, to_container());
}

VocoderBundle VocoderBundle::load(const std::filesystem::path& path) {
  return from_container(checkpoint::load(path));
}

SynthesizerBundle init_synthesizer(const acoustic::AcousticConfig& config,
                                   const data::Tokenizer& tokenizer,
                                   const mel::MelConfig& mel_config,
                                   const pitch::YinConfig& yin_config, std::uint64_t seed) {
  acoustic::AcousticConfig cfg = config;
  cfg.vocab_size = tokenizer.vocab_size();
  cfg.n_mels = mel_config.n_mels;
  std::vector<std::string> vocab(tokenizer.symbols().begin() + 1, tokenizer.symbols().end());
  return SynthesizerBundle{acoustic::AcousticModel(cfg, seed), std::move(vocab), mel_config,
                           yin_config, {}, 0, nn::Adam(nn::AdamConfig{})};
}

SynthesizerBundle pretrain(const std::vector<Example>& examples,
                           const acoustic::AcousticConfig& config,
                           const data::Tokenizer& tokenizer, const mel::MelConfig& mel_config,
                           const pitch::YinConfig& yin_config, const PretrainOptions& options,
                           TrainResult* result, const RunOutputs& outputs) {
  if (examples.empty()) throw DataError("pretraining manifest is empty");
  if (options.steps < 0) throw ConfigError("steps must be non-negative");
  if (options.batch_size == 0) throw ConfigError("batch_size must be positive");
  require_text(examples);
  SynthesizerBundle b = init_synthesizer(config, tokenizer, mel_config, yin_config, options.seed);
  nn::AdamConfig adam;
  adam.lr = options.lr;
  adam.beta2 = 0.98;
  adam.eps = 1e-9;
  b.optimizer = nn::Adam(adam);

  CyclingBatches batches(examples, options.seed + 1);
  LossLog log(outputs.loss_log);
  Stopwatch clock;
  for (std::int64_t s = 0; s < options.steps; ++s) {
    const double ramp = options.warmup_steps > 0
                            ? std::min(1.0, static_cast<double>(s + 1) / options.warmup_steps)
                            : 1.0;
    StepLog entry = synth_step(b, batches.next(options.batch_size), options.lr * ramp);
    entry.wall_sec = clock.seconds();
    record(std::move(entry), result, outputs, log);
    maybe_checkpoint(b, outputs, false);
  }
  maybe_checkpoint(b, outputs, true);
  return b;
}

SynthesizerBundle direct_finetune(const SynthesizerBundle& pretrained, const FinetuneSpec& spec,
                                  const std::vector<Example>& new_speaker, TrainResult* result,
                                  const RunOutputs& outputs) {
  if (spec.method != Method::kDirect) throw ConfigError("direct_finetune needs method=direct");
  const std::int64_t steps = scheduled_steps(Method::kDirect, spec.minutes);
  if (spec.batch_size == 0) throw ConfigError("batch_size must be positive");
  single_speaker(new_speaker, "new-speaker");
  check_vocabulary(pretrained, new_speaker);

  SynthesizerBundle b = clone_synthesizer(pretrained, pretrained.model.config(), spec.seed);
  b.step = 0;
  nn::AdamConfig adam;
  adam.lr = spec.lr;
  b.optimizer = nn::Adam(adam);
  // Single-speaker models ignore speaker ids; no table row is needed.
  CyclingBatches batches(new_speaker, spec.seed + 1);
  LossLog log(outputs.loss_log);
  Stopwatch clock;
  for (std::int64_t s = 0; s < steps; ++s) {
    StepLog entry = synth_step(b, batches.next(spec.batch_size), spec.lr);
    entry.wall_sec = clock.seconds();
    record(std::move(entry), result, outputs, log);
    maybe_checkpoint(b, outputs, false);
  }
  maybe_checkpoint(b, outputs, true);
  return b;
}

SynthesizerBundle grow_speaker_table(const SynthesizerBundle& pretrained, int original_speaker,
                                     int new_speaker, std::uint64_t seed) {
  if (pretrained.model.config().multi_speaker()) {
    throw ConfigError("mixed finetuning expects a single-speaker pretrained model");
  }
  if (original_speaker == new_speaker) {
    throw DataError("original and new speaker ids must differ");
  }
  acoustic::AcousticConfig cfg = pretrained.model.config();
  cfg.n_speakers = 2;
  SynthesizerBundle b = clone_synthesizer(pretrained, cfg, seed);
  b.speaker_rows = {{original_speaker, 0}, {new_speaker, 1}};
  b.step = 0;
  return b;
}

SynthesizerBundle mixed_finetune(const SynthesizerBundle& pretrained, const FinetuneSpec& spec,
                                 const std::vector<Example>& new_speaker,
                                 const std::vector<Example>& original_speaker,
                                 TrainResult* result, const RunOutputs& outputs) {
  if (spec.method != Method::kMixed) throw ConfigError("mixed_finetune needs method=mixed");
  if (original_speaker.empty()) {
    throw ConfigError("mixed finetuning requires the original speaker's data");
  }
  const std::int64_t steps = scheduled_steps(Method::kMixed, spec.minutes);
  const int new_id = single_speaker(new_speaker, "new-speaker");
  const int orig_id = single_speaker(original_speaker, "original-speaker");
  check_vocabulary(pretrained, new_speaker);
  check_vocabulary(pretrained, original_speaker);

  SynthesizerBundle b = grow_speaker_table(pretrained, orig_id, new_id, spec.seed);
  nn::AdamConfig adam;
  adam.lr = spec.lr;
  b.optimizer = nn::Adam(adam);

  const std::vector<Example> original = cap_pool(original_speaker, spec.seed + 2);
  std::map<int, std::vector<const Example*>> pools;
  for (const auto& ex : original) pools[orig_id].push_back(&ex);
  for (const auto& ex : new_speaker) pools[new_id].push_back(&ex);
  data::BalancedBatches<const Example*> batches(pools, spec.batch_size, spec.seed + 1);

  LossLog log(outputs.loss_log);
  Stopwatch clock;
  for (std::int64_t s = 0; s < steps; ++s) {
    StepLog entry = synth_step(b, unpack(batches.next()), spec.lr);
    entry.wall_sec = clock.seconds();
    record(std::move(entry), result, outputs, log);
    maybe_checkpoint(b, outputs, false);
  }
  maybe_checkpoint(b, outputs, true);
  return b;
}

VocoderBundle init_vocoder(const vocoder::VocoderConfig& config, const mel::MelConfig& mel_config,
                           std::uint64_t seed) {
  return VocoderBundle{vocoder::Vocoder(config, mel_config, seed), 0, nn::Adam(nn::AdamConfig{}),
                       nn::Adam(nn::AdamConfig{})};
}

namespace {

nn::AdamConfig vocoder_adam(double lr) {
  nn::AdamConfig adam;
  adam.lr = lr;
  adam.beta1 = 0.8;
  adam.beta2 = 0.99;
  return adam;
}

}  // namespace

VocoderBundle pretrain_vocoder(const std::vector<Example>& examples,
                               const vocoder::VocoderConfig& config,
                               const mel::MelConfig& mel_config,
                               const VocoderTrainOptions& options, TrainResult* result,
                               const RunOutputs& outputs) {
  if (examples.empty()) throw DataError("vocoder training data is empty");
  if (options.steps < 0) throw ConfigError("steps must be non-negative");
  if (options.batch_size == 0) throw ConfigError("batch_size must be positive");
  VocoderBundle b = init_vocoder(config, mel_config, options.seed);
  b.generator_optimizer = nn::Adam(vocoder_adam(options.lr));
  b.discriminator_optimizer = nn::Adam(vocoder_adam(options.lr));
  CyclingBatches batches(examples, options.seed + 1);
  std::mt19937_64 crop_rng(options.seed + 3);
  LossLog log(outputs.loss_log);
  Stopwatch clock;
  for (std::int64_t s = 0; s < options.steps; ++s) {
    StepLog entry = vocoder_step(b, batches.next(options.batch_size), crop_rng, options.lr);
    entry.wall_sec = clock.seconds();
    record(std::move(entry), result, outputs, log);
    maybe_checkpoint(b, outputs, false);
  }
  maybe_checkpoint(b, outputs, true);
  return b;
}

VocoderBundle finetune_vocoder(const VocoderBundle& pretrained, const FinetuneSpec& spec,
                               const std::vector<Example>& new_speaker,
                               const std::vector<Example>& original_speaker,
                               TrainResult* result, const RunOutputs& outputs) {
  const std::int64_t steps = scheduled_steps(spec.method, spec.minutes);
  if (spec.batch_size == 0) throw ConfigError("batch_size must be positive");
  const int new_id = single_speaker(new_speaker, "new-speaker");
  if (spec.method == Method::kMixed && original_speaker.empty()) {
    throw ConfigError("mixed finetuning requires the original speaker's data");
  }

  VocoderBundle b = clone_vocoder(pretrained);
  b.step = 0;
  b.generator_optimizer = nn::Adam(vocoder_adam(spec.lr));
  b.discriminator_optimizer = nn::Adam(vocoder_adam(spec.lr));
  std::mt19937_64 crop_rng(spec.seed + 3);
  LossLog log(outputs.loss_log);
  Stopwatch clock;

  std::optional<CyclingBatches> direct;
  std::optional<data::BalancedBatches<const Example*>> mixed;
  std::vector<Example> original;
  if (spec.method == Method::kDirect) {
    direct.emplace(new_speaker, spec.seed + 1);
  } else {
    const int orig_id = single_speaker(original_speaker, "original-speaker");
    if (orig_id == new_id) throw DataError("original and new speaker ids must differ");
    original = cap_pool(original_speaker, spec.seed + 2);
    std::map<int, std::vector<const Example*>> pools;
    for (const auto& ex : original) pools[orig_id].push_back(&ex);
    for (const auto& ex : new_speaker) pools[new_id].push_back(&ex);
    mixed.emplace(pools, spec.batch_size, spec.seed + 1);
  }
  for (std::int64_t s = 0; s < steps; ++s) {
    auto batch = direct ? direct->next(spec.batch_size) : unpack(mixed->next());
    StepLog entry = vocoder_step(b, batch, crop_rng, spec.lr);
    entry.wall_sec = clock.seconds();
    record(std::move(entry), result, outputs, log);
    maybe_checkpoint(b, outputs, false);
  }
  maybe_checkpoint(b, outputs, true);
  return b;
}

double vocoder_spectral_loss(const VocoderBundle& bundle, const std::vector<Example>& examples) {
  if (examples.empty()) throw DataError("no examples to score");
  ag::NoGradGuard no_grad;
  const auto& v = bundle.vocoder;
  double total = 0.0;
  for (const auto& ex : examples) {
    std::vector<double> fake = v.generate(ex.mel);
    ag::Matrix real = ag::Matrix::Zero(static_cast<Eigen::Index>(fake.size()), 1);
    for (Eigen::Index i = 0; i < real.rows(); ++i) {
      if (static_cast<std::size_t>(i) < ex.waveform.size()) real(i, 0) = ex.waveform[static_cast<std::size_t>(i)];
    }
    ag::Matrix fm = Eigen::Map<const ag::Matrix>(fake.data(), static_cast<Eigen::Index>(fake.size()), 1);
    total += v.config().lambda_mel *
             vocoder::spectral_loss(ag::constant(real), ag::constant(fm), v.mel_config()).item();
  }
  return total / static_cast<double>(examples.size());
}

double synthesizer_mel_mse(const SynthesizerBundle& bundle, const std::vector<Example>& examples) {
  if (examples.empty()) throw DataError("no examples to score");
  ag::NoGradGuard no_grad;
  double total = 0.0;
  for (const auto& ex : examples) {
    acoustic::TrainingItem item{ex.tokens.ids, &ex.mel.values, &ex.pitch,
                                bundle.speaker_row(ex.record.speaker_id)};
    acoustic::LossBreakdown br;
    bundle.model.training_loss(item, &br);
    total += br.mel;
  }
  return total / static_cast<double>(examples.size());
}

}  // namespace vclone::finetune
