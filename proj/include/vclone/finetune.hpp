// Copyright 2026 The vclone Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Pretraining and speaker adaptation for the synthesizer and the vocoder.
//
// Direct finetuning updates every pretrained parameter on the new speaker
// alone for round(200 * minutes) steps. Mixed finetuning grows a two-row
// speaker table, trains on batches split evenly between the original and the
// new speaker, and runs round(1000 * minutes) steps. Both use Adam with a
// fixed learning rate and return the final-step model.

#pragma once

#include "vclone/acoustic.hpp"
#include "vclone/checkpoint.hpp"
#include "vclone/data.hpp"
#include "vclone/vocoder.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace vclone::finetune {

enum class Method { kDirect, kMixed };

Method parse_method(const std::string& name);  // "direct" | "mixed"
std::string method_name(Method m);

// round(200 * minutes) for direct, round(1000 * minutes) for mixed.
std::int64_t scheduled_steps(Method method, double minutes);

// Cap on original-speaker utterances mixed into adaptation.
inline constexpr std::size_t kOriginalPoolCap = 5000;

struct StepLog {
  std::int64_t step = 0;
  std::map<std::string, double> values;
  std::map<int, int> speaker_counts;  // dataset speaker id -> items in batch
  double wall_sec = 0.0;
};

// Optional on-disk outputs of a run: a per-step loss log and checkpoints.
struct RunOutputs {
  std::filesystem::path loss_log;        // TSV; empty disables
  std::filesystem::path checkpoint_dir;  // empty disables
  std::int64_t checkpoint_every = 0;     // 0 keeps only the final checkpoint
  std::function<void(const StepLog&)> on_step;
};

struct SynthesizerBundle {
  acoustic::AcousticModel model;
  std::vector<std::string> vocabulary;  // symbols for ids 1..n
  mel::MelConfig mel_config;
  pitch::YinConfig yin_config;
  std::map<int, int> speaker_rows;  // dataset speaker id -> table row
  std::int64_t step = 0;
  nn::Adam optimizer{nn::AdamConfig{}};

  data::Tokenizer tokenizer() const { return data::Tokenizer(vocabulary); }
  std::optional<int> speaker_row(int speaker_id) const;

  checkpoint::Container to_container() const;
  static SynthesizerBundle from_container(const checkpoint::Container& c);
  void save(const std::filesystem::path& path) const;
  static SynthesizerBundle load(const std::filesystem::path& path);
};

struct VocoderBundle {
  vocoder::Vocoder vocoder;
  std::int64_t step = 0;
  nn::Adam generator_optimizer{nn::AdamConfig{}};
  nn::Adam discriminator_optimizer{nn::AdamConfig{}};

  checkpoint::Container to_container() const;
  static VocoderBundle from_container(const checkpoint::Container& c);
  void save(const std::filesystem::path& path) const;
  static VocoderBundle load(const std::filesystem::path& path);
};

struct PretrainOptions {
  std::int64_t steps = 0;
  std::size_t batch_size = 8;
  double lr = 1e-3;
  std::int64_t warmup_steps = 100;  // linear ramp to lr
  std::uint64_t seed = 0;
};

struct FinetuneSpec {
  Method method = Method::kDirect;
  double minutes = 1.0;
  std::uint64_t seed = 0;
  double lr = 1e-4;
  std::size_t batch_size = 8;
};

struct TrainResult {
  std::vector<StepLog> log;
};

SynthesizerBundle init_synthesizer(const acoustic::AcousticConfig& config,
                                   const data::Tokenizer& tokenizer,
                                   const mel::MelConfig& mel_config,
                                   const pitch::YinConfig& yin_config, std::uint64_t seed);

// Trains a single-speaker synthesizer from scratch.
SynthesizerBundle pretrain(const std::vector<data::Example>& examples,
                           const acoustic::AcousticConfig& config,
                           const data::Tokenizer& tokenizer, const mel::MelConfig& mel_config,
                           const pitch::YinConfig& yin_config, const PretrainOptions& options,
                           TrainResult* result = nullptr, const RunOutputs& outputs = {});

SynthesizerBundle direct_finetune(const SynthesizerBundle& pretrained, const FinetuneSpec& spec,
                                  const std::vector<data::Example>& new_speaker,
                                  TrainResult* result = nullptr, const RunOutputs& outputs = {});

// Builds the two-speaker model (original speaker -> row 0, new -> row 1)
// with base parameters copied from `pretrained`, before any training.
SynthesizerBundle grow_speaker_table(const SynthesizerBundle& pretrained, int original_speaker,
                                     int new_speaker, std::uint64_t seed);

SynthesizerBundle mixed_finetune(const SynthesizerBundle& pretrained, const FinetuneSpec& spec,
                                 const std::vector<data::Example>& new_speaker,
                                 const std::vector<data::Example>& original_speaker,
                                 TrainResult* result = nullptr, const RunOutputs& outputs = {});

struct VocoderTrainOptions {
  std::int64_t steps = 0;
  std::size_t batch_size = 8;
  double lr = 2e-4;
  std::uint64_t seed = 0;
};

VocoderBundle init_vocoder(const vocoder::VocoderConfig& config,
                           const mel::MelConfig& mel_config, std::uint64_t seed);

VocoderBundle pretrain_vocoder(const std::vector<data::Example>& examples,
                               const vocoder::VocoderConfig& config,
                               const mel::MelConfig& mel_config,
                               const VocoderTrainOptions& options,
                               TrainResult* result = nullptr, const RunOutputs& outputs = {});

// Direct mode trains on the new speaker's (mel, waveform) pairs; mixed mode
// draws balanced batches from both speakers. No speaker conditioning is added.
VocoderBundle finetune_vocoder(const VocoderBundle& pretrained, const FinetuneSpec& spec,
                               const std::vector<data::Example>& new_speaker,
                               const std::vector<data::Example>& original_speaker = {},
                               TrainResult* result = nullptr, const RunOutputs& outputs = {});

// Mean weighted spectral loss of full-utterance generation over `examples`.
double vocoder_spectral_loss(const VocoderBundle& bundle,
                             const std::vector<data::Example>& examples);

// Mean mel MSE of teacher-forced synthesis over `examples`.
double synthesizer_mel_mse(const SynthesizerBundle& bundle,
                           const std::vector<data::Example>& examples);

}  // namespace vclone::finetune
