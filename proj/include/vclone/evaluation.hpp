// Copyright 2026 The vclone Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Pitch-error metrics, speaker-verification trials and EER, speaking rate,
// utterance embeddings, and the combined evaluation report.

#pragma once

#include "vclone/data.hpp"
#include "vclone/finetune.hpp"
#include "vclone/mel.hpp"
#include "vclone/pitch.hpp"

#include <json.hpp>

#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace vclone::evaluation {

inline constexpr double kDefaultRelThreshold = 0.2;

struct PitchErrorReport {
  double gpe_pct = 0.0;
  double vde_pct = 0.0;
  double ffe_pct = 0.0;
};

// Frame counts behind the three pitch metrics; summing counts over several
// utterances gives pooled-frame metrics.
struct PitchErrorCounts {
  std::size_t frames = 0;
  std::size_t both_voiced = 0;
  std::size_t gross = 0;           // both voiced and outside the threshold
  std::size_t voicing_errors = 0;  // voicing decisions differ

  PitchErrorCounts& operator+=(const PitchErrorCounts& other);
  PitchErrorReport report() const;
};

// Throws DataError when lengths differ.
PitchErrorCounts count_pitch_errors(const pitch::PitchContour& pred,
                                    const pitch::PitchContour& ref,
                                    double rel_threshold = kDefaultRelThreshold);

double gpe(const pitch::PitchContour& pred, const pitch::PitchContour& ref,
           double rel_threshold = kDefaultRelThreshold);
double vde(const pitch::PitchContour& pred, const pitch::PitchContour& ref);
double ffe(const pitch::PitchContour& pred, const pitch::PitchContour& ref,
           double rel_threshold = kDefaultRelThreshold);
PitchErrorReport pitch_errors(const pitch::PitchContour& pred, const pitch::PitchContour& ref,
                              double rel_threshold = kDefaultRelThreshold);

struct TrialPair {
  std::string enroll_utterance_id;
  std::string test_utterance_id;
  bool same = false;
  double score = 0.0;
};

// Speaker id -> utterance ids of that speaker's validation set.
using ValidationSets = std::map<int, std::vector<std::string>>;

// Each target item is paired with the target's other items (same) and with
// every item of every other speaker (different). `enroll_prefix` is prepended
// to enrollment ids so synthetic versions of the target items can be scored
// against the same real test items.
std::vector<TrialPair> build_trials(const ValidationSets& validation, int target_speaker,
                                    std::string_view enroll_prefix = {});

struct ScoredTrial {
  double score = 0.0;
  bool same = false;
};

struct DetPoint {
  double threshold = 0.0;
  double far = 0.0;  // negatives accepted (score >= threshold)
  double frr = 0.0;  // positives rejected (score < threshold)
};

// One point per distinct score plus a final point above every score.
std::vector<DetPoint> det_curve(std::span<const ScoredTrial> trials);

// Percentage. Throws DataError unless both classes are present.
double eer(std::span<const ScoredTrial> trials);

// Spoken tokens per second. Throws DataError for non-positive duration.
double phoneme_rate(const data::TokenSequence& tokens, const data::Tokenizer& tokenizer,
                    double duration_sec);

struct Utterance {
  std::string utterance_id;
  int speaker_id = 0;
  std::string origin;  // "real" or "synthetic"
  std::vector<double> audio;
};

using Embedder = std::function<std::vector<double>(const Utterance& utterance)>;

// Per-mel-band mean followed by per-band standard deviation of the log-mel
// spectrogram (2 * n_mels values).
Embedder fallback_embedder(const mel::MelConfig& config);

double cosine_similarity(std::span<const double> a, std::span<const double> b);

struct EmbeddingRecord {
  std::string utterance_id;
  int speaker_id = 0;
  std::string origin;
  std::vector<double> vector;
};

// Throws DataError if the embedder's output size varies.
std::vector<EmbeddingRecord> embed_utterances(const std::vector<Utterance>& utterances,
                                              const Embedder& embedder);

// Matrix file (int32 N, int32 D, float32 values) plus a tab-separated label
// file with one "utterance_id speaker_id origin" line per row.
void export_embeddings(const std::vector<EmbeddingRecord>& records,
                       const std::filesystem::path& matrix_path,
                       const std::filesystem::path& labels_path);

// Cosine scores for every trial; ids must be present in `records`.
void score_trials(std::vector<TrialPair>& trials, const std::vector<EmbeddingRecord>& records);

// Reads a matrix + label export back. Synthetic rows are keyed as
// "synthetic/<utterance_id>".
std::vector<EmbeddingRecord> load_embeddings(const std::filesystem::path& matrix_path,
                                             const std::filesystem::path& labels_path);
// Looks vectors up by utterance id instead of computing them.
Embedder table_embedder(const std::vector<EmbeddingRecord>& records);

struct EvaluationSet {
  int target_speaker = 0;
  std::vector<data::Example> target;  // real validation items of the target
  std::vector<data::Example> others;  // real validation items of other speakers
};

struct EvaluationOptions {
  double rel_threshold = kDefaultRelThreshold;
  Embedder embedder;  // empty selects fallback_embedder
  double pace = 1.0;
  std::filesystem::path embeddings_dir;  // empty skips the export
  std::filesystem::path det_dir;         // empty skips DET dumps
};

struct UtteranceEvaluation {
  std::string utterance_id;
  PitchErrorReport pitch;
  double real_phoneme_rate = 0.0;
  double synthetic_phoneme_rate = 0.0;
};

struct EvaluationReport {
  int target_speaker = 0;
  PitchErrorReport pooled;
  PitchErrorReport per_utterance_mean;
  std::size_t pitch_frames = 0;
  double eer_real_pct = 0.0;
  double eer_synthetic_pct = 0.0;
  std::size_t trials_real = 0;
  std::size_t trials_synthetic = 0;
  std::size_t positive_trials = 0;
  std::size_t negative_trials = 0;
  double real_phoneme_rate = 0.0;
  double synthetic_phoneme_rate = 0.0;
  std::vector<UtteranceEvaluation> utterances;

  nlohmann::ordered_json to_json() const;
};

// Utterance id of an example: the audio file name without extension.
std::string utterance_id(const data::Example& example);

// Synthetic renditions of one target item: durations forced from the real
// mel (pitch metrics) and free-running (speaking rate and verification).
struct SynthesizedItem {
  std::string utterance_id;
  std::vector<double> forced_audio;
  std::vector<double> free_audio;
};

std::vector<SynthesizedItem> synthesize_items(const finetune::SynthesizerBundle& synthesizer,
                                              const finetune::VocoderBundle& vocoder,
                                              const std::vector<data::Example>& target,
                                              int target_speaker, double pace = 1.0);

// Scores already synthesized audio; `items` must cover every target item.
EvaluationReport score_synthesized(const EvaluationSet& set,
                                   const std::vector<SynthesizedItem>& items,
                                   const data::Tokenizer& tokenizer,
                                   const mel::MelConfig& mel_config,
                                   const pitch::YinConfig& yin_config,
                                   const EvaluationOptions& options = {});

EvaluationReport evaluate(const finetune::SynthesizerBundle& synthesizer,
                          const finetune::VocoderBundle& vocoder, const EvaluationSet& set,
                          const EvaluationOptions& options = {});

}  // namespace vclone::evaluation
