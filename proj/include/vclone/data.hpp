// Copyright 2026 The vclone Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Manifests, tokenization, duration-targeted subsets, balanced two-speaker
// batching and the on-disk feature caches.

#pragma once

#include "vclone/mel.hpp"
#include "vclone/pitch.hpp"

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "vclone/errors.hpp"

namespace vclone::data {

struct UtteranceRecord {
  std::filesystem::path audio_path;
  std::string text;
  int speaker_id = 0;
  double duration_sec = 0.0;

  bool operator==(const UtteranceRecord&) const = default;
};

// One JSON object per line with keys audio_filepath, text, speaker_id,
// duration. Blank lines are skipped; relative audio paths resolve against the
// manifest's directory. Errors name the offending line. Audio-only manifests
// (vocoder training) may omit the text.
std::vector<UtteranceRecord> load_manifest(const std::filesystem::path& path,
                                          bool require_text = true);
std::vector<UtteranceRecord> parse_manifest(std::string_view contents,
                                            const std::filesystem::path& base_dir,
                                            bool require_text = true);
void write_manifest(const std::filesystem::path& path,
                    const std::vector<UtteranceRecord>& records);

struct TokenSequence {
  std::vector<int> ids;
  std::vector<std::string> symbols;

  std::size_t size() const { return ids.size(); }
};

// Maps text to symbol strings before vocabulary lookup.
using Phonemizer = std::function<std::vector<std::string>(std::string_view)>;

class Tokenizer {
 public:
  static constexpr int kUnknownId = 0;
  static constexpr std::string_view kUnknownSymbol = "<unk>";

  // Lower-cased characters (letters, digits, space, common punctuation).
  Tokenizer();
  // `symbols` are assigned ids 1..n in order; id 0 is the unknown token.
  explicit Tokenizer(std::vector<std::string> symbols);

  void set_phonemizer(Phonemizer phonemizer) { phonemizer_ = std::move(phonemizer); }

  TokenSequence tokenize(std::string_view text) const;

  int vocab_size() const { return static_cast<int>(symbols_.size()); }
  const std::vector<std::string>& symbols() const { return symbols_; }
  // Space, punctuation and the unknown token are not spoken units.
  bool is_spoken(int id) const;

 private:
  std::vector<std::string> symbols_;  // index = id
  std::map<std::string, int, std::less<>> lookup_;
  Phonemizer phonemizer_;
};

// Splits UTF-8 text into lower-cased code points (ASCII lower-casing only).
std::vector<std::string> split_characters(std::string_view text);

// Walks `records` in order and stops at the first record where the cumulative
// duration reaches target_sec. Throws DataError if the total falls short.
std::vector<UtteranceRecord> take_until_duration(
    const std::vector<UtteranceRecord>& records, double target_sec);

// Seeded shuffle followed by take_until_duration. For a fixed seed the
// subset for a smaller target is a prefix of the subset for a larger one.
std::vector<UtteranceRecord> make_subset(const std::vector<UtteranceRecord>& records,
                                         double target_minutes, std::uint64_t seed);

// Seeded selection of at most `count` records (order follows the shuffle).
std::vector<UtteranceRecord> sample_records(const std::vector<UtteranceRecord>& records,
                                            std::size_t count, std::uint64_t seed);

std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed);

// Endless stream of batches drawing batch_size/2 items from each of two
// pools. Each pool is walked in a shuffled order that is redrawn at the start
// of every pass, so a small pool is cycled evenly.
template <typename T>
class BalancedBatches {
 public:
  BalancedBatches(const std::map<int, std::vector<T>>& pools,
                  std::size_t batch_size, std::uint64_t seed)
      : batch_size_(batch_size) {
    if (pools.size() != 2) throw ConfigError("balanced batches need exactly two pools");
    if (batch_size == 0 || batch_size % 2 != 0) {
      throw ConfigError("balanced batches need an even, positive batch_size");
    }
    std::size_t k = 0;
    for (const auto& [speaker, items] : pools) {
      if (items.empty()) {
        throw ConfigError("balanced batches: pool for speaker " +
                          std::to_string(speaker) + " is empty");
      }
      lanes_[k].speaker = speaker;
      lanes_[k].items = items;
      std::seed_seq seq{seed, static_cast<std::uint64_t>(k)};
      lanes_[k].rng.seed(seq);
      reshuffle(lanes_[k]);
      ++k;
    }
  }

  struct Item {
    int speaker;
    const T* value;
  };

  std::vector<Item> next() {
    std::vector<Item> batch;
    batch.reserve(batch_size_);
    for (auto& lane : lanes_) {
      for (std::size_t i = 0; i < batch_size_ / 2; ++i) {
        if (lane.cursor == lane.order.size()) reshuffle(lane);
        batch.push_back({lane.speaker, &lane.items[lane.order[lane.cursor++]]});
      }
    }
    return batch;
  }

 private:
  struct Lane {
    int speaker = 0;
    std::vector<T> items;
    std::vector<std::size_t> order;
    std::size_t cursor = 0;
    std::mt19937_64 rng;
  };

  static void reshuffle(Lane& lane) {
    lane.order.resize(lane.items.size());
    for (std::size_t i = 0; i < lane.order.size(); ++i) lane.order[i] = i;
    std::shuffle(lane.order.begin(), lane.order.end(), lane.rng);
    lane.cursor = 0;
  }

  std::size_t batch_size_;
  std::array<Lane, 2> lanes_;
};

// Binary matrix file: int32 rows, int32 cols, then rows*cols float32,
// little-endian, row-major. Used for mel caches and embedding exports.
void write_float_matrix(const std::filesystem::path& path, const ag::Matrix& m);
ag::Matrix read_float_matrix(const std::filesystem::path& path);

void write_mel_cache(const std::filesystem::path& path, const mel::MelSpectrogram& m);
mel::MelSpectrogram read_mel_cache(const std::filesystem::path& path,
                                   const mel::MelConfig& config);

// A record with its features computed in the loading path.
struct Example {
  UtteranceRecord record;
  TokenSequence tokens;
  std::vector<double> waveform;
  mel::MelSpectrogram mel;
  pitch::PitchContour pitch;  // same frame count as mel
};

// Records without text (audio-only manifests) get an empty token sequence.
Example prepare_example(const UtteranceRecord& record, const Tokenizer& tokenizer,
                        const mel::MelConfig& mel_config,
                        const pitch::YinConfig& yin_config);
std::vector<Example> prepare_examples(const std::vector<UtteranceRecord>& records,
                                      const Tokenizer& tokenizer,
                                      const mel::MelConfig& mel_config,
                                      const pitch::YinConfig& yin_config);

double total_duration(const std::vector<UtteranceRecord>& records);

}  // namespace vclone::data
