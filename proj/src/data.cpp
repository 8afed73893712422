// Copyright 2026 The vclone Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "vclone/data.hpp"

#include "vclone/audio.hpp"

#include <json.hpp>

#include <bit>
#include <cctype>
#include <fstream>
#include <sstream>

namespace vclone::data {

static_assert(std::endian::native == std::endian::little,
              "cache formats assume a little-endian host");

namespace {

bool is_blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(),
                     [](unsigned char c) { return std::isspace(c) != 0; });
}

DataError line_error(std::size_t line, const std::string& what) {
  return DataError("manifest line " + std::to_string(line) + ": " + what);
}

}  // namespace

std::vector<UtteranceRecord> parse_manifest(std::string_view contents,
                                            const std::filesystem::path& base_dir,
                                            bool require_text) {
  std::vector<UtteranceRecord> records;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= contents.size()) {
    const std::size_t end = std::min(contents.find('\n', pos), contents.size());
    std::string_view line = contents.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (is_blank(line)) {
      if (end == contents.size()) break;
      continue;
    }
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw line_error(line_no, std::string("invalid JSON (") + e.what() + ")");
    }
    if (!j.is_object()) throw line_error(line_no, "record is not an object");
    for (const char* key : {"audio_filepath", "text", "speaker_id", "duration"}) {
      if (!require_text && std::string_view(key) == "text") continue;
      if (!j.contains(key)) throw line_error(line_no, std::string("missing key '") + key + "'");
    }
    UtteranceRecord r;
    try {
      r.audio_path = j.at("audio_filepath").get<std::string>();
      if (j.contains("text")) r.text = j.at("text").get<std::string>();
      const auto speaker = j.at("speaker_id").get<long long>();
      if (speaker < 0) throw line_error(line_no, "negative speaker_id");
      r.speaker_id = static_cast<int>(speaker);
      r.duration_sec = j.at("duration").get<double>();
    } catch (const nlohmann::json::exception& e) {
      throw line_error(line_no, std::string("bad field type (") + e.what() + ")");
    }
    if (!(r.duration_sec > 0.0)) {
      throw line_error(line_no, "duration must be positive, got " +
                                    std::to_string(r.duration_sec));
    }
    if (require_text && is_blank(r.text)) throw line_error(line_no, "empty text");
    if (r.audio_path.is_relative() && !base_dir.empty()) {
      r.audio_path = base_dir / r.audio_path;
    }
    records.push_back(std::move(r));
    if (end == contents.size()) break;
  }
  return records;
}

std::vector<UtteranceRecord> load_manifest(const std::filesystem::path& path,
                                          bool require_text) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open manifest: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_manifest(ss.str(), path.parent_path(), require_text);
}

void write_manifest(const std::filesystem::path& path,
                    const std::vector<UtteranceRecord>& records) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write manifest: " + path.string());
  for (const auto& r : records) {
    nlohmann::ordered_json j;
    j["audio_filepath"] = r.audio_path.string();
    j["text"] = r.text;
    j["speaker_id"] = r.speaker_id;
    j["duration"] = r.duration_sec;
    out << j.dump() << '\n';
  }
}

std::vector<std::string> split_characters(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    const auto lead = static_cast<unsigned char>(text[i]);
    std::size_t len = 1;
    if (lead >= 0xF0) {
      len = 4;
    } else if (lead >= 0xE0) {
      len = 3;
    } else if (lead >= 0xC0) {
      len = 2;
    }
    len = std::min(len, text.size() - i);
    std::string ch(text.substr(i, len));
    if (len == 1) ch[0] = static_cast<char>(std::tolower(lead));
    out.push_back(std::move(ch));
    i += len;
  }
  return out;
}

Tokenizer::Tokenizer() {
  std::vector<std::string> symbols{" "};
  for (char c = 'a'; c <= 'z'; ++c) symbols.emplace_back(1, c);
  for (char c = '0'; c <= '9'; ++c) symbols.emplace_back(1, c);
  for (char c : std::string_view(".,!?;:'\"-()")) symbols.emplace_back(1, c);
  *this = Tokenizer(std::move(symbols));
}

Tokenizer::Tokenizer(std::vector<std::string> symbols) {
  symbols_.emplace_back(kUnknownSymbol);
  for (auto& s : symbols) {
    if (lookup_.count(s) != 0 || s == kUnknownSymbol) {
      throw ConfigError("duplicate vocabulary symbol '" + s + "'");
    }
    lookup_.emplace(s, static_cast<int>(symbols_.size()));
    symbols_.push_back(std::move(s));
  }
}

TokenSequence Tokenizer::tokenize(std::string_view text) const {
  if (is_blank(text)) throw DataError("cannot tokenize empty text");
  std::vector<std::string> pieces =
      phonemizer_ ? phonemizer_(text) : split_characters(text);
  TokenSequence seq;
  seq.ids.reserve(pieces.size());
  for (auto& p : pieces) {
    auto it = lookup_.find(p);
    seq.ids.push_back(it == lookup_.end() ? kUnknownId : it->second);
    seq.symbols.push_back(std::move(p));
  }
  if (seq.ids.empty()) throw DataError("tokenization produced no tokens");
  return seq;
}

bool Tokenizer::is_spoken(int id) const {
  if (id <= kUnknownId || id >= vocab_size()) return false;
  const std::string& s = symbols_[static_cast<std::size_t>(id)];
  if (s.size() == 1) {
    const auto c = static_cast<unsigned char>(s[0]);
    return std::isspace(c) == 0 && std::ispunct(c) == 0;
  }
  return true;
}

double total_duration(const std::vector<UtteranceRecord>& records) {
  double total = 0.0;
  for (const auto& r : records) total += r.duration_sec;
  return total;
}

std::vector<UtteranceRecord> take_until_duration(
    const std::vector<UtteranceRecord>& records, double target_sec) {
  if (!(target_sec > 0.0)) throw ConfigError("subset target must be positive");
  std::vector<UtteranceRecord> out;
  double acc = 0.0;
  for (const auto& r : records) {
    out.push_back(r);
    acc += r.duration_sec;
    if (acc >= target_sec) return out;
  }
  std::ostringstream msg;
  msg << "insufficient audio: " << acc << " s available, " << target_sec
      << " s requested";
  throw DataError(msg.str());
}

std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

std::vector<UtteranceRecord> make_subset(const std::vector<UtteranceRecord>& records,
                                         double target_minutes, std::uint64_t seed) {
  std::vector<UtteranceRecord> shuffled;
  shuffled.reserve(records.size());
  for (std::size_t i : seeded_permutation(records.size(), seed)) {
    shuffled.push_back(records[i]);
  }
  return take_until_duration(shuffled, target_minutes * 60.0);
}

std::vector<UtteranceRecord> sample_records(const std::vector<UtteranceRecord>& records,
                                            std::size_t count, std::uint64_t seed) {
  std::vector<UtteranceRecord> out;
  for (std::size_t i : seeded_permutation(records.size(), seed)) {
    if (out.size() == count) break;
    out.push_back(records[i]);
  }
  return out;
}

void write_float_matrix(const std::filesystem::path& path, const ag::Matrix& m) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write matrix file: " + path.string());
  const std::int32_t header[2] = {static_cast<std::int32_t>(m.rows()),
                                  static_cast<std::int32_t>(m.cols())};
  out.write(reinterpret_cast<const char*>(header), sizeof header);
  std::vector<float> row(static_cast<std::size_t>(m.cols()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      row[static_cast<std::size_t>(c)] = static_cast<float>(m(r, c));
    }
    out.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(row.size() * sizeof(float)));
  }
}

ag::Matrix read_float_matrix(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open matrix file: " + path.string());
  std::int32_t header[2] = {0, 0};
  in.read(reinterpret_cast<char*>(header), sizeof header);
  if (!in || header[0] < 0 || header[1] < 0) {
    throw DataError("bad matrix header in " + path.string());
  }
  ag::Matrix m(header[0], header[1]);
  std::vector<float> row(static_cast<std::size_t>(header[1]));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    in.read(reinterpret_cast<char*>(row.data()),
            static_cast<std::streamsize>(row.size() * sizeof(float)));
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = row[static_cast<std::size_t>(c)];
  }
  if (!in) throw DataError("truncated matrix file: " + path.string());
  return m;
}

void write_mel_cache(const std::filesystem::path& path, const mel::MelSpectrogram& m) {
  write_float_matrix(path, m.values);
}

mel::MelSpectrogram read_mel_cache(const std::filesystem::path& path,
                                   const mel::MelConfig& config) {
  mel::MelSpectrogram m;
  m.values = read_float_matrix(path);
  m.config = config;
  if (m.values.cols() != config.n_mels) {
    throw DataError("mel cache " + path.string() + " has " +
                    std::to_string(m.values.cols()) + " bins, expected " +
                    std::to_string(config.n_mels));
  }
  return m;
}

Example prepare_example(const UtteranceRecord& record, const Tokenizer& tokenizer,
                        const mel::MelConfig& mel_config,
                        const pitch::YinConfig& yin_config) {
  if (yin_config.hop_length != mel_config.hop_length ||
      yin_config.sample_rate_hz != mel_config.sample_rate_hz) {
    throw ConfigError("pitch and mel extraction must share hop and sample rate");
  }
  if (!std::filesystem::exists(record.audio_path)) {
    throw DataError("audio file does not exist: " + record.audio_path.string());
  }
  Example ex;
  ex.record = record;
  if (!is_blank(record.text)) ex.tokens = tokenizer.tokenize(record.text);
  ex.waveform = audio::load_audio(record.audio_path, mel_config.sample_rate_hz).samples;
  ex.mel = mel::compute_mel(ex.waveform, mel_config);
  ex.pitch = pitch::estimate_f0(ex.waveform, yin_config,
                                static_cast<std::size_t>(ex.mel.frames()));
  return ex;
}

std::vector<Example> prepare_examples(const std::vector<UtteranceRecord>& records,
                                      const Tokenizer& tokenizer,
                                      const mel::MelConfig& mel_config,
                                      const pitch::YinConfig& yin_config) {
  std::vector<Example> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    out.push_back(prepare_example(r, tokenizer, mel_config, yin_config));
  }
  return out;
}

}  // namespace vclone::data
