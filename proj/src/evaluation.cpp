// Copyright 2026 The vclone Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "vclone/evaluation.hpp"

#include "vclone/errors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>

namespace vclone::evaluation {

namespace {

double pct(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : 100.0 * static_cast<double>(num) / static_cast<double>(den);
}

nlohmann::ordered_json to_json(const PitchErrorReport& r) {
  return {{"gpe_pct", r.gpe_pct}, {"vde_pct", r.vde_pct}, {"ffe_pct", r.ffe_pct}};
}

void write_det(const std::filesystem::path& path, std::span<const DetPoint> points) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "threshold\tfar\tfrr\n";
  for (const auto& p : points) out << p.threshold << '\t' << p.far << '\t' << p.frr << '\n';
}

std::vector<ScoredTrial> scored(const std::vector<TrialPair>& trials) {
  std::vector<ScoredTrial> out;
  out.reserve(trials.size());
  for (const auto& t : trials) out.push_back({t.score, t.same});
  return out;
}

}  // namespace

PitchErrorCounts& PitchErrorCounts::operator+=(const PitchErrorCounts& other) {
  frames += other.frames;
  both_voiced += other.both_voiced;
  gross += other.gross;
  voicing_errors += other.voicing_errors;
  return *this;
}

PitchErrorReport PitchErrorCounts::report() const {
  return {pct(gross, both_voiced), pct(voicing_errors, frames), pct(gross + voicing_errors, frames)};
}

PitchErrorCounts count_pitch_errors(const pitch::PitchContour& pred,
                                    const pitch::PitchContour& ref, double rel_threshold) {
  if (pred.size() != ref.size() || pred.voiced.size() != ref.voiced.size() ||
      pred.voiced.size() != pred.size()) {
    throw DataError("pitch contours differ in length (" + std::to_string(pred.size()) + " vs " +
                    std::to_string(ref.size()) + ")");
  }
  PitchErrorCounts c;
  c.frames = ref.size();
  for (std::size_t t = 0; t < ref.size(); ++t) {
    if (pred.voiced[t] != ref.voiced[t]) {
      ++c.voicing_errors;
    } else if (ref.voiced[t]) {
      ++c.both_voiced;
      if (std::abs(pred.f0_hz[t] - ref.f0_hz[t]) > rel_threshold * ref.f0_hz[t]) ++c.gross;
    }
  }
  return c;
}

double gpe(const pitch::PitchContour& pred, const pitch::PitchContour& ref, double rel_threshold) {
  return count_pitch_errors(pred, ref, rel_threshold).report().gpe_pct;
}

double vde(const pitch::PitchContour& pred, const pitch::PitchContour& ref) {
  return count_pitch_errors(pred, ref).report().vde_pct;
}

double ffe(const pitch::PitchContour& pred, const pitch::PitchContour& ref, double rel_threshold) {
  return count_pitch_errors(pred, ref, rel_threshold).report().ffe_pct;
}

PitchErrorReport pitch_errors(const pitch::PitchContour& pred, const pitch::PitchContour& ref,
                              double rel_threshold) {
  return count_pitch_errors(pred, ref, rel_threshold).report();
}

std::vector<TrialPair> build_trials(const ValidationSets& validation, int target_speaker,
                                    std::string_view enroll_prefix) {
  auto it = validation.find(target_speaker);
  if (it == validation.end()) {
    throw DataError("target speaker " + std::to_string(target_speaker) +
                    " has no validation items");
  }
  const auto& target = it->second;
  std::vector<TrialPair> trials;
  for (std::size_t i = 0; i < target.size(); ++i) {
    const std::string enroll = std::string(enroll_prefix) + target[i];
    for (std::size_t j = 0; j < target.size(); ++j) {
      if (j != i) trials.push_back({enroll, target[j], true, 0.0});
    }
    for (const auto& [speaker, items] : validation) {
      if (speaker == target_speaker) continue;
      for (const auto& other : items) trials.push_back({enroll, other, false, 0.0});
    }
  }
  return trials;
}

std::vector<DetPoint> det_curve(std::span<const ScoredTrial> trials) {
  std::vector<double> pos, neg;
  for (const auto& t : trials) (t.same ? pos : neg).push_back(t.score);
  if (pos.empty() || neg.empty()) {
    throw DataError("EER needs at least one same-speaker and one different-speaker trial");
  }
  std::sort(pos.begin(), pos.end());
  std::sort(neg.begin(), neg.end());
  std::set<double> thresholds;
  for (const auto& t : trials) thresholds.insert(t.score);

  std::vector<DetPoint> points;
  points.reserve(thresholds.size() + 1);
  const double np = static_cast<double>(pos.size());
  const double nn = static_cast<double>(neg.size());
  for (double th : thresholds) {
    const auto rejected = std::lower_bound(pos.begin(), pos.end(), th) - pos.begin();
    const auto accepted = neg.end() - std::lower_bound(neg.begin(), neg.end(), th);
    points.push_back({th, static_cast<double>(accepted) / nn, static_cast<double>(rejected) / np});
  }
  points.push_back({std::numeric_limits<double>::infinity(), 0.0, 1.0});
  return points;
}

double eer(std::span<const ScoredTrial> trials) {
  const auto points = det_curve(trials);
  // FAR falls and FRR rises along the sweep; interpolate where they cross.
  for (std::size_t i = 0; i < points.size(); ++i) {
    const double d = points[i].frr - points[i].far;
    if (d < 0.0) continue;
    if (i == 0 || d == 0.0) return 100.0 * points[i].far;
    const double d_prev = points[i - 1].frr - points[i - 1].far;
    const double a = -d_prev / (d - d_prev);
    return 100.0 * (points[i - 1].far + a * (points[i].far - points[i - 1].far));
  }
  return 100.0;
}

double phoneme_rate(const data::TokenSequence& tokens, const data::Tokenizer& tokenizer,
                    double duration_sec) {
  if (!(duration_sec > 0.0)) throw DataError("phoneme rate needs a positive duration");
  std::size_t spoken = 0;
  for (int id : tokens.ids) spoken += tokenizer.is_spoken(id) ? 1 : 0;
  return static_cast<double>(spoken) / duration_sec;
}

Embedder fallback_embedder(const mel::MelConfig& config) {
  return [config](const Utterance& u) {
    const mel::MelSpectrogram m = mel::compute_mel(u.audio, config);
    const Eigen::Index bands = m.values.cols();
    std::vector<double> out(static_cast<std::size_t>(2 * bands));
    const auto mean = m.values.colwise().mean();
    for (Eigen::Index b = 0; b < bands; ++b) {
      const double mu = mean(b);
      const double var = (m.values.col(b).array() - mu).square().mean();
      out[static_cast<std::size_t>(b)] = mu;
      out[static_cast<std::size_t>(bands + b)] = std::sqrt(var);
    }
    return out;
  };
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DataError("cosine similarity of vectors of different sizes");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / std::sqrt(na * nb);
}

std::vector<EmbeddingRecord> embed_utterances(const std::vector<Utterance>& utterances,
                                              const Embedder& embedder) {
  std::vector<EmbeddingRecord> out;
  out.reserve(utterances.size());
  for (const auto& u : utterances) {
    EmbeddingRecord r{u.utterance_id, u.speaker_id, u.origin, embedder(u)};
    if (!out.empty() && r.vector.size() != out.front().vector.size()) {
      throw DataError("embedder returned " + std::to_string(r.vector.size()) +
                      " values for " + u.utterance_id + ", expected " +
                      std::to_string(out.front().vector.size()));
    }
    out.push_back(std::move(r));
  }
  return out;
}

void export_embeddings(const std::vector<EmbeddingRecord>& records,
                       const std::filesystem::path& matrix_path,
                       const std::filesystem::path& labels_path) {
  const std::size_t dim = records.empty() ? 0 : records.front().vector.size();
  ag::Matrix m(static_cast<Eigen::Index>(records.size()), static_cast<Eigen::Index>(dim));
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (records[i].vector.size() != dim) throw DataError("embeddings differ in dimensionality");
    for (std::size_t j = 0; j < dim; ++j) {
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = records[i].vector[j];
    }
  }
  data::write_float_matrix(matrix_path, m);
  if (labels_path.has_parent_path()) std::filesystem::create_directories(labels_path.parent_path());
  std::ofstream out(labels_path);
  if (!out) throw DataError("cannot write " + labels_path.string());
  for (const auto& r : records) {
    out << r.utterance_id << '\t' << r.speaker_id << '\t' << r.origin << '\n';
  }
}

void score_trials(std::vector<TrialPair>& trials, const std::vector<EmbeddingRecord>& records) {
  std::map<std::string, const std::vector<double>*> index;
  for (const auto& r : records) index[r.utterance_id] = &r.vector;
  auto lookup = [&](const std::string& id) -> const std::vector<double>& {
    auto it = index.find(id);
    if (it == index.end()) throw DataError("no embedding for utterance " + id);
    return *it->second;
  };
  for (auto& t : trials) {
    t.score = cosine_similarity(lookup(t.enroll_utterance_id), lookup(t.test_utterance_id));
  }
}

std::vector<EmbeddingRecord> load_embeddings(const std::filesystem::path& matrix_path,
                                             const std::filesystem::path& labels_path) {
  const ag::Matrix m = data::read_float_matrix(matrix_path);
  std::ifstream in(labels_path);
  if (!in) throw DataError("cannot open " + labels_path.string());
  std::vector<EmbeddingRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto t1 = line.find('\t');
    const auto t2 = t1 == std::string::npos ? t1 : line.find('\t', t1 + 1);
    if (t2 == std::string::npos) {
      throw DataError(labels_path.string() + " line " + std::to_string(out.size() + 1) +
                      ": expected utterance_id, speaker_id and origin");
    }
    EmbeddingRecord r;
    r.utterance_id = line.substr(0, t1);
    try {
      r.speaker_id = std::stoi(line.substr(t1 + 1, t2 - t1 - 1));
    } catch (const std::exception&) {
      throw DataError(labels_path.string() + ": bad speaker id in line " +
                      std::to_string(out.size() + 1));
    }
    r.origin = line.substr(t2 + 1);
    if (r.origin == "synthetic" && r.utterance_id.rfind("synthetic/", 0) != 0) {
      r.utterance_id = "synthetic/" + r.utterance_id;
    }
    out.push_back(std::move(r));
  }
  if (static_cast<Eigen::Index>(out.size()) != m.rows()) {
    throw DataError("embedding matrix has " + std::to_string(m.rows()) + " rows but " +
                    std::to_string(out.size()) + " labels");
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto row = m.row(static_cast<Eigen::Index>(i));
    out[i].vector.assign(row.data(), row.data() + row.size());
  }
  return out;
}

Embedder table_embedder(const std::vector<EmbeddingRecord>& records) {
  auto index = std::make_shared<std::map<std::string, std::vector<double>>>();
  for (const auto& r : records) (*index)[r.utterance_id] = r.vector;
  return [index](const Utterance& u) {
    auto it = index->find(u.utterance_id);
    if (it == index->end()) throw DataError("no embedding for utterance " + u.utterance_id);
    return it->second;
  };
}

std::string utterance_id(const data::Example& example) {
  return example.record.audio_path.stem().string();
}

nlohmann::ordered_json EvaluationReport::to_json() const {
  nlohmann::ordered_json j;
  j["target_speaker"] = target_speaker;
  j["pitch_errors"] = {{"pooled", evaluation::to_json(pooled)},
                       {"per_utterance_mean", evaluation::to_json(per_utterance_mean)},
                       {"frames", pitch_frames}};
  j["speaker_verification"] = {{"eer_real_pct", eer_real_pct},
                               {"eer_synthetic_pct", eer_synthetic_pct},
                               {"trials_real", trials_real},
                               {"trials_synthetic", trials_synthetic},
                               {"positive_trials", positive_trials},
                               {"negative_trials", negative_trials}};
  j["phoneme_rate"] = {{"real", real_phoneme_rate}, {"synthetic", synthetic_phoneme_rate}};
  nlohmann::ordered_json utts = nlohmann::ordered_json::array();
  for (const auto& u : utterances) {
    utts.push_back({{"utterance_id", u.utterance_id},
                    {"pitch_errors", evaluation::to_json(u.pitch)},
                    {"real_phoneme_rate", u.real_phoneme_rate},
                    {"synthetic_phoneme_rate", u.synthetic_phoneme_rate}});
  }
  j["utterances"] = std::move(utts);
  return j;
}

std::vector<SynthesizedItem> synthesize_items(const finetune::SynthesizerBundle& synthesizer,
                                              const finetune::VocoderBundle& vocoder,
                                              const std::vector<data::Example>& target,
                                              int target_speaker, double pace) {
  if (!(synthesizer.mel_config == vocoder.vocoder.mel_config())) {
    throw ConfigError("synthesizer and vocoder use different mel settings");
  }
  ag::NoGradGuard no_grad;
  const auto speaker = synthesizer.speaker_row(target_speaker);
  std::vector<SynthesizedItem> items;
  for (const auto& ex : target) {
    const auto forced =
        synthesizer.model.synthesize_with_reference_durations(ex.tokens.ids, ex.mel, speaker);
    const auto free =
        synthesizer.model.synthesize(ex.tokens.ids, speaker, synthesizer.mel_config, pace);
    items.push_back({utterance_id(ex), vocoder.vocoder.generate(forced.mel),
                     vocoder.vocoder.generate(free.mel)});
  }
  return items;
}

EvaluationReport score_synthesized(const EvaluationSet& set,
                                   const std::vector<SynthesizedItem>& items,
                                   const data::Tokenizer& tokenizer,
                                   const mel::MelConfig& mel_config,
                                   const pitch::YinConfig& yin_config,
                                   const EvaluationOptions& options) {
  if (set.target.size() < 2) throw DataError("evaluation needs at least two target utterances");
  if (set.others.empty()) throw DataError("evaluation needs utterances of other speakers");
  const int sr = mel_config.sample_rate_hz;
  std::map<std::string, const SynthesizedItem*> synthesized;
  for (const auto& it : items) synthesized[it.utterance_id] = &it;

  EvaluationReport report;
  report.target_speaker = set.target_speaker;
  PitchErrorCounts pooled;
  std::vector<Utterance> utterances;
  ValidationSets validation;
  std::set<std::string> seen;

  for (const auto& ex : set.target) {
    if (ex.record.speaker_id != set.target_speaker) {
      throw DataError("target set contains speaker " + std::to_string(ex.record.speaker_id));
    }
    UtteranceEvaluation u;
    u.utterance_id = utterance_id(ex);
    if (!seen.insert(u.utterance_id).second) {
      throw DataError("duplicate utterance id " + u.utterance_id);
    }
    auto found = synthesized.find(u.utterance_id);
    if (found == synthesized.end()) throw DataError("no synthesized audio for " + u.utterance_id);
    const SynthesizedItem& item = *found->second;

    const pitch::PitchContour contour =
        pitch::estimate_f0(item.forced_audio, yin_config, ex.pitch.size());
    const PitchErrorCounts counts = count_pitch_errors(contour, ex.pitch, options.rel_threshold);
    pooled += counts;
    u.pitch = counts.report();
    u.real_phoneme_rate =
        phoneme_rate(ex.tokens, tokenizer, static_cast<double>(ex.waveform.size()) / sr);
    u.synthetic_phoneme_rate =
        phoneme_rate(ex.tokens, tokenizer, static_cast<double>(item.free_audio.size()) / sr);

    report.per_utterance_mean.gpe_pct += u.pitch.gpe_pct;
    report.per_utterance_mean.vde_pct += u.pitch.vde_pct;
    report.per_utterance_mean.ffe_pct += u.pitch.ffe_pct;
    report.real_phoneme_rate += u.real_phoneme_rate;
    report.synthetic_phoneme_rate += u.synthetic_phoneme_rate;

    validation[set.target_speaker].push_back(u.utterance_id);
    utterances.push_back({u.utterance_id, set.target_speaker, "real", ex.waveform});
    utterances.push_back(
        {"synthetic/" + u.utterance_id, set.target_speaker, "synthetic", item.free_audio});
    report.utterances.push_back(std::move(u));
  }
  for (const auto& ex : set.others) {
    if (ex.record.speaker_id == set.target_speaker) {
      throw DataError("other-speaker set contains the target speaker");
    }
    const std::string id = utterance_id(ex);
    if (!seen.insert(id).second) throw DataError("duplicate utterance id " + id);
    validation[ex.record.speaker_id].push_back(id);
    utterances.push_back({id, ex.record.speaker_id, "real", ex.waveform});
  }

  const double n = static_cast<double>(set.target.size());
  report.per_utterance_mean.gpe_pct /= n;
  report.per_utterance_mean.vde_pct /= n;
  report.per_utterance_mean.ffe_pct /= n;
  report.real_phoneme_rate /= n;
  report.synthetic_phoneme_rate /= n;
  report.pooled = pooled.report();
  report.pitch_frames = pooled.frames;

  const Embedder embedder = options.embedder ? options.embedder : fallback_embedder(mel_config);
  const auto records = embed_utterances(utterances, embedder);
  if (!options.embeddings_dir.empty()) {
    export_embeddings(records, options.embeddings_dir / "embeddings.bin",
                      options.embeddings_dir / "labels.tsv");
  }

  auto real_trials = build_trials(validation, set.target_speaker);
  auto synth_trials = build_trials(validation, set.target_speaker, "synthetic/");
  score_trials(real_trials, records);
  score_trials(synth_trials, records);
  const auto real_scores = scored(real_trials);
  const auto synth_scores = scored(synth_trials);
  report.eer_real_pct = eer(real_scores);
  report.eer_synthetic_pct = eer(synth_scores);
  report.trials_real = real_trials.size();
  report.trials_synthetic = synth_trials.size();
  for (const auto& t : real_trials) (t.same ? report.positive_trials : report.negative_trials)++;
  if (!options.det_dir.empty()) {
    write_det(options.det_dir / "det_real.tsv", det_curve(real_scores));
    write_det(options.det_dir / "det_synthetic.tsv", det_curve(synth_scores));
  }
  return report;
}

EvaluationReport evaluate(const finetune::SynthesizerBundle& synthesizer,
                          const finetune::VocoderBundle& vocoder, const EvaluationSet& set,
                          const EvaluationOptions& options) {
  const auto items =
      synthesize_items(synthesizer, vocoder, set.target, set.target_speaker, options.pace);
  return score_synthesized(set, items, synthesizer.tokenizer(), synthesizer.mel_config,
                           synthesizer.yin_config, options);
}

}  // namespace vclone::evaluation
