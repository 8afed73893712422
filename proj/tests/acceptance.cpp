// Copyright 2026 The vclone Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero if any criterion fails.

#include "vclone/align.hpp"
#include "vclone/evaluation.hpp"
#include "vclone/finetune.hpp"
#include "vclone/toy_corpus.hpp"

#include "test_util.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <numbers>
#include <sstream>

namespace {

using namespace vclone;
using ag::Matrix;

// Tolerances and budgets.
constexpr double kForwardSumTol = 1e-6;
constexpr double kAlignRuntimeSec = 10.0;
constexpr double kGradEps = 1e-4;
constexpr double kGradRelTol = 1e-4;
constexpr double kGradRuntimeSec = 60.0;
constexpr double kPitchRelTol = 0.01;
constexpr double kMetricTol = 1e-9;
constexpr std::size_t kPaperTrials = 49900;
constexpr double kEerNullCenter = 50.0;
constexpr double kEerNullTol = 2.0;
constexpr double kEerInvarianceTol = 1e-9;
constexpr std::size_t kMinBalancedBatches = 1000;
constexpr double kDegeneracyTol = 1e-6;
constexpr double kMelDropFraction = 0.80;
constexpr double kSpectralDropFraction = 0.50;
constexpr double kPretrainBudgetSec = 15.0 * 60.0;
constexpr double kDeterminismTol = 1e-6;

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---- alignment oracle ------------------------------------------------------

void enumerate_paths(int n, int frames, std::vector<int>& path, int t,
                     std::vector<std::vector<int>>& out) {
  if (t == frames) {
    if (path.back() == n - 1) out.push_back(path);
    return;
  }
  for (int step = 0; step <= 1; ++step) {
    const int next = path[t - 1] + step;
    if (next >= n) continue;
    path[t] = next;
    enumerate_paths(n, frames, path, t + 1, out);
  }
}

std::vector<std::vector<int>> all_paths(int n, int frames) {
  std::vector<std::vector<int>> out;
  std::vector<int> path(static_cast<std::size_t>(frames), 0);
  enumerate_paths(n, frames, path, 1, out);
  return out;
}

double path_sum(const Matrix& lp, const std::vector<int>& p) {
  double s = 0.0;
  for (std::size_t t = 0; t < p.size(); ++t) s += lp(static_cast<Eigen::Index>(t), p[t]);
  return s;
}

Outcome criterion_alignment() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(101);
  std::uniform_int_distribution<int> ints(-2, 2);
  int shapes = 0, cases = 0, fs_fail = 0, vit_fail = 0;
  double worst = 0.0;
  for (int n = 1; n <= 4; ++n) {
    for (int frames = n; frames <= 6; ++frames) {
      ++shapes;
      const auto paths = all_paths(n, frames);
      for (int rep = 0; rep < 40; ++rep) {
        Matrix lp(frames, n);
        if (rep % 2 == 0) {
          lp = test_util::random_matrix(frames, n, rng, 2.0);
        } else {
          for (Eigen::Index k = 0; k < lp.size(); ++k) lp.data()[k] = ints(rng);
        }
        ++cases;
        double m = -std::numeric_limits<double>::infinity();
        for (const auto& p : paths) m = std::max(m, path_sum(lp, p));
        double acc = 0.0;
        const std::vector<int>* best = nullptr;
        for (const auto& p : paths) {
          const double s = path_sum(lp, p);
          acc += std::exp(s - m);
          if (s == m && (best == nullptr ||
                         std::lexicographical_compare(best->rbegin(), best->rend(), p.rbegin(),
                                                      p.rend()))) {
            best = &p;
          }
        }
        const double oracle = -(m + std::log(acc));
        const double got = align::forward_sum(align::SoftAlignment{lp});
        worst = std::max(worst, std::abs(got - oracle));
        fs_fail += std::abs(got - oracle) > kForwardSumTol ? 1 : 0;
        vit_fail += align::viterbi(align::SoftAlignment{lp}).path != *best ? 1 : 0;
      }
    }
  }
  const double elapsed = seconds_since(t0);
  o.detail << cases << " cases over " << shapes << " shapes, max |forward_sum - oracle| "
           << worst << ", viterbi mismatches " << vit_fail << ", " << elapsed << " s";
  o.require(fs_fail == 0, "forward_sum tolerance");
  o.require(vit_fail == 0, "viterbi argmax");
  o.require(elapsed < kAlignRuntimeSec, "runtime");
  return o;
}

// ---- gradient checks -------------------------------------------------------

Outcome criterion_gradients() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(202);
  double worst_total = 0.0, worst_fs = 0.0;
  for (int rep = 0; rep < 5; ++rep) {
    ag::Var y_hat = ag::parameter(test_util::random_matrix(7, 5, rng));
    ag::Var p_hat = ag::parameter(test_util::random_matrix(3, 1, rng));
    ag::Var d_hat = ag::parameter(test_util::random_matrix(3, 1, rng));
    ag::Var scores = ag::parameter(test_util::random_matrix(7, 3, rng));
    ag::Var y = ag::constant(test_util::random_matrix(7, 5, rng));
    ag::Var p = ag::constant(test_util::random_matrix(3, 1, rng));
    ag::Var d = ag::constant(test_util::random_matrix(3, 1, rng));
    const acoustic::LossWeights w{0.1, 0.1, 1.0};
    worst_total = std::max(
        worst_total,
        test_util::max_gradient_error(
            [&] {
              ag::Var align = align::forward_sum_loss(ag::log_softmax_rows(scores));
              return acoustic::total_loss(y_hat, y, p_hat, p, d_hat, d, align, w);
            },
            {y_hat, p_hat, d_hat, scores}, kGradEps));
    ag::Var lp = ag::parameter(test_util::random_matrix(4 + rep, 3, rng, 2.0));
    worst_fs = std::max(worst_fs, test_util::max_gradient_error(
                                      [&] { return align::forward_sum_loss(lp); }, {lp}, kGradEps));
  }
  const double elapsed = seconds_since(t0);
  o.detail << "max rel err total_loss " << worst_total << ", forward_sum " << worst_fs << ", "
           << elapsed << " s";
  o.require(worst_total < kGradRelTol, "total_loss gradient");
  o.require(worst_fs < kGradRelTol, "forward_sum gradient");
  o.require(elapsed < kGradRuntimeSec, "runtime");
  return o;
}

// ---- pitch oracle ----------------------------------------------------------

Outcome criterion_pitch() {
  Outcome o;
  pitch::YinConfig c;
  const std::size_t edge = static_cast<std::size_t>(c.frame_length / 2 / c.hop_length) + 1;
  for (double hz : {110.0, 220.0, 440.0}) {
    std::vector<double> w(static_cast<std::size_t>(c.sample_rate_hz));
    for (std::size_t i = 0; i < w.size(); ++i) {
      w[i] = 0.5 * std::sin(2.0 * std::numbers::pi * hz * static_cast<double>(i) / c.sample_rate_hz);
    }
    const auto contour = pitch::estimate_f0(w, c);
    double worst = 0.0;
    bool all_voiced = true;
    for (std::size_t t = edge; t + edge < contour.size(); ++t) {
      all_voiced = all_voiced && contour.voiced[t];
      worst = std::max(worst, std::abs(contour.f0_hz[t] - hz) / hz);
    }
    o.detail << hz << " Hz max rel err " << worst << "; ";
    o.require(all_voiced && worst <= kPitchRelTol, std::to_string(hz) + " Hz");
    for (double gain : {0.25, 2.0, 0.125}) {
      std::vector<double> scaled(w.size());
      for (std::size_t i = 0; i < w.size(); ++i) scaled[i] = w[i] * gain;
      const auto s = pitch::estimate_f0(scaled, c);
      o.require(s.f0_hz == contour.f0_hz && s.voiced == contour.voiced,
                "amplitude invariance at gain " + std::to_string(gain));
    }
  }
  o.detail << "amplitude gains 0.125/0.25/2 give identical contours";
  return o;
}

// ---- metric fixtures -------------------------------------------------------

pitch::PitchContour contour_of(std::vector<double> f0) {
  pitch::PitchContour c;
  for (double v : f0) c.voiced.push_back(v > 0.0);
  c.f0_hz = std::move(f0);
  return c;
}

Outcome criterion_metrics() {
  Outcome o;
  std::mt19937_64 rng(404);
  std::bernoulli_distribution voiced(0.6);
  std::uniform_real_distribution<double> hz(70.0, 350.0);
  std::uniform_int_distribution<std::size_t> len(1, 300);
  int mismatches = 0;
  for (int k = 0; k < 100; ++k) {
    const std::size_t n = len(rng);
    std::vector<double> a(n), b(n);
    for (std::size_t t = 0; t < n; ++t) {
      b[t] = voiced(rng) ? hz(rng) : 0.0;
      a[t] = voiced(rng) ? (t % 2 == 0 && b[t] > 0 ? b[t] * 1.15 : hz(rng)) : 0.0;
    }
    const auto pred = contour_of(a), ref = contour_of(b);
    int both = 0, gross = 0, vd = 0, either = 0;
    for (std::size_t t = 0; t < n; ++t) {
      const bool pv = a[t] > 0, rv = b[t] > 0;
      const bool g = pv && rv && std::abs(a[t] - b[t]) > 0.2 * b[t];
      both += (pv && rv) ? 1 : 0;
      gross += g ? 1 : 0;
      vd += pv != rv ? 1 : 0;
      either += (pv != rv || g) ? 1 : 0;
    }
    const double nn = static_cast<double>(n);
    const auto r = evaluation::pitch_errors(pred, ref);
    const bool ok = std::abs(r.gpe_pct - (both ? 100.0 * gross / both : 0.0)) < kMetricTol &&
                    std::abs(r.vde_pct - 100.0 * vd / nn) < kMetricTol &&
                    std::abs(r.ffe_pct - 100.0 * either / nn) < kMetricTol &&
                    r.ffe_pct >= r.vde_pct;
    mismatches += ok ? 0 : 1;
  }
  o.detail << "100 random pairs, " << mismatches << " mismatches; ";
  o.require(mismatches == 0, "random oracle");
  const double v = evaluation::vde(contour_of({100, 100, 0, 0}), contour_of({100, 0, 0, 100}));
  const double g = evaluation::gpe(contour_of({125, 125, 125, 125}), contour_of({100, 100, 100, 100}));
  const auto flip = evaluation::pitch_errors(contour_of({0, 120, 0}), contour_of({110, 0, 95}));
  const auto same = evaluation::pitch_errors(contour_of({0, 120, 95}), contour_of({0, 120, 95}));
  o.detail << "VDE [1,1,0,0] vs [1,0,0,1] = " << v << "%, GPE 125 vs 100 Hz = " << g
           << "%, all-mismatched FFE/VDE/GPE = " << flip.ffe_pct << "/" << flip.vde_pct << "/"
           << flip.gpe_pct;
  o.require(v == 50.0, "VDE fixture");
  o.require(g == 100.0, "GPE fixture");
  o.require(flip.ffe_pct == 100.0 && flip.vde_pct == 100.0 && flip.gpe_pct == 0.0,
            "voicing-mismatch fixture");
  o.require(same.ffe_pct == 0.0 && same.vde_pct == 0.0 && same.gpe_pct == 0.0, "identity");
  return o;
}

// ---- trial protocol --------------------------------------------------------

Outcome criterion_trials() {
  Outcome o;
  evaluation::ValidationSets sets;
  for (int s = 0; s < 10; ++s) {
    for (int i = 0; i < 50; ++i) {
      sets[s].push_back("spk" + std::to_string(s) + "_utt" + std::to_string(i));
    }
  }
  std::size_t total = 0, self_pairs = 0;
  for (int target : {2, 6}) {
    for (const auto& t : evaluation::build_trials(sets, target)) {
      ++total;
      self_pairs += t.enroll_utterance_id == t.test_utterance_id ? 1 : 0;
    }
  }
  o.detail << "10 speakers x 50 items, 2 targets: " << total << " trials, " << self_pairs
           << " self-pairs";
  o.require(total == kPaperTrials, "trial count");
  o.require(self_pairs == 0, "no self-pairs");
  return o;
}

// ---- EER properties --------------------------------------------------------

Outcome criterion_eer() {
  Outcome o;
  using evaluation::ScoredTrial;
  const std::vector<ScoredTrial> separable{{0.9, true}, {0.8, true}, {0.1, false}, {0.2, false}};
  const double sep = evaluation::eer(separable);
  std::mt19937_64 rng(606);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<ScoredTrial> null_set;
  for (int i = 0; i < 10000; ++i) null_set.push_back({n(rng), true});
  for (int i = 0; i < 10000; ++i) null_set.push_back({n(rng), false});
  const double null_eer = evaluation::eer(null_set);
  double worst = 0.0;
  std::uniform_int_distribution<int> sizes(2, 60);
  for (int k = 0; k < 20; ++k) {
    std::vector<ScoredTrial> a;
    const int np = sizes(rng), nn = sizes(rng);
    for (int i = 0; i < np; ++i) a.push_back({n(rng) + 1.0, true});
    for (int i = 0; i < nn; ++i) a.push_back({n(rng), false});
    auto b = a;
    for (auto& t : b) t.score = std::atan(3.0 * t.score) + std::exp(t.score);
    worst = std::max(worst, std::abs(evaluation::eer(a) - evaluation::eer(b)));
  }
  o.detail << "separable " << sep << "%, identical distributions " << null_eer
           << "%, max change under monotone transform " << worst;
  o.require(sep == 0.0, "separable");
  o.require(std::abs(null_eer - kEerNullCenter) <= kEerNullTol, "null distribution");
  o.require(worst <= kEerInvarianceTol, "monotone invariance");
  return o;
}

// ---- schedule exactness and balanced batches -------------------------------

std::vector<data::Example> nano_examples(int speaker, int count, std::uint64_t seed,
                                         const data::Tokenizer& tok) {
  std::mt19937_64 rng(seed);
  std::vector<data::Example> out;
  for (int i = 0; i < count; ++i) {
    data::Example ex;
    ex.record = {"/nano/" + std::to_string(speaker) + "_" + std::to_string(i) + ".wav", "ab",
                 speaker, 0.05};
    ex.tokens = tok.tokenize("ab");
    ex.mel.values = test_util::random_matrix(3, 2, rng);
    ex.pitch.f0_hz = {100.0 + speaker, 0.0, 120.0};
    ex.pitch.voiced = {true, false, true};
    out.push_back(std::move(ex));
  }
  return out;
}

struct NanoSetup {
  data::Tokenizer tok;
  mel::MelConfig mel;
  std::vector<data::Example> original;
  std::vector<data::Example> target;
  std::optional<finetune::SynthesizerBundle> pretrained;

  NanoSetup() {
    mel.n_mels = 2;
    original = nano_examples(0, 6, 1, tok);
    target = nano_examples(1, 2, 2, tok);
    acoustic::AcousticConfig c;
    c.embed_dim = 2;
    c.heads = 1;
    c.encoder_layers = 1;
    c.decoder_layers = 1;
    c.conv_filter = 2;
    c.predictor_filter = 2;
    c.align_width = 2;
    finetune::PretrainOptions opt;
    opt.steps = 3;
    opt.batch_size = 2;
    pretrained.emplace(finetune::pretrain(original, c, tok, mel, pitch::YinConfig{}, opt));
  }
};

Outcome criterion_schedule(NanoSetup& nano, std::vector<std::map<int, int>>* mixed_batches) {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  const std::vector<double> minutes{1, 5, 30, 60};
  const std::vector<std::int64_t> want_direct{200, 1000, 6000, 12000};
  const std::vector<std::int64_t> want_mixed{1000, 5000, 30000, 60000};
  o.detail << "executed direct/mixed steps:";
  for (std::size_t i = 0; i < minutes.size(); ++i) {
    std::int64_t direct_steps = 0, mixed_steps = 0;
    finetune::RunOutputs direct_out;
    direct_out.on_step = [&](const finetune::StepLog&) { ++direct_steps; };
    finetune::FinetuneSpec ds{finetune::Method::kDirect, minutes[i], 7, 1e-4, 2};
    const auto d = finetune::direct_finetune(*nano.pretrained, ds, nano.target, nullptr, direct_out);
    finetune::RunOutputs mixed_out;
    mixed_out.on_step = [&](const finetune::StepLog& s) {
      ++mixed_steps;
      if (mixed_batches != nullptr) mixed_batches->push_back(s.speaker_counts);
    };
    finetune::FinetuneSpec ms{finetune::Method::kMixed, minutes[i], 7, 1e-4, 4};
    const auto m = finetune::mixed_finetune(*nano.pretrained, ms, nano.target, nano.original,
                                            nullptr, mixed_out);
    o.detail << " m=" << minutes[i] << ": " << direct_steps << "/" << mixed_steps;
    o.require(direct_steps == want_direct[i] && d.step == want_direct[i],
              "direct steps for m=" + std::to_string(minutes[i]));
    o.require(mixed_steps == want_mixed[i] && m.step == want_mixed[i],
              "mixed steps for m=" + std::to_string(minutes[i]));
  }
  o.detail << " (" << seconds_since(t0) << " s)";
  return o;
}

Outcome criterion_balanced(const std::vector<std::map<int, int>>& batches) {
  Outcome o;
  std::size_t unbalanced = 0;
  for (const auto& counts : batches) {
    const bool ok = counts.size() == 2 && counts.begin()->second == std::next(counts.begin())->second;
    unbalanced += ok ? 0 : 1;
  }
  o.detail << batches.size() << " logged mixed batches, " << unbalanced << " unbalanced";
  o.require(batches.size() >= kMinBalancedBatches, "batch count");
  o.require(unbalanced == 0, "half-and-half");
  return o;
}

// ---- zeroed speaker rows ---------------------------------------------------

Outcome criterion_degeneracy(NanoSetup& nano) {
  Outcome o;
  test_util::TempDir dir;
  finetune::RunOutputs out;
  out.checkpoint_dir = dir.path();
  finetune::FinetuneSpec spec{finetune::Method::kMixed, 0.0004, 3, 1e-4, 2};
  finetune::mixed_finetune(*nano.pretrained, spec, nano.target, nano.original, nullptr, out);
  auto mixed = finetune::SynthesizerBundle::load(dir.path() / "final.ckpt");
  o.require(mixed.model.config().n_speakers == 2, "two-row table");
  mixed.model.params().get("speaker_table").node()->value.setZero();
  double worst = 0.0;
  auto gap = [&](const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) return std::numeric_limits<double>::infinity();
    return (a - b).cwiseAbs().maxCoeff();
  };
  const auto& base = nano.pretrained->model;
  for (const auto* pool : {&nano.original, &nano.target}) {
    for (const auto& ex : *pool) {
      for (int row : {0, 1}) {
        worst = std::max(worst, gap(base.encode(ex.tokens.ids, std::nullopt).value(),
                                    mixed.model.encode(ex.tokens.ids, row).value()));
        const auto a = base.synthesize(ex.tokens.ids, std::nullopt, nano.mel);
        const auto b = mixed.model.synthesize(ex.tokens.ids, row, nano.mel);
        worst = std::max(worst, gap(a.mel.values, b.mel.values));
        acoustic::TrainingItem ia{ex.tokens.ids, &ex.mel.values, &ex.pitch, std::nullopt};
        acoustic::TrainingItem ib{ex.tokens.ids, &ex.mel.values, &ex.pitch, row};
        ag::NoGradGuard guard;
        worst = std::max(worst, std::abs(base.training_loss(ia).item() -
                                         mixed.model.training_loss(ib).item()));
      }
    }
  }
  o.detail << "max elementwise gap to pretrained forward pass " << worst;
  o.require(worst <= kDegeneracyTol, "forward pass");
  return o;
}

// ---- tiny end-to-end -------------------------------------------------------

struct EndToEnd {
  bool completed = false;
  double pretrain_sec = 0.0;
  double mel_before = 0.0, mel_after = 0.0;
  double mel_first_step = 0.0, mel_last_step = 0.0;
  double spectral_before = 0.0, spectral_after = 0.0;
  std::int64_t finetune_steps = 0;
  std::string report_json;
  evaluation::EvaluationReport report;
  std::optional<finetune::SynthesizerBundle> synthesizer;
  std::optional<finetune::SynthesizerBundle> adapted;
  std::optional<finetune::VocoderBundle> vocoder;
  std::string error;
};

EndToEnd run_end_to_end(const std::filesystem::path& dir) {
  EndToEnd r;
  try {
    const auto scenario = toy::write_scenario(dir / "toy");
    const data::Tokenizer tok;
    const mel::MelConfig mc;
    const pitch::YinConfig yc;
    const auto load = [&](const std::filesystem::path& p) {
      return data::prepare_examples(data::load_manifest(p), tok, mc, yc);
    };
    const auto pre = load(scenario.pretrain_manifest);
    const auto fine = load(scenario.finetune_manifest);

    acoustic::AcousticConfig ac;
    ac.embed_dim = 32;
    ac.encoder_layers = 1;
    ac.decoder_layers = 1;
    ac.conv_filter = 64;
    ac.predictor_filter = 32;
    ac.align_width = 16;
    finetune::PretrainOptions po;
    po.steps = 2000;
    po.batch_size = 8;
    po.lr = 3e-3;
    po.seed = 11;
    r.mel_before =
        finetune::synthesizer_mel_mse(finetune::init_synthesizer(ac, tok, mc, yc, po.seed), pre);
    finetune::TrainResult log;
    const auto t0 = std::chrono::steady_clock::now();
    r.synthesizer.emplace(finetune::pretrain(pre, ac, tok, mc, yc, po, &log));
    r.pretrain_sec = seconds_since(t0);
    r.mel_after = finetune::synthesizer_mel_mse(*r.synthesizer, pre);
    r.mel_first_step = log.log.front().values.at("mel");
    r.mel_last_step = log.log.back().values.at("mel");
    r.synthesizer->save(dir / "synthesizer.ckpt");

    finetune::FinetuneSpec spec{finetune::Method::kDirect, 2.0, 12, 1e-4, 8};
    finetune::RunOutputs fout;
    fout.on_step = [&](const finetune::StepLog&) { ++r.finetune_steps; };
    r.adapted.emplace(finetune::direct_finetune(*r.synthesizer, spec, fine, nullptr, fout));
    r.adapted->save(dir / "adapted.ckpt");

    vocoder::VocoderConfig vc;
    vc.initial_channels = 32;
    vc.disc_channels = 4;
    vc.segment_frames = 8;
    finetune::VocoderTrainOptions vo;
    vo.steps = 500;
    vo.batch_size = 2;
    vo.seed = 13;
    r.spectral_before =
        finetune::vocoder_spectral_loss(finetune::init_vocoder(vc, mc, vo.seed), pre);
    r.vocoder.emplace(finetune::pretrain_vocoder(pre, vc, mc, vo));
    r.spectral_after = finetune::vocoder_spectral_loss(*r.vocoder, pre);
    r.vocoder->save(dir / "vocoder.ckpt");

    evaluation::EvaluationSet set;
    set.target_speaker = 1;
    set.target = load(scenario.target_validation);
    set.others = load(scenario.other_validation);
    evaluation::EvaluationOptions opts;
    opts.embeddings_dir = dir / "embeddings";
    opts.det_dir = dir / "reports";
    r.report = evaluation::evaluate(*r.adapted, *r.vocoder, set, opts);
    r.report_json = r.report.to_json().dump(2);
    std::ofstream(dir / "evaluation.json") << r.report_json << '\n';
    r.completed = true;
  } catch (const std::exception& e) {
    r.error = e.what();
  }
  return r;
}

bool finite_pct(double v) { return std::isfinite(v) && v >= 0.0 && v <= 100.0; }

Outcome criterion_end_to_end(const EndToEnd& r) {
  Outcome o;
  if (!r.completed) {
    o.require(false, "pipeline: " + r.error);
    return o;
  }
  const double mel_drop = 1.0 - r.mel_after / r.mel_before;
  const double spec_drop = 1.0 - r.spectral_after / r.spectral_before;
  const auto& rep = r.report;
  o.detail << "pretrain " << r.pretrain_sec << " s, teacher-forced mel MSE " << r.mel_before
           << " -> " << r.mel_after << " (" << 100.0 * mel_drop << "% drop; step log "
           << r.mel_first_step << " -> " << r.mel_last_step << "), finetune steps "
           << r.finetune_steps << ", vocoder spectral loss " << r.spectral_before << " -> "
           << r.spectral_after << " (" << 100.0 * spec_drop << "% drop); report GPE/VDE/FFE "
           << rep.pooled.gpe_pct << "/" << rep.pooled.vde_pct << "/" << rep.pooled.ffe_pct
           << ", EER real/synthetic " << rep.eer_real_pct << "/" << rep.eer_synthetic_pct
           << " over " << rep.trials_real << " trials, phonemes/s real/synthetic "
           << rep.real_phoneme_rate << "/" << rep.synthetic_phoneme_rate;
  o.require(r.pretrain_sec < kPretrainBudgetSec, "pretrain budget");
  o.require(mel_drop >= kMelDropFraction, "mel MSE drop");
  o.require(r.finetune_steps == 400, "finetune steps");
  o.require(spec_drop >= kSpectralDropFraction, "spectral drop");
  const bool complete = finite_pct(rep.pooled.gpe_pct) && finite_pct(rep.pooled.vde_pct) &&
                        finite_pct(rep.pooled.ffe_pct) && finite_pct(rep.eer_real_pct) &&
                        finite_pct(rep.eer_synthetic_pct) && rep.pitch_frames > 0 &&
                        rep.trials_real == 3 * 2 + 3 * 3 && rep.trials_synthetic == rep.trials_real &&
                        rep.real_phoneme_rate > 0.0 && rep.synthetic_phoneme_rate > 0.0 &&
                        rep.utterances.size() == 3;
  o.require(complete, "complete report");
  return o;
}

double max_gap(const nn::ParamStore& a, const nn::ParamStore& b) {
  if (a.all().size() != b.all().size()) return std::numeric_limits<double>::infinity();
  double worst = 0.0;
  for (const auto& [name, v] : a.all()) {
    if (!b.contains(name)) return std::numeric_limits<double>::infinity();
    worst = std::max(worst, (v.value() - b.get(name).value()).cwiseAbs().maxCoeff());
  }
  return worst;
}

Outcome criterion_determinism(const EndToEnd& a, const EndToEnd& b) {
  Outcome o;
  if (!a.completed || !b.completed) {
    o.require(false, "pipeline did not complete");
    return o;
  }
  const double synth = max_gap(a.synthesizer->model.params(), b.synthesizer->model.params());
  const double adapted = max_gap(a.adapted->model.params(), b.adapted->model.params());
  const double gen = max_gap(a.vocoder->vocoder.generator_params(), b.vocoder->vocoder.generator_params());
  const double disc =
      max_gap(a.vocoder->vocoder.discriminator_params(), b.vocoder->vocoder.discriminator_params());
  const bool same_report = a.report_json == b.report_json;
  o.detail << "max parameter gap pretrained " << synth << ", adapted " << adapted
           << ", generator " << gen << ", discriminator " << disc << "; reports "
           << (same_report ? "bitwise identical" : "differ");
  o.require(std::max({synth, adapted, gen, disc}) <= kDeterminismTol, "parameters");
  o.require(same_report, "report bytes");
  return o;
}

}  // namespace

int main() {
  int failures = 0;
  auto report = [&](int id, const std::string& name, const Outcome& o) {
    std::cout << "criterion " << id << " " << (o.pass ? "PASS" : "FAIL") << " " << name << ": "
              << o.detail.str() << std::endl;
    failures += o.pass ? 0 : 1;
  };
  report(1, "alignment oracle", criterion_alignment());
  report(2, "gradient checks", criterion_gradients());
  report(3, "pitch oracle", criterion_pitch());
  report(4, "metric fixtures", criterion_metrics());
  report(5, "trial protocol", criterion_trials());
  report(6, "EER properties", criterion_eer());
  NanoSetup nano;
  std::vector<std::map<int, int>> mixed_batches;
  report(7, "schedule exactness", criterion_schedule(nano, &mixed_batches));
  report(8, "balanced batches", criterion_balanced(mixed_batches));
  report(9, "zeroed speaker rows", criterion_degeneracy(nano));
  test_util::TempDir dir;
  const EndToEnd first = run_end_to_end(dir.path() / "run1");
  report(10, "tiny end-to-end", criterion_end_to_end(first));
  const EndToEnd second = run_end_to_end(dir.path() / "run2");
  report(11, "determinism", criterion_determinism(first, second));
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed")
            << std::endl;
  return failures == 0 ? 0 : 1;
}
