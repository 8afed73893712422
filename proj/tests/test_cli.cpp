// Copyright 2026 The vclone Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "vclone/cli.hpp"

#include "test_util.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

namespace vclone::cli {
namespace {

namespace fs = std::filesystem;

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "vclone");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

nlohmann::json read_json(const fs::path& p) {
  std::ifstream in(p);
  return nlohmann::json::parse(in);
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const std::vector<std::string> kNano{
    "--set", "acoustic.embed_dim=8",        "--set", "acoustic.encoder_layers=1",
    "--set", "acoustic.decoder_layers=1",   "--set", "acoustic.conv_filter=8",
    "--set", "acoustic.predictor_filter=8", "--set", "acoustic.align_width=4",
    "--set", "vocoder.upsample_factors=[4,4,4,4]", "--set", "vocoder.initial_channels=16",
    "--set", "vocoder.mpd_periods=[2,3]",   "--set", "vocoder.msd_scales=1",
    "--set", "vocoder.disc_channels=2",     "--set", "vocoder.segment_frames=4",
    "--set", "vocoder.resblock_kernels=[3]", "--set", "vocoder.resblock_dilations=[1]",
    "--set", "pretrain.steps=2",            "--set", "pretrain.batch_size=2",
    "--set", "vocoder_pretrain.steps=2",    "--set", "vocoder_pretrain.batch_size=2",
    "--set", "finetune.batch_size=2"};

std::vector<std::string> with_nano(std::vector<std::string> args) {
  args.insert(args.end(), kNano.begin(), kNano.end());
  return args;
}

class CliTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new test_util::TempDir();
    scenario_ = new toy::Scenario(toy::write_scenario(dir_->path() / "toy"));
    const Result r = run_cli(with_nano({"pretrain", "--manifest", scenario_->pretrain_manifest.string(),
                                        "--model", "both", "--output-dir",
                                        (dir_->path() / "pre").string()}));
    ASSERT_EQ(r.code, 0) << r.err;
  }
  static void TearDownTestSuite() {
    delete scenario_;
    delete dir_;
  }
  static fs::path root() { return dir_->path(); }
  static fs::path synth() { return root() / "pre/checkpoints/synthesizer/final.ckpt"; }
  static fs::path voc() { return root() / "pre/checkpoints/vocoder/final.ckpt"; }

  static test_util::TempDir* dir_;
  static toy::Scenario* scenario_;
};

test_util::TempDir* CliTest::dir_ = nullptr;
toy::Scenario* CliTest::scenario_ = nullptr;

TEST(Config, MergeRejectsUnknownKeys) {
  auto c = default_config();
  EXPECT_THROW(merge_config(c, {{"pretrain", {{"stepz", 1}}}}), ConfigError);
  EXPECT_THROW(merge_config(c, {{"pretrain", 3}}), ConfigError);
  merge_config(c, {{"pretrain", {{"steps", 7}}}});
  EXPECT_EQ(c["pretrain"]["steps"], 7);
  EXPECT_EQ(c["pretrain"]["batch_size"], 8);
}

TEST(Config, OverridesParseJsonOrString) {
  auto c = default_config();
  apply_override(c, "acoustic.weights.pitch=0.5");
  apply_override(c, "vocoder.upsample_factors=[8,8,4]");
  EXPECT_DOUBLE_EQ(c["acoustic"]["weights"]["pitch"].get<double>(), 0.5);
  EXPECT_EQ(c["vocoder"]["upsample_factors"].size(), 3u);
  EXPECT_THROW(apply_override(c, "novalue"), ConfigError);
  EXPECT_THROW(apply_override(c, "a..b=1"), ConfigError);
  EXPECT_THROW(apply_override(c, "mel.nope=1"), ConfigError);
  apply_override(c, "pretrain.steps=abc");
  EXPECT_THROW(resolve(c), ConfigError);
}

TEST(Config, DefaultsResolve) {
  const Settings s = resolve(default_config());
  EXPECT_EQ(s.pretrain.steps, 2000);
  EXPECT_DOUBLE_EQ(s.finetune_lr, 1e-4);
  EXPECT_EQ(s.finetune_batch_size, 8u);
  EXPECT_EQ(s.mel.n_mels, 80);
}

TEST_F(CliTest, PretrainWritesRecordAndArtifacts) {
  for (const char* sub : {"checkpoints", "logs", "reports", "embeddings"}) {
    EXPECT_TRUE(fs::is_directory(root() / "pre" / sub)) << sub;
  }
  EXPECT_TRUE(fs::exists(synth()));
  EXPECT_TRUE(fs::exists(voc()));
  EXPECT_TRUE(fs::exists(root() / "pre/logs/synthesizer_loss.tsv"));
  const auto rec = read_json(root() / "pre/logs/run_record.json");
  EXPECT_EQ(rec["command"], "pretrain");
  EXPECT_EQ(rec["status"], "complete");
  EXPECT_EQ(rec["resolved_steps"]["synthesizer"], 2);
  EXPECT_EQ(rec["config"]["acoustic"]["embed_dim"], 8);
}

TEST_F(CliTest, ConfigPrecedence) {
  const fs::path cfg = root() / "prec.json";
  {
    std::ofstream out(cfg);
    out << R"({"seed": 5, "pretrain": {"steps": 3, "lr": 0.002}})";
  }
  const fs::path out_dir = root() / "prec";
  auto args = with_nano({"pretrain", "--manifest", scenario_->pretrain_manifest.string(), "--model",
                         "synthesizer", "--output-dir", out_dir.string()});
  // Reading order: defaults, then the file, then --set, then --seed.
  args.insert(args.end(), {"--config", cfg.string(), "--set", "pretrain.steps=1", "--seed", "9"});
  args.erase(std::find(args.begin(), args.end(), "pretrain.steps=2") - 1,
             std::find(args.begin(), args.end(), "pretrain.steps=2") + 1);
  const Result r = run_cli(args);
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rec = read_json(out_dir / "logs/run_record.json");
  EXPECT_EQ(rec["seed"], 9);
  EXPECT_EQ(rec["config"]["seed"], 9);
  EXPECT_EQ(rec["config"]["pretrain"]["steps"], 1);
  EXPECT_DOUBLE_EQ(rec["config"]["pretrain"]["lr"].get<double>(), 0.002);
  EXPECT_EQ(rec["resolved_steps"]["synthesizer"], 1);

  // A run record is accepted as --config and reproduces the run.
  const fs::path again = root() / "prec_again";
  const Result r2 = run_cli({"pretrain", "--manifest", scenario_->pretrain_manifest.string(),
                             "--model", "synthesizer", "--output-dir", again.string(), "--config",
                             (out_dir / "logs/run_record.json").string()});
  ASSERT_EQ(r2.code, 0) << r2.err;
  EXPECT_EQ(read_text(again / "checkpoints/synthesizer/final.ckpt"),
            read_text(out_dir / "checkpoints/synthesizer/final.ckpt"));
}

TEST_F(CliTest, DirectFiveMinutesResolvesToOneThousandSteps) {
  const fs::path out_dir = root() / "direct5";
  const Result r = run_cli(with_nano({"finetune", "--method", "direct", "--minutes", "5",
                                      "--manifest", scenario_->finetune_manifest.string(),
                                      "--synthesizer", synth().string(), "--output-dir",
                                      out_dir.string()}));
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rec = read_json(out_dir / "logs/run_record.json");
  EXPECT_EQ(rec["resolved_steps"]["synthesizer"], 1000);
  EXPECT_EQ(rec["status"], "complete");
  std::ifstream log(out_dir / "logs/synthesizer_loss.tsv");
  std::string line;
  int rows = -1;
  while (std::getline(log, line)) ++rows;
  EXPECT_EQ(rows, 1000);
  EXPECT_TRUE(fs::exists(out_dir / "checkpoints/synthesizer/final.ckpt"));
}

TEST_F(CliTest, MixedOneMinuteResolvesToOneThousandSteps) {
  const fs::path out_dir = root() / "mixed1";
  const Result r = run_cli(with_nano({"finetune", "--method", "mixed", "--minutes", "1",
                                      "--manifest", scenario_->finetune_manifest.string(),
                                      "--original-manifest", scenario_->pretrain_manifest.string(),
                                      "--synthesizer", synth().string(), "--vocoder",
                                      voc().string(), "--output-dir", out_dir.string()}));
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rec = read_json(out_dir / "logs/run_record.json");
  EXPECT_EQ(rec["resolved_steps"]["synthesizer"], 1000);
  EXPECT_EQ(rec["resolved_steps"]["vocoder"], 1000);
  EXPECT_TRUE(fs::exists(out_dir / "checkpoints/vocoder/final.ckpt"));
}

TEST_F(CliTest, SubsetIsDeterministic) {
  std::vector<data::UtteranceRecord> records;
  for (int i = 0; i < 100; ++i) {
    records.push_back({"/a/" + std::to_string(i) + ".wav", "t", 0, 1.0 + (i % 7)});
  }
  data::write_manifest(root() / "big.json", records);
  std::string first;
  for (const char* name : {"sub_a", "sub_b"}) {
    const Result r = run_cli({"subset", "--manifest", (root() / "big.json").string(), "--minutes",
                              "1", "--seed", "7", "--output-dir", (root() / name).string()});
    ASSERT_EQ(r.code, 0) << r.err;
    const std::string text = read_text(root() / name / "manifests/subset.json");
    EXPECT_FALSE(text.empty());
    if (first.empty()) first = text;
    EXPECT_EQ(text, first);
  }
  const auto subset = data::load_manifest(root() / "sub_a/manifests/subset.json");
  EXPECT_GE(data::total_duration(subset), 60.0);
  const Result short_data = run_cli({"subset", "--manifest", (root() / "big.json").string(),
                                     "--minutes", "60", "--output-dir",
                                     (root() / "sub_c").string()});
  EXPECT_EQ(short_data.code, kDataError);
}

TEST_F(CliTest, SynthesizeVocodeEvaluate) {
  const fs::path syn_dir = root() / "syn";
  Result r = run_cli({"synthesize", "--synthesizer", synth().string(), "--vocoder", voc().string(),
                      "--manifest", scenario_->target_validation.string(), "--reference-durations",
                      "--output-dir", syn_dir.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto targets = data::load_manifest(scenario_->target_validation);
  for (const auto& t : targets) {
    const std::string id = t.audio_path.stem().string();
    EXPECT_TRUE(fs::exists(syn_dir / "audio" / (id + ".wav"))) << id;
    EXPECT_TRUE(fs::exists(syn_dir / "audio" / (id + ".forced.wav"))) << id;
  }

  const std::string mel = (syn_dir / "audio" / (targets[0].audio_path.stem().string() + ".mel")).string();
  r = run_cli({"vocode", "--vocoder", voc().string(), "--mel", mel, "--output-dir",
               (root() / "voc").string()});
  ASSERT_EQ(r.code, 0) << r.err;

  const fs::path ev_dir = root() / "eval";
  r = run_cli({"evaluate", "--synthesizer", synth().string(), "--vocoder", voc().string(),
               "--target-manifest", scenario_->target_validation.string(), "--other-manifest",
               scenario_->other_validation.string(), "--target-speaker", "1", "--output-dir",
               ev_dir.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto report = read_json(ev_dir / "reports/evaluation.json");
  for (const char* key : {"pitch_errors", "speaker_verification", "phoneme_rate", "utterances"}) {
    EXPECT_TRUE(report.contains(key)) << key;
  }
  const std::size_t v = targets.size();
  const std::size_t others = data::load_manifest(scenario_->other_validation).size();
  EXPECT_EQ(report["speaker_verification"]["trials_real"], v * (v - 1) + v * others);
  EXPECT_TRUE(fs::exists(ev_dir / "embeddings/embeddings.bin"));
  EXPECT_TRUE(fs::exists(ev_dir / "embeddings/labels.tsv"));
  EXPECT_TRUE(fs::exists(ev_dir / "reports/det_real.tsv"));

  // Scoring pre-synthesized audio gives the same report as inline synthesis.
  const fs::path ev2 = root() / "eval2";
  r = run_cli({"evaluate", "--synthesizer", synth().string(), "--synthesized-dir",
               (syn_dir / "audio").string(), "--target-manifest",
               scenario_->target_validation.string(), "--other-manifest",
               scenario_->other_validation.string(), "--target-speaker", "1", "--output-dir",
               ev2.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(read_text(ev2 / "reports/evaluation.json"), read_text(ev_dir / "reports/evaluation.json"));
}

TEST_F(CliTest, UsageErrorsExitTwo) {
  EXPECT_EQ(run_cli({}).code, kUsageError);
  EXPECT_EQ(run_cli({"train"}).code, kUsageError);
  EXPECT_EQ(run_cli({"subset", "--manifest", scenario_->pretrain_manifest.string(), "--minutes",
                     "1", "--output-dir", (root() / "x").string(), "--bogus"})
                .code,
            kUsageError);
  EXPECT_EQ(run_cli({"finetune", "--minutes", "1", "--manifest",
                     scenario_->finetune_manifest.string(), "--synthesizer", synth().string(),
                     "--output-dir", (root() / "x").string()})
                .code,
            kUsageError);
  EXPECT_EQ(run_cli({"finetune", "--method", "sideways", "--minutes", "1", "--manifest",
                     scenario_->finetune_manifest.string(), "--synthesizer", synth().string(),
                     "--output-dir", (root() / "x").string()})
                .code,
            kUsageError);
  EXPECT_EQ(run_cli({"finetune", "--method", "mixed", "--minutes", "1", "--manifest",
                     scenario_->finetune_manifest.string(), "--synthesizer", synth().string(),
                     "--output-dir", (root() / "x").string()})
                .code,
            kUsageError);
  const Result bad_key = run_cli({"subset", "--manifest", scenario_->pretrain_manifest.string(),
                                  "--minutes", "1", "--set", "nope=1", "--output-dir",
                                  (root() / "x").string()});
  EXPECT_EQ(bad_key.code, kUsageError);
  EXPECT_NE(bad_key.err.find("nope"), std::string::npos);
  EXPECT_EQ(std::count(bad_key.err.begin(), bad_key.err.end(), '\n'), 1);
  const Result help = run_cli({"finetune", "--help"});
  EXPECT_EQ(help.code, kSuccess);
  for (const char* flag : {"--method", "--minutes", "--manifest", "--original-manifest",
                           "--synthesizer", "--vocoder", "--config", "--set", "--seed",
                           "--output-dir"}) {
    EXPECT_NE(help.out.find(flag), std::string::npos) << flag;
  }
}

TEST_F(CliTest, DataErrorsExitThree) {
  const fs::path missing_audio = root() / "missing.json";
  data::write_manifest(missing_audio, {{root() / "nope.wav", "hello", 1, 1.0}});
  const fs::path out_dir = root() / "fail";
  Result r = run_cli({"finetune", "--method", "direct", "--minutes", "1", "--manifest",
                      missing_audio.string(), "--synthesizer", synth().string(), "--output-dir",
                      out_dir.string()});
  EXPECT_EQ(r.code, kDataError);
  r = run_cli({"synthesize", "--synthesizer", synth().string(), "--text", "ñ", "--output-dir",
               out_dir.string()});
  EXPECT_EQ(r.code, kDataError);
  EXPECT_NE(r.err.find("vocabulary"), std::string::npos);
  r = run_cli({"synthesize", "--synthesizer", voc().string(), "--text", "hi", "--output-dir",
               out_dir.string()});
  EXPECT_EQ(r.code, kDataError);
}

}  // namespace
}  // namespace vclone::cli
