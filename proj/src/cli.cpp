// Copyright 2026 The vclone Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "vclone/cli.hpp"

#include "vclone/audio.hpp"
#include "vclone/checkpoint.hpp"
#include "vclone/errors.hpp"
#include "vclone/evaluation.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

namespace vclone {

namespace finetune {
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(PretrainOptions, steps, batch_size, lr,
                                                warmup_steps)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(VocoderTrainOptions, steps, batch_size, lr)
}  // namespace finetune

namespace cli {

namespace {

namespace fs = std::filesystem;

struct Common {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::string output_dir;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "JSON config file or a previous run record")
      ->check(CLI::ExistingFile);
  cmd->add_option("--set", c.overrides, "Override one config value (key.path=value)")
      ->allow_extra_args(false);
  cmd->add_option("--seed", c.seed, "Random seed (overrides the config)");
  cmd->add_option("--output-dir", c.output_dir, "Directory for all outputs")->required();
}

nlohmann::json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
}

nlohmann::json build_config(const Common& c) {
  nlohmann::json config = default_config();
  if (!c.config_path.empty()) {
    nlohmann::json file = read_json_file(c.config_path);
    // A run record carries its resolved config under "config".
    if (file.is_object() && file.contains("config") && file.contains("command")) {
      file = file.at("config");
    }
    merge_config(config, file);
  }
  for (const auto& o : c.overrides) apply_override(config, o);
  if (c.seed) config["seed"] = *c.seed;
  return config;
}

// Writes logs/run_record.json at start and updates its status on exit, so
// outputs of an interrupted or failed run are labelled as such.
class RunRecord {
 public:
  RunRecord(const fs::path& out_dir, std::string command, int argc, const char* const* argv,
            const nlohmann::json& config)
      : path_(out_dir / "logs" / "run_record.json") {
    for (const char* sub : {"checkpoints", "logs", "reports", "embeddings"}) {
      fs::create_directories(out_dir / sub);
    }
    record_["command"] = std::move(command);
    nlohmann::ordered_json args = nlohmann::ordered_json::array();
    for (int i = 1; i < argc; ++i) args.push_back(argv[i]);
    record_["arguments"] = std::move(args);
    record_["seed"] = config.at("seed");
    record_["config"] = config;
    record_["resolved_steps"] = nlohmann::ordered_json::object();
    record_["inputs"] = nlohmann::ordered_json::object();
    record_["outputs"] = nlohmann::ordered_json::object();
    record_["status"] = "running";
  }

  nlohmann::ordered_json& steps() { return record_["resolved_steps"]; }
  nlohmann::ordered_json& inputs() { return record_["inputs"]; }
  nlohmann::ordered_json& outputs() { return record_["outputs"]; }

  void write() const {
    const fs::path tmp = path_.string() + ".partial";
    {
      std::ofstream out(tmp);
      if (!out) throw DataError("cannot write " + path_.string());
      out << record_.dump(2) << '\n';
    }
    fs::rename(tmp, path_);
  }
  void complete() {
    record_["status"] = "complete";
    write();
  }
  void fail(const std::string& message) {
    record_["status"] = "failed";
    record_["error"] = message;
    try {
      write();
    } catch (const std::exception&) {
    }
  }

 private:
  fs::path path_;
  nlohmann::ordered_json record_;
};

finetune::RunOutputs run_outputs(const fs::path& out_dir, const std::string& model,
                                 const Settings& s, finetune::StepLog* last) {
  finetune::RunOutputs o;
  o.loss_log = out_dir / "logs" / (model + "_loss.tsv");
  o.checkpoint_dir = out_dir / "checkpoints" / model;
  o.checkpoint_every = s.checkpoint_every;
  o.on_step = [last](const finetune::StepLog& log) { *last = log; };
  return o;
}

std::string summary(const std::string& model, const finetune::StepLog& last, std::int64_t steps) {
  std::ostringstream os;
  os << model << ": " << steps << " steps";
  for (const auto& [k, v] : last.values) {
    if (k != "lr") os << ' ' << k << '=' << v;
  }
  return os.str();
}

std::vector<data::Example> prepare(const fs::path& manifest, bool require_text,
                                   const data::Tokenizer& tokenizer, const mel::MelConfig& mel,
                                   const pitch::YinConfig& yin) {
  const auto records = data::load_manifest(manifest, require_text);
  if (records.empty()) throw DataError("manifest " + manifest.string() + " is empty");
  return data::prepare_examples(records, tokenizer, mel, yin);
}

void write_audio(const fs::path& path, const std::vector<double>& samples, int sample_rate) {
  audio::write_wav(path, audio::Waveform{samples, sample_rate});
}

}  // namespace

nlohmann::json default_config() {
  nlohmann::json j;
  j["seed"] = 0;
  j["mel"] = mel::MelConfig{};
  j["yin"] = pitch::YinConfig{};
  j["acoustic"] = acoustic::AcousticConfig{};
  j["vocoder"] = vocoder::VocoderConfig{};
  finetune::PretrainOptions pretrain;
  pretrain.steps = 2000;
  j["pretrain"] = pretrain;
  finetune::VocoderTrainOptions voc;
  voc.steps = 2000;
  j["vocoder_pretrain"] = voc;
  j["finetune"] = {{"lr", 1e-4}, {"vocoder_lr", 2e-4}, {"batch_size", 8}};
  j["checkpoint_every"] = 0;
  return j;
}

void merge_config(nlohmann::json& config, const nlohmann::json& patch) {
  std::function<void(nlohmann::json&, const nlohmann::json&, const std::string&)> merge =
      [&](nlohmann::json& dst, const nlohmann::json& src, const std::string& prefix) {
        if (!src.is_object()) throw ConfigError("config section '" + prefix + "' must be an object");
        for (const auto& [key, value] : src.items()) {
          const std::string name = prefix.empty() ? key : prefix + "." + key;
          if (!dst.contains(key)) throw ConfigError("unknown config key '" + name + "'");
          nlohmann::json& slot = dst[key];
          if (slot.is_object()) {
            merge(slot, value, name);
          } else if (value.is_object()) {
            throw ConfigError("config key '" + name + "' is not a section");
          } else {
            slot = value;
          }
        }
      };
  merge(config, patch, "");
}

void apply_override(nlohmann::json& config, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) {
    throw ConfigError("override '" + std::string(assignment) + "' must look like key=value");
  }
  const std::string key(assignment.substr(0, eq));
  const std::string text(assignment.substr(eq + 1));
  nlohmann::json value;
  try {
    value = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error&) {
    value = text;
  }
  nlohmann::json patch = value;
  std::size_t end = key.size();
  while (true) {
    const auto dot = key.rfind('.', end - 1);
    const std::string part =
        key.substr(dot == std::string::npos ? 0 : dot + 1, end - (dot == std::string::npos ? 0 : dot + 1));
    if (part.empty()) throw ConfigError("override key '" + key + "' has an empty component");
    patch = nlohmann::json{{part, patch}};
    if (dot == std::string::npos) break;
    end = dot;
  }
  merge_config(config, patch);
}

Settings resolve(const nlohmann::json& config) {
  Settings s;
  try {
    s.seed = config.at("seed").get<std::uint64_t>();
    s.mel = config.at("mel").get<mel::MelConfig>();
    s.yin = config.at("yin").get<pitch::YinConfig>();
    s.acoustic = config.at("acoustic").get<acoustic::AcousticConfig>();
    s.vocoder = config.at("vocoder").get<vocoder::VocoderConfig>();
    s.pretrain = config.at("pretrain").get<finetune::PretrainOptions>();
    s.vocoder_pretrain = config.at("vocoder_pretrain").get<finetune::VocoderTrainOptions>();
    s.finetune_lr = config.at("finetune").at("lr").get<double>();
    s.finetune_vocoder_lr = config.at("finetune").at("vocoder_lr").get<double>();
    s.finetune_batch_size = config.at("finetune").at("batch_size").get<std::size_t>();
    s.checkpoint_every = config.at("checkpoint_every").get<std::int64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid config value: ") + e.what());
  }
  s.pretrain.seed = s.seed;
  s.vocoder_pretrain.seed = s.seed;
  s.mel.validate();
  s.yin.validate();
  s.vocoder.validate(s.mel);
  if (s.yin.hop_length != s.mel.hop_length || s.yin.sample_rate_hz != s.mel.sample_rate_hz) {
    throw ConfigError("yin and mel must share hop_length and sample_rate_hz");
  }
  if (s.acoustic.n_mels != s.mel.n_mels) throw ConfigError("acoustic.n_mels must equal mel.n_mels");
  if (!(s.finetune_lr > 0.0) || !(s.finetune_vocoder_lr > 0.0) || !(s.pretrain.lr > 0.0) ||
      !(s.vocoder_pretrain.lr > 0.0)) {
    throw ConfigError("learning rates must be positive");
  }
  if (s.pretrain.steps < 0 || s.vocoder_pretrain.steps < 0 || s.checkpoint_every < 0) {
    throw ConfigError("step counts must be non-negative");
  }
  return s;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Few-shot voice cloning: pretraining, speaker adaptation and evaluation"};
  app.name("vclone");
  app.require_subcommand(1);

  Common pre_c, sub_c, fin_c, syn_c, voc_c, eval_c;

  auto* pre = app.add_subcommand("pretrain", "Train a single-speaker synthesizer and/or vocoder");
  add_common(pre, pre_c);
  std::string pre_manifest, pre_model = "both";
  pre->add_option("--manifest", pre_manifest, "Training manifest")->required()->check(CLI::ExistingFile);
  pre->add_option("--model", pre_model, "synthesizer, vocoder or both")
      ->check(CLI::IsMember({"synthesizer", "vocoder", "both"}));

  auto* sub = app.add_subcommand("subset", "Draw a seeded duration-targeted subset of a manifest");
  add_common(sub, sub_c);
  std::string sub_manifest;
  double sub_minutes = 0.0;
  sub->add_option("--manifest", sub_manifest, "Source manifest")->required()->check(CLI::ExistingFile);
  sub->add_option("--minutes", sub_minutes, "Target duration in minutes")->required();

  auto* fin = app.add_subcommand("finetune", "Adapt pretrained models to a new speaker");
  add_common(fin, fin_c);
  std::string fin_method, fin_manifest, fin_original, fin_synth, fin_voc;
  double fin_minutes = 0.0;
  fin->add_option("--method", fin_method, "direct or mixed")
      ->required()
      ->check(CLI::IsMember({"direct", "mixed"}));
  fin->add_option("--minutes", fin_minutes, "Amount of new-speaker data in minutes")->required();
  fin->add_option("--manifest", fin_manifest, "New-speaker manifest")->required()->check(CLI::ExistingFile);
  fin->add_option("--original-manifest", fin_original, "Original-speaker manifest (mixed)")
      ->check(CLI::ExistingFile);
  fin->add_option("--synthesizer", fin_synth, "Pretrained synthesizer checkpoint")
      ->check(CLI::ExistingFile);
  fin->add_option("--vocoder", fin_voc, "Pretrained vocoder checkpoint")->check(CLI::ExistingFile);

  auto* syn = app.add_subcommand("synthesize", "Generate mel spectrograms (and audio) from text");
  add_common(syn, syn_c);
  std::string syn_synth, syn_voc, syn_manifest;
  std::vector<std::string> syn_texts;
  std::optional<int> syn_speaker;
  double syn_pace = 1.0;
  bool syn_forced = false;
  syn->add_option("--synthesizer", syn_synth, "Synthesizer checkpoint")->required()->check(CLI::ExistingFile);
  syn->add_option("--vocoder", syn_voc, "Vocoder checkpoint; writes WAV files when given")
      ->check(CLI::ExistingFile);
  syn->add_option("--text", syn_texts, "Text to synthesize (repeatable)")->allow_extra_args(false);
  syn->add_option("--manifest", syn_manifest, "Synthesize every text of a manifest")
      ->check(CLI::ExistingFile);
  syn->add_option("--speaker", syn_speaker, "Dataset speaker id (multi-speaker models)");
  syn->add_option("--pace", syn_pace, "Duration scale applied to predicted durations");
  syn->add_flag("--reference-durations", syn_forced,
                "Also synthesize with durations aligned to the manifest audio");

  auto* voc = app.add_subcommand("vocode", "Convert mel caches to audio");
  add_common(voc, voc_c);
  std::string voc_ckpt;
  std::vector<std::string> voc_mels;
  voc->add_option("--vocoder", voc_ckpt, "Vocoder checkpoint")->required()->check(CLI::ExistingFile);
  voc->add_option("--mel", voc_mels, "Mel cache file (repeatable)")
      ->required()
      ->allow_extra_args(false)
      ->check(CLI::ExistingFile);

  auto* ev = app.add_subcommand("evaluate", "Pitch errors, speaker verification and speaking rate");
  add_common(ev, eval_c);
  std::string ev_synth, ev_voc, ev_target, ev_other, ev_dir, ev_emb, ev_labels;
  int ev_speaker = 0;
  double ev_pace = 1.0;
  ev->add_option("--synthesizer", ev_synth, "Synthesizer checkpoint")->required()->check(CLI::ExistingFile);
  ev->add_option("--vocoder", ev_voc, "Vocoder checkpoint (inline synthesis)")->check(CLI::ExistingFile);
  ev->add_option("--target-manifest", ev_target, "Target speaker validation manifest")
      ->required()
      ->check(CLI::ExistingFile);
  ev->add_option("--other-manifest", ev_other, "Validation manifest of the other speakers")
      ->required()
      ->check(CLI::ExistingFile);
  ev->add_option("--target-speaker", ev_speaker, "Target speaker id")->required();
  ev->add_option("--synthesized-dir", ev_dir,
                 "Directory with <id>.wav and <id>.forced.wav instead of inline synthesis")
      ->check(CLI::ExistingDirectory);
  ev->add_option("--embeddings", ev_emb, "External embedding matrix")->check(CLI::ExistingFile);
  ev->add_option("--embedding-labels", ev_labels, "Labels for --embeddings")->check(CLI::ExistingFile);
  ev->add_option("--pace", ev_pace, "Duration scale for free-running synthesis");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e, out, err);
    err << "vclone: error: " << e.what() << '\n';
    return kUsageError;
  }

  std::optional<RunRecord> record;
  try {
    CLI::App* cmd = app.get_subcommands().front();
    const std::string name = cmd->get_name();
    const Common& c = cmd == pre    ? pre_c
                      : cmd == sub  ? sub_c
                      : cmd == fin  ? fin_c
                      : cmd == syn  ? syn_c
                      : cmd == voc  ? voc_c
                                    : eval_c;
    const nlohmann::json config = build_config(c);
    const Settings s = resolve(config);
    const fs::path out_dir = c.output_dir;

    if (cmd == pre) {
      const bool synth = pre_model != "vocoder";
      const bool vocode = pre_model != "synthesizer";
      const data::Tokenizer tokenizer;
      const auto examples = prepare(pre_manifest, synth, tokenizer, s.mel, s.yin);
      record.emplace(out_dir, name, argc, argv, config);
      record->inputs()["manifest"] = fs::absolute(pre_manifest).string();
      if (synth) record->steps()["synthesizer"] = s.pretrain.steps;
      if (vocode) record->steps()["vocoder"] = s.vocoder_pretrain.steps;
      record->write();
      if (synth) {
        finetune::StepLog last;
        finetune::pretrain(examples, s.acoustic, tokenizer, s.mel, s.yin, s.pretrain, nullptr,
                           run_outputs(out_dir, "synthesizer", s, &last));
        record->outputs()["synthesizer"] = (out_dir / "checkpoints/synthesizer/final.ckpt").string();
        out << summary("synthesizer", last, s.pretrain.steps) << '\n';
      }
      if (vocode) {
        finetune::StepLog last;
        finetune::pretrain_vocoder(examples, s.vocoder, s.mel, s.vocoder_pretrain, nullptr,
                                   run_outputs(out_dir, "vocoder", s, &last));
        record->outputs()["vocoder"] = (out_dir / "checkpoints/vocoder/final.ckpt").string();
        out << summary("vocoder", last, s.vocoder_pretrain.steps) << '\n';
      }
    } else if (cmd == sub) {
      const auto records = data::load_manifest(sub_manifest, false);
      const auto subset = data::make_subset(records, sub_minutes, s.seed);
      record.emplace(out_dir, name, argc, argv, config);
      record->inputs()["manifest"] = fs::absolute(sub_manifest).string();
      record->inputs()["minutes"] = sub_minutes;
      const fs::path dst = out_dir / "manifests" / "subset.json";
      data::write_manifest(dst, subset);
      record->outputs()["manifest"] = dst.string();
      record->outputs()["utterances"] = subset.size();
      record->outputs()["duration_sec"] = data::total_duration(subset);
      out << "subset: " << subset.size() << " utterances, " << data::total_duration(subset)
          << " s\n";
    } else if (cmd == fin) {
      const auto method = finetune::parse_method(fin_method);
      if (fin_synth.empty() && fin_voc.empty()) {
        throw ConfigError("finetune needs --synthesizer and/or --vocoder");
      }
      if (method == finetune::Method::kMixed && fin_original.empty()) {
        throw ConfigError("mixed finetuning requires --original-manifest");
      }
      const std::int64_t steps = finetune::scheduled_steps(method, fin_minutes);
      finetune::FinetuneSpec spec{method, fin_minutes, s.seed, s.finetune_lr, s.finetune_batch_size};

      std::optional<finetune::SynthesizerBundle> synth;
      std::optional<finetune::VocoderBundle> vocoder;
      if (!fin_synth.empty()) synth.emplace(finetune::SynthesizerBundle::load(fin_synth));
      if (!fin_voc.empty()) vocoder.emplace(finetune::VocoderBundle::load(fin_voc));
      const data::Tokenizer tokenizer = synth ? synth->tokenizer() : data::Tokenizer();
      const mel::MelConfig mel = synth ? synth->mel_config : vocoder->vocoder.mel_config();
      const pitch::YinConfig yin = synth ? synth->yin_config : s.yin;
      if (synth && vocoder && !(vocoder->vocoder.mel_config() == mel)) {
        throw ConfigError("synthesizer and vocoder checkpoints use different mel settings");
      }
      const bool need_text = synth.has_value();
      const auto new_examples = prepare(fin_manifest, need_text, tokenizer, mel, yin);
      std::vector<data::Example> original;
      if (method == finetune::Method::kMixed) {
        original = prepare(fin_original, need_text, tokenizer, mel, yin);
      }

      record.emplace(out_dir, name, argc, argv, config);
      record->inputs()["method"] = fin_method;
      record->inputs()["minutes"] = fin_minutes;
      record->inputs()["manifest"] = fs::absolute(fin_manifest).string();
      double new_duration = 0.0;
      for (const auto& e : new_examples) new_duration += e.record.duration_sec;
      record->inputs()["manifest_duration_sec"] = new_duration;
      if (!fin_original.empty()) record->inputs()["original_manifest"] = fs::absolute(fin_original).string();
      if (synth) {
        record->inputs()["synthesizer"] = fs::absolute(fin_synth).string();
        record->steps()["synthesizer"] = steps;
      }
      if (vocoder) {
        record->inputs()["vocoder"] = fs::absolute(fin_voc).string();
        record->steps()["vocoder"] = steps;
      }
      record->write();

      if (synth) {
        finetune::StepLog last;
        auto outputs = run_outputs(out_dir, "synthesizer", s, &last);
        if (method == finetune::Method::kDirect) {
          finetune::direct_finetune(*synth, spec, new_examples, nullptr, outputs);
        } else {
          finetune::mixed_finetune(*synth, spec, new_examples, original, nullptr, outputs);
        }
        record->outputs()["synthesizer"] = (out_dir / "checkpoints/synthesizer/final.ckpt").string();
        out << summary("synthesizer", last, steps) << '\n';
      }
      if (vocoder) {
        finetune::StepLog last;
        finetune::FinetuneSpec vspec = spec;
        vspec.lr = s.finetune_vocoder_lr;
        finetune::finetune_vocoder(*vocoder, vspec, new_examples, original, nullptr,
                                   run_outputs(out_dir, "vocoder", s, &last));
        record->outputs()["vocoder"] = (out_dir / "checkpoints/vocoder/final.ckpt").string();
        out << summary("vocoder", last, steps) << '\n';
      }
    } else if (cmd == syn) {
      if (syn_texts.empty() == syn_manifest.empty()) {
        throw ConfigError("synthesize needs exactly one of --text or --manifest");
      }
      if (syn_forced && syn_manifest.empty()) {
        throw ConfigError("--reference-durations requires --manifest");
      }
      if (!(syn_pace > 0.0)) throw ConfigError("--pace must be positive");
      const auto bundle = finetune::SynthesizerBundle::load(syn_synth);
      std::optional<finetune::VocoderBundle> vocoder;
      if (!syn_voc.empty()) vocoder.emplace(finetune::VocoderBundle::load(syn_voc));
      if (vocoder && !(vocoder->vocoder.mel_config() == bundle.mel_config)) {
        throw ConfigError("synthesizer and vocoder checkpoints use different mel settings");
      }
      const data::Tokenizer tokenizer = bundle.tokenizer();
      if (bundle.model.config().multi_speaker() && !syn_speaker) {
        throw ConfigError("multi-speaker synthesizer needs --speaker");
      }
      const std::optional<int> row = syn_speaker ? bundle.speaker_row(*syn_speaker) : std::nullopt;

      struct Job {
        std::string id;
        data::TokenSequence tokens;
        std::optional<data::Example> reference;
      };
      std::vector<Job> jobs;
      if (!syn_texts.empty()) {
        for (std::size_t i = 0; i < syn_texts.size(); ++i) {
          jobs.push_back({"text_" + std::to_string(i), tokenizer.tokenize(syn_texts[i]), {}});
        }
      } else {
        for (auto& ex : prepare(syn_manifest, true, tokenizer, bundle.mel_config, bundle.yin_config)) {
          Job j{evaluation::utterance_id(ex), ex.tokens, {}};
          if (syn_forced) j.reference = std::move(ex);
          jobs.push_back(std::move(j));
        }
      }
      for (const auto& j : jobs) {
        for (std::size_t i = 0; i < j.tokens.ids.size(); ++i) {
          if (j.tokens.ids[i] == data::Tokenizer::kUnknownId) {
            throw DataError("symbol '" + j.tokens.symbols[i] + "' is not in the vocabulary");
          }
        }
      }

      record.emplace(out_dir, name, argc, argv, config);
      record->inputs()["synthesizer"] = fs::absolute(syn_synth).string();
      if (vocoder) record->inputs()["vocoder"] = fs::absolute(syn_voc).string();
      record->inputs()["pace"] = syn_pace;
      record->write();

      ag::NoGradGuard no_grad;
      const fs::path audio_dir = out_dir / "audio";
      fs::create_directories(audio_dir);
      const int sr = bundle.mel_config.sample_rate_hz;
      for (const auto& j : jobs) {
        const auto free = bundle.model.synthesize(j.tokens.ids, row, bundle.mel_config, syn_pace);
        data::write_mel_cache(audio_dir / (j.id + ".mel"), free.mel);
        if (vocoder) write_audio(audio_dir / (j.id + ".wav"), vocoder->vocoder.generate(free.mel), sr);
        if (j.reference) {
          const auto forced =
              bundle.model.synthesize_with_reference_durations(j.tokens.ids, j.reference->mel, row);
          data::write_mel_cache(audio_dir / (j.id + ".forced.mel"), forced.mel);
          if (vocoder) {
            write_audio(audio_dir / (j.id + ".forced.wav"), vocoder->vocoder.generate(forced.mel), sr);
          }
        }
        out << j.id << ": " << free.mel.frames() << " frames\n";
      }
      record->outputs()["audio_dir"] = audio_dir.string();
      record->outputs()["utterances"] = jobs.size();
    } else if (cmd == voc) {
      const auto bundle = finetune::VocoderBundle::load(voc_ckpt);
      record.emplace(out_dir, name, argc, argv, config);
      record->inputs()["vocoder"] = fs::absolute(voc_ckpt).string();
      record->write();
      ag::NoGradGuard no_grad;
      const fs::path audio_dir = out_dir / "audio";
      fs::create_directories(audio_dir);
      for (const auto& m : voc_mels) {
        const auto mel = data::read_mel_cache(m, bundle.vocoder.mel_config());
        const fs::path dst = audio_dir / (fs::path(m).stem().string() + ".wav");
        write_audio(dst, bundle.vocoder.generate(mel), bundle.vocoder.mel_config().sample_rate_hz);
        out << dst.string() << '\n';
      }
      record->outputs()["audio_dir"] = audio_dir.string();
    } else {
      if (ev_voc.empty() == ev_dir.empty()) {
        throw ConfigError("evaluate needs exactly one of --vocoder or --synthesized-dir");
      }
      if (ev_emb.empty() != ev_labels.empty()) {
        throw ConfigError("--embeddings and --embedding-labels go together");
      }
      if (!(ev_pace > 0.0)) throw ConfigError("--pace must be positive");
      const auto bundle = finetune::SynthesizerBundle::load(ev_synth);
      const data::Tokenizer tokenizer = bundle.tokenizer();
      evaluation::EvaluationSet set;
      set.target_speaker = ev_speaker;
      set.target = prepare(ev_target, true, tokenizer, bundle.mel_config, bundle.yin_config);
      set.others = prepare(ev_other, false, tokenizer, bundle.mel_config, bundle.yin_config);

      record.emplace(out_dir, name, argc, argv, config);
      record->inputs()["synthesizer"] = fs::absolute(ev_synth).string();
      record->inputs()["target_manifest"] = fs::absolute(ev_target).string();
      record->inputs()["other_manifest"] = fs::absolute(ev_other).string();
      record->inputs()["target_speaker"] = ev_speaker;
      record->write();

      evaluation::EvaluationOptions options;
      options.pace = ev_pace;
      options.embeddings_dir = out_dir / "embeddings";
      options.det_dir = out_dir / "reports";
      if (!ev_emb.empty()) {
        options.embedder = evaluation::table_embedder(evaluation::load_embeddings(ev_emb, ev_labels));
      }
      std::vector<evaluation::SynthesizedItem> items;
      if (!ev_voc.empty()) {
        const auto vocoder = finetune::VocoderBundle::load(ev_voc);
        record->inputs()["vocoder"] = fs::absolute(ev_voc).string();
        items = evaluation::synthesize_items(bundle, vocoder, set.target, ev_speaker, ev_pace);
      } else {
        record->inputs()["synthesized_dir"] = fs::absolute(ev_dir).string();
        const int sr = bundle.mel_config.sample_rate_hz;
        for (const auto& ex : set.target) {
          const std::string id = evaluation::utterance_id(ex);
          items.push_back({id, audio::load_audio(fs::path(ev_dir) / (id + ".forced.wav"), sr).samples,
                           audio::load_audio(fs::path(ev_dir) / (id + ".wav"), sr).samples});
        }
      }
      const auto report = evaluation::score_synthesized(set, items, tokenizer, bundle.mel_config,
                                                        bundle.yin_config, options);
      const fs::path report_path = out_dir / "reports" / "evaluation.json";
      {
        std::ofstream f(report_path);
        if (!f) throw DataError("cannot write " + report_path.string());
        f << report.to_json().dump(2) << '\n';
      }
      record->outputs()["report"] = report_path.string();
      record->outputs()["embeddings"] = (out_dir / "embeddings").string();
      out << "GPE " << report.pooled.gpe_pct << "% VDE " << report.pooled.vde_pct << "% FFE "
          << report.pooled.ffe_pct << "% | EER real " << report.eer_real_pct << "% synthetic "
          << report.eer_synthetic_pct << "% over " << report.trials_real
          << " trials | phonemes/s real " << report.real_phoneme_rate << " synthetic "
          << report.synthetic_phoneme_rate << '\n';
    }
    if (record) record->complete();
    return kSuccess;
  } catch (const ConfigError& e) {
    if (record) record->fail(e.what());
    err << "vclone: error: " << e.what() << '\n';
    return kUsageError;
  } catch (const DataError& e) {
    if (record) record->fail(e.what());
    err << "vclone: data error: " << e.what() << '\n';
    return kDataError;
  } catch (const std::exception& e) {
    if (record) record->fail(e.what());
    err << "vclone: failure: " << e.what() << '\n';
    return kRuntimeFailure;
  }
}

}  // namespace cli
}  // namespace vclone
