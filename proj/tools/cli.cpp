// Copyright 2026 The advtts Authors
// SPDX-License-Identifier: Apache-2.0

#include "cli.hpp"

#include <charconv>
#include <filesystem>
#include <fstream>

#include "advtts/errors.hpp"
#include "advtts/evalprobe.hpp"
#include "advtts/kvfile.hpp"
#include "advtts/model.hpp"
#include "advtts/synthdata.hpp"
#include "advtts/trainopt.hpp"

namespace advtts::cli {

namespace {

namespace fs = std::filesystem;

struct KeyDef {
  const char* name;
  const char* value;
};

// One merged configuration backs every subcommand; flags mirror these keys
// with a -- prefix and win over the --config file, which wins over the
// defaults below. The effective values are echoed to <outdir>/config.resolved
// in this order.
constexpr KeyDef kRegistry[] = {
    // corpus
    {"vocab", "12"},
    {"frame_dim", "16"},
    {"frames_per_symbol", "4"},
    {"speakers", "8"},
    {"utterances", "2000"},
    {"len_min", "4"},
    {"len_max", "10"},
    {"style", "0.5"},
    {"noise", "0.05"},
    {"seed", "42"},
    // model
    {"text_emb_dim", "32"},
    {"speaker_emb_dim", "16"},
    {"enc_layers", "2"},
    {"dec_layers", "2"},
    {"conv_width", "5"},
    {"classifier_hidden", "32"},
    {"window_back", "1"},
    {"window_forward", "3"},
    {"lambda", "1"},
    {"ams_scale", "40"},
    {"ams_margin", "0.6"},
    // optimizer
    {"beta1", "0.5"},
    {"beta2", "0.9"},
    {"epsilon", "1e-06"},
    {"lr", "0.0005"},
    {"warmup", "500"},
    {"clip_norm", "0.1"},
    {"clip_scope", "all"},
    // run
    {"steps", "3000"},
    {"batch", "8"},
    {"adversarial", "on"},
    {"train_window", "off"},
    {"train_seed", "1"},
    {"probe_seed", "7"},
    {"probe_slice", "0.25"},
    {"input", "embedding"},
    {"outdir", "out"},
    {"corpus", ""},
    {"checkpoint", ""},
    {"checkpoint_a", ""},
    {"checkpoint_b", ""},
    {"symbols", ""},
    {"speaker", "0"},
    {"out", ""},
};

bool known_key(const std::string& key) {
  for (const KeyDef& def : kRegistry)
    if (key == def.name) return true;
  return false;
}

class Config {
 public:
  // Defaults, then config file, then flags.
  Config(const std::vector<std::string>& args, std::size_t first) {
    for (const KeyDef& def : kRegistry) doc_.set(def.name, def.value);

    std::string config_path;
    std::vector<std::pair<std::string, std::string>> flags;
    for (std::size_t i = first; i < args.size(); ++i) {
      const std::string& arg = args[i];
      if (arg.rfind("--", 0) != 0)
        throw ContractError("expected a --flag, got '" + arg + "'");
      const std::string key = arg.substr(2);
      if (i + 1 >= args.size())
        throw ContractError("flag --" + key + " is missing a value");
      const std::string& value = args[++i];
      if (key == "config")
        config_path = value;
      else if (known_key(key))
        flags.emplace_back(key, value);
      else
        throw ContractError("unknown flag --" + key);
    }

    if (!config_path.empty()) {
      const KvDoc file = KvDoc::parse_file(config_path);
      for (const auto& [key, value] : file.entries()) {
        if (!known_key(key))
          throw ParseError(config_path + ": unknown key '" + key + "'");
        doc_.set(key, value);
      }
    }
    for (const auto& [key, value] : flags) doc_.set(key, value);
  }

  const std::string& str(const std::string& key) const {
    return doc_.get(key);
  }

  int integer(const std::string& key) const {
    return static_cast<int>(doc_.get_int(key));
  }

  std::uint64_t u64(const std::string& key) const { return doc_.get_u64(key); }
  double number(const std::string& key) const { return doc_.get_double(key); }

  bool toggle(const std::string& key) const {
    const std::string& v = str(key);
    if (v == "on") return true;
    if (v == "off") return false;
    throw ConfigError("key '" + key + "' must be on or off, got '" + v + "'");
  }

  void set(const std::string& key, const std::string& value) {
    doc_.set(key, value);
  }
  void set_int(const std::string& key, std::int64_t value) {
    doc_.set_int(key, value);
  }
  void set_double(const std::string& key, double value) {
    doc_.set_double(key, value);
  }

  fs::path outdir() const { return fs::path(str("outdir")); }

  fs::path path_or(const std::string& key, const char* fallback_name) const {
    const std::string& v = str(key);
    if (!v.empty()) return fs::path(v);
    return outdir() / fallback_name;
  }

  void write_resolved() const {
    fs::create_directories(outdir());
    doc_.write_file(outdir() / "config.resolved");
  }

 private:
  KvDoc doc_;
};

data::CorpusSpec corpus_spec_from(const Config& cfg) {
  data::CorpusSpec spec;
  spec.vocab = cfg.integer("vocab");
  spec.frame_dim = cfg.integer("frame_dim");
  spec.frames_per_symbol = cfg.integer("frames_per_symbol");
  spec.speakers = cfg.integer("speakers");
  spec.utterances = cfg.integer("utterances");
  spec.len_min = cfg.integer("len_min");
  spec.len_max = cfg.integer("len_max");
  spec.style = cfg.number("style");
  spec.noise = cfg.number("noise");
  spec.seed = cfg.u64("seed");
  data::validate(spec);
  return spec;
}

// The corpus file is the authority for corpus-shaped keys; echo its values
// so the resolved config always reflects what the run actually used.
void fold_corpus_into(Config& cfg, const data::CorpusSpec& spec,
                      const fs::path& corpus_path) {
  cfg.set_int("vocab", spec.vocab);
  cfg.set_int("frame_dim", spec.frame_dim);
  cfg.set_int("frames_per_symbol", spec.frames_per_symbol);
  cfg.set_int("speakers", spec.speakers);
  cfg.set_int("utterances", spec.utterances);
  cfg.set_int("len_min", spec.len_min);
  cfg.set_int("len_max", spec.len_max);
  cfg.set_double("style", spec.style);
  cfg.set_double("noise", spec.noise);
  cfg.set("seed", std::to_string(spec.seed));
  cfg.set("corpus", corpus_path.string());
}

model::ModelConfig model_config_from(const Config& cfg,
                                     const data::CorpusSpec& spec,
                                     double effective_lambda) {
  model::ModelConfig mc;
  mc.vocab_size = spec.vocab;
  mc.text_emb_dim = cfg.integer("text_emb_dim");
  mc.speaker_emb_dim = cfg.integer("speaker_emb_dim");
  mc.frame_dim = spec.frame_dim;
  mc.num_speakers = spec.speakers;
  mc.enc_layers = cfg.integer("enc_layers");
  mc.dec_layers = cfg.integer("dec_layers");
  mc.conv_width = cfg.integer("conv_width");
  mc.classifier_hidden = cfg.integer("classifier_hidden");
  mc.window.back = cfg.integer("window_back");
  mc.window.forward = cfg.integer("window_forward");
  mc.grl.lambda = effective_lambda;
  mc.ams.scale = cfg.number("ams_scale");
  mc.ams.margin = cfg.number("ams_margin");
  mc.ams.num_classes = spec.speakers;
  model::validate(mc);
  return mc;
}

train::AdamConfig adam_config_from(const Config& cfg) {
  train::AdamConfig adam;
  adam.beta1 = cfg.number("beta1");
  adam.beta2 = cfg.number("beta2");
  adam.epsilon = cfg.number("epsilon");
  adam.lr_peak = cfg.number("lr");
  adam.warmup_steps = cfg.integer("warmup");
  adam.clip_norm = cfg.number("clip_norm");
  train::validate(adam);
  return adam;
}

std::vector<int> parse_symbols(const std::string& csv) {
  if (csv.empty())
    throw ContractError("--symbols requires a comma-separated id list");
  std::vector<int> symbols;
  std::size_t pos = 0;
  while (pos <= csv.size()) {
    const std::size_t comma = std::min(csv.find(',', pos), csv.size());
    const std::string token = csv.substr(pos, comma - pos);
    int value = 0;
    const auto [ptr, ec] =
        std::from_chars(token.data(), token.data() + token.size(), value);
    if (ec != std::errc() || ptr != token.data() + token.size())
      throw ContractError("invalid symbol id '" + token + "'");
    symbols.push_back(value);
    pos = comma + 1;
  }
  return symbols;
}

std::span<const data::Utterance> held_out_slice(
    const std::vector<data::Utterance>& corpus, double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0))
    throw ConfigError("probe_slice must lie in (0, 1]");
  const auto n = corpus.size();
  auto count = static_cast<std::size_t>(fraction * static_cast<double>(n));
  count = std::max<std::size_t>(count, 1);
  return {corpus.data() + (n - count), count};
}

void write_frames_csv(const Tensor& frames, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  for (std::size_t i = 0; i < frames.rows(); ++i) {
    for (std::size_t j = 0; j < frames.cols(); ++j) {
      if (j) out << ',';
      out << format_double(frames.at(i, j));
    }
    out << '\n';
  }
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

void check_symbols_and_speaker(const model::ModelConfig& mc,
                               std::span<const int> symbols, int speaker) {
  for (int s : symbols)
    if (s < 0 || s >= mc.vocab_size)
      throw ContractError("symbol " + std::to_string(s) +
                          " out of range [0, " +
                          std::to_string(mc.vocab_size) + ")");
  if (speaker < 0 || speaker >= mc.num_speakers)
    throw ContractError("speaker " + std::to_string(speaker) +
                        " out of range [0, " +
                        std::to_string(mc.num_speakers) + ")");
}

int cmd_gen_data(Config& cfg, std::ostream& out) {
  const data::CorpusSpec spec = corpus_spec_from(cfg);
  const std::vector<data::Utterance> corpus = data::gen_corpus(spec);

  fs::create_directories(cfg.outdir());
  const fs::path spec_path = cfg.path_or("out", "corpus.spec");
  data::save_corpus(spec, spec_path);
  cfg.set("out", spec_path.string());
  cfg.set("corpus", spec_path.string());
  cfg.write_resolved();

  std::size_t total_frames = 0;
  for (const data::Utterance& utt : corpus) total_frames += utt.frames.rows();
  out << "wrote " << spec_path.string() << "\n";
  out << "utterances=" << corpus.size() << " speakers=" << spec.speakers
      << " total_frames=" << total_frames << "\n";
  return 0;
}

int cmd_train(Config& cfg, std::ostream& out) {
  const fs::path corpus_path = cfg.path_or("corpus", "corpus.spec");
  if (!fs::exists(corpus_path))
    throw ContractError("corpus spec not found: " + corpus_path.string());
  const data::CorpusSpec spec = data::load_corpus(corpus_path);
  fold_corpus_into(cfg, spec, corpus_path);
  const std::vector<data::Utterance> corpus = data::gen_corpus(spec);

  const bool adversarial = cfg.toggle("adversarial");
  const double lambda = adversarial ? cfg.number("lambda") : 0.0;
  const model::ModelConfig mc = model_config_from(cfg, spec, lambda);
  const train::AdamConfig adam = adam_config_from(cfg);

  const std::string& scope = cfg.str("clip_scope");
  train::TrainOptions options;
  options.steps = cfg.integer("steps");
  options.batch_size = cfg.integer("batch");
  options.adversarial = true;  // lambda already reflects the switch
  options.seed = cfg.u64("train_seed");
  options.train_window = cfg.toggle("train_window");
  if (scope == "all")
    options.clip_scope = train::ClipScope::kAll;
  else if (scope == "classifier")
    options.clip_scope = train::ClipScope::kClassifier;
  else
    throw ConfigError("clip_scope must be all or classifier, got '" + scope +
                      "'");

  train::TrainResult result = train::train(corpus, mc, adam, options);

  fs::create_directories(cfg.outdir());
  const fs::path ckpt_path = cfg.path_or("checkpoint", "model.ckpt");
  train::save_checkpoint(result.params, mc, result.state, ckpt_path);
  result.log.write_csv(cfg.outdir() / "train_log.csv");
  cfg.set("checkpoint", ckpt_path.string());
  cfg.write_resolved();

  const train::TrainRecord& first = result.log.records.front();
  const train::TrainRecord& last = result.log.records.back();
  out << "trained " << options.steps << " steps (lambda="
      << format_double(lambda) << ")\n";
  out << "l1 " << format_double(first.l1) << " -> " << format_double(last.l1)
      << ", ams " << format_double(first.ams) << " -> "
      << format_double(last.ams) << "\n";
  out << "wrote " << ckpt_path.string() << "\n";
  return 0;
}

int cmd_probe(Config& cfg, std::ostream& out) {
  const fs::path ckpt_path = cfg.path_or("checkpoint", "model.ckpt");
  const train::Checkpoint ckpt = train::load_checkpoint(ckpt_path);
  cfg.set("checkpoint", ckpt_path.string());

  const fs::path corpus_path = cfg.path_or("corpus", "corpus.spec");
  if (!fs::exists(corpus_path))
    throw ContractError("corpus spec not found: " + corpus_path.string());
  const data::CorpusSpec spec = data::load_corpus(corpus_path);
  fold_corpus_into(cfg, spec, corpus_path);
  if (ckpt.config.vocab_size != spec.vocab ||
      ckpt.config.frame_dim != spec.frame_dim ||
      ckpt.config.num_speakers != spec.speakers)
    throw ConfigError("checkpoint does not match the corpus: vocab/frames/"
                      "speakers differ");

  const std::vector<data::Utterance> corpus = data::gen_corpus(spec);
  std::span<const data::Utterance> slice =
      held_out_slice(corpus, cfg.number("probe_slice"));

  const std::string& input = cfg.str("input");
  eval::EmbeddingSet set;
  if (input == "embedding")
    set = eval::extract_embeddings(ckpt.params, slice);
  else if (input == "frames")
    set = eval::mean_frame_embeddings(slice);
  else
    throw ConfigError("input must be embedding or frames, got '" + input +
                      "'");

  eval::ProbeOptions probe_options;
  probe_options.hidden_units = ckpt.config.classifier_hidden;
  const eval::ProbeResult result = eval::train_probe(
      set, spec.speakers, cfg.u64("probe_seed"), probe_options);

  fs::create_directories(cfg.outdir());
  eval::write_probe_csv(result, cfg.outdir() / "probe.csv");
  cfg.write_resolved();

  out << "probe input=" << input << " accuracy="
      << format_double(result.accuracy) << " chance="
      << format_double(result.chance) << " num_eval=" << result.num_eval
      << "\n";
  return 0;
}

struct SynthOutput {
  model::ForwardOutput forward;
  eval::AlignmentReport report;
};

SynthOutput synthesize(const train::Checkpoint& ckpt,
                       std::span<const int> symbols, int speaker,
                       int frames_per_symbol) {
  check_symbols_and_speaker(ckpt.config, symbols, speaker);
  if (frames_per_symbol < 1)
    throw ConfigError("frames_per_symbol must be positive");
  const int num_frames =
      frames_per_symbol * static_cast<int>(symbols.size());
  model::ForwardOutput forward = model::infer_autoregressive(
      ckpt.params, ckpt.config, symbols, speaker, num_frames);
  eval::AlignmentReport report =
      eval::alignment_report(forward.alignment, ckpt.config.window.forward);
  return {std::move(forward), std::move(report)};
}

int cmd_synth(Config& cfg, std::ostream& out) {
  const fs::path ckpt_path = cfg.path_or("checkpoint", "model.ckpt");
  const train::Checkpoint ckpt = train::load_checkpoint(ckpt_path);
  cfg.set("checkpoint", ckpt_path.string());

  const std::vector<int> symbols = parse_symbols(cfg.str("symbols"));
  const int speaker = cfg.integer("speaker");
  SynthOutput synth =
      synthesize(ckpt, symbols, speaker, cfg.integer("frames_per_symbol"));

  fs::create_directories(cfg.outdir());
  const fs::path frames_path = cfg.outdir() / "frames.csv";
  write_frames_csv(synth.forward.predicted_frames, frames_path);
  eval::export_alignment(synth.forward.alignment, cfg.outdir() / "alignment");
  cfg.write_resolved();

  out << "synthesized " << synth.forward.predicted_frames.rows()
      << " frames for " << symbols.size() << " symbols (speaker " << speaker
      << ")\n";
  out << "wrote " << frames_path.string() << ", "
      << (cfg.outdir() / "alignment.csv").string() << ", "
      << (cfg.outdir() / "alignment.pgm").string() << "\n";
  out << "monotonicity=" << format_double(synth.report.monotonicity)
      << " coverage=" << format_double(synth.report.coverage) << "\n";
  return 0;
}

int cmd_align_compare(Config& cfg, std::ostream& out) {
  const std::string& path_a = cfg.str("checkpoint_a");
  const std::string& path_b = cfg.str("checkpoint_b");
  if (path_a.empty() || path_b.empty())
    throw ContractError(
        "align-compare requires --checkpoint_a and --checkpoint_b");
  const train::Checkpoint a = train::load_checkpoint(path_a);
  const train::Checkpoint b = train::load_checkpoint(path_b);

  const std::vector<int> symbols = parse_symbols(cfg.str("symbols"));
  const int speaker = cfg.integer("speaker");
  const int r = cfg.integer("frames_per_symbol");
  SynthOutput sa = synthesize(a, symbols, speaker, r);
  SynthOutput sb = synthesize(b, symbols, speaker, r);

  fs::create_directories(cfg.outdir());
  eval::export_alignment(sa.forward.alignment, cfg.outdir() / "alignment_a");
  eval::export_alignment(sb.forward.alignment, cfg.outdir() / "alignment_b");
  cfg.write_resolved();

  out << "a: " << (cfg.outdir() / "alignment_a.csv").string()
      << " monotonicity=" << format_double(sa.report.monotonicity)
      << " coverage=" << format_double(sa.report.coverage) << "\n";
  out << "b: " << (cfg.outdir() / "alignment_b.csv").string()
      << " monotonicity=" << format_double(sb.report.monotonicity)
      << " coverage=" << format_double(sb.report.coverage) << "\n";
  out << "monotonicity_diff="
      << format_double(sb.report.monotonicity - sa.report.monotonicity)
      << "\n";
  return 0;
}

constexpr const char* kUsage =
    "usage: advtts <command> [--config FILE] [--key value ...]\n"
    "\n"
    "commands:\n"
    "  gen-data       write a corpus spec file and report its size\n"
    "  train          train a model on a corpus spec\n"
    "  probe          measure speaker information left in embeddings\n"
    "  synth          autoregressive synthesis from a checkpoint\n"
    "  align-compare  synthesize with two checkpoints, compare alignments\n"
    "\n"
    "Flags mirror the config keys (see README). Exit codes: 0 ok,\n"
    "2 usage/validation error, 3 numeric failure.\n";

}  // namespace

int run_command(const std::vector<std::string>& args, std::ostream& out,
                std::ostream& err) {
  try {
    if (args.empty() || args[0] == "--help" || args[0] == "help") {
      out << kUsage;
      return args.empty() ? 2 : 0;
    }
    const std::string& command = args[0];
    Config cfg(args, 1);
    if (command == "gen-data") return cmd_gen_data(cfg, out);
    if (command == "train") return cmd_train(cfg, out);
    if (command == "probe") return cmd_probe(cfg, out);
    if (command == "synth") return cmd_synth(cfg, out);
    if (command == "align-compare") return cmd_align_compare(cfg, out);
    err << "error: unknown command '" << command << "'\n" << kUsage;
    return 2;
  } catch (const NumericError& e) {
    err << "error: " << e.what() << "\n";
    return 3;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace advtts::cli
