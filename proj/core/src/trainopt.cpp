// Copyright 2026 The advtts Authors
// SPDX-License-Identifier: Apache-2.0

#include "advtts/trainopt.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <sstream>

#include "advtts/errors.hpp"
#include "advtts/kvfile.hpp"
#include "advtts/ops.hpp"
#include "advtts/prng.hpp"

namespace advtts::train {

namespace {

constexpr const char* kCheckpointMagic = "advtts-checkpoint-v1";

void append_le(std::string& out, double value) {
  const auto bits = std::bit_cast<std::uint64_t>(value);
  for (int i = 0; i < 8; ++i)
    out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

double read_le(const char* p) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i)
    bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[i]))
            << (8 * i);
  return std::bit_cast<double>(bits);
}

}  // namespace

void validate(const AdamConfig& cfg) {
  if (!(cfg.beta1 >= 0.0 && cfg.beta1 < 1.0))
    throw ConfigError("adam: beta1 must lie in [0, 1)");
  if (!(cfg.beta2 >= 0.0 && cfg.beta2 < 1.0))
    throw ConfigError("adam: beta2 must lie in [0, 1)");
  if (!(cfg.epsilon > 0.0)) throw ConfigError("adam: epsilon must be positive");
  if (!(cfg.lr_peak > 0.0)) throw ConfigError("adam: lr must be positive");
  if (cfg.warmup_steps < 1)
    throw ConfigError("adam: warmup_steps must be positive");
  if (!(cfg.clip_norm > 0.0))
    throw ConfigError("adam: clip_norm must be positive");
}

double noam_lr(int step, const AdamConfig& cfg) {
  if (step < 1)
    throw ContractError("noam_lr: step must be >= 1, got " +
                        std::to_string(step));
  const double s = static_cast<double>(step);
  const double w = static_cast<double>(cfg.warmup_steps);
  return cfg.lr_peak * std::min(s / w, std::sqrt(w / s));
}

double l2_norm(std::span<const double> values) {
  double sq = 0.0;
  for (double v : values) sq += v * v;
  return std::sqrt(sq);
}

std::vector<double> clip_gradients(std::vector<double> grads,
                                   double clip_norm) {
  if (!(clip_norm > 0.0))
    throw ConfigError("clip_gradients: clip_norm must be positive");
  for (std::size_t i = 0; i < grads.size(); ++i)
    if (!std::isfinite(grads[i]))
      throw NumericError("gradient is not finite at flat index " +
                         std::to_string(i));
  const double norm = l2_norm(grads);
  if (norm > clip_norm) {
    const double factor = clip_norm / norm;
    for (double& g : grads) g *= factor;
  }
  return grads;
}

void adam_step(std::vector<double>& params, std::span<const double> grads,
               AdamState& state, const AdamConfig& cfg) {
  validate(cfg);
  if (grads.size() != params.size())
    throw ContractError("adam_step: " + std::to_string(grads.size()) +
                        " gradients for " + std::to_string(params.size()) +
                        " parameters");
  if (state.first_moment.empty()) {
    state.first_moment.assign(params.size(), 0.0);
    state.second_moment.assign(params.size(), 0.0);
  }
  if (state.first_moment.size() != params.size() ||
      state.second_moment.size() != params.size())
    throw ContractError("adam_step: moment arrays do not match parameters");

  const int t = state.step + 1;
  const double lr = noam_lr(t, cfg);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    double& m = state.first_moment[i];
    double& v = state.second_moment[i];
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
    const double m_hat = m / bc1;
    const double v_hat = v / bc2;
    params[i] -= lr * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
  }
  state.step = t;
}

TrainResult train(std::span<const data::Utterance> corpus,
                  const model::ModelConfig& model_cfg,
                  const AdamConfig& adam_cfg, const TrainOptions& options,
                  const model::ModelParams* init) {
  if (corpus.empty()) throw ContractError("train: empty corpus");
  if (options.steps < 1)
    throw ContractError("train: steps must be >= 1");
  if (options.batch_size < 1)
    throw ContractError("train: batch_size must be >= 1");
  validate(adam_cfg);
  model::validate(model_cfg);

  model::ModelConfig cfg = model_cfg;
  if (!options.adversarial) cfg.grl.lambda = 0.0;

  std::vector<double> flat =
      init ? model::flatten(*init)
           : model::flatten(model::init_model(model_cfg, options.seed));
  if (flat.size() != model::param_count(model_cfg))
    throw ContractError("train: initial parameters do not match the config");

  AdamState state;
  SplitMix64 batch_rng(options.seed);
  TrainLog log;
  log.records.reserve(static_cast<std::size_t>(options.steps));
  const double inv_batch = 1.0 / static_cast<double>(options.batch_size);

  for (int step = 1; step <= options.steps; ++step) {
    model::ModelParams params = model::unflatten(cfg, flat);
    Tape tape;
    model::ModelParams bound = model::watch_params(tape, params);

    Tensor total_sum, l1_sum, ams_sum;
    for (int b = 0; b < options.batch_size; ++b) {
      const auto idx = static_cast<std::size_t>(
          batch_rng.uniform_index(corpus.size()));
      const data::Utterance& utt = corpus[idx];
      model::EncodeResult enc =
          model::encode_text(bound, utt.symbols, utt.speaker);
      model::ForwardOutput out = model::decode_teacher_forced(
          bound, cfg, utt.frames, enc, utt.speaker, options.train_window);
      model::LossParts parts =
          model::joint_loss(bound, cfg, out, utt.frames, utt.speaker);
      total_sum = b == 0 ? parts.total : ops::add(total_sum, parts.total);
      l1_sum = b == 0 ? parts.l1 : ops::add(l1_sum, parts.l1);
      ams_sum = b == 0 ? parts.ams : ops::add(ams_sum, parts.ams);
    }
    Tensor total_mean = ops::scale(total_sum, inv_batch);
    Tensor l1_mean = ops::scale(l1_sum, inv_batch);
    Tensor ams_mean = ops::scale(ams_sum, inv_batch);

    if (!std::isfinite(total_mean.value()))
      throw NumericError("training diverged at step " + std::to_string(step) +
                         ": loss is not finite");

    std::vector<double> grads;
    double pre_clip_norm = 0.0;
    if (options.clip_scope == ClipScope::kAll) {
      grads = model::gather_gradients(tape.backward(total_mean), bound);
      pre_clip_norm = l2_norm(grads);
      grads = clip_gradients(std::move(grads), adam_cfg.clip_norm);
    } else {
      // Clip only the gradient the classifier sends into the rest of the
      // model (everything upstream of its own head), so the head keeps
      // adapting at full speed while the encoder's adversarial movement is
      // rate-limited.
      std::vector<double> g_l1 =
          model::gather_gradients(tape.backward(l1_mean), bound);
      std::vector<double> g_ams =
          model::gather_gradients(tape.backward(ams_mean), bound);
      const std::size_t head_size = bound.classifier_hidden.size() +
                                    bound.classifier_output.size();
      const std::size_t head_offset = g_ams.size() - head_size;

      std::vector<double> combined(g_l1.size());
      for (std::size_t i = 0; i < combined.size(); ++i)
        combined[i] = g_l1[i] + g_ams[i];
      pre_clip_norm = l2_norm(combined);

      std::vector<double> upstream(g_ams.begin(),
                                   g_ams.begin() +
                                       static_cast<std::ptrdiff_t>(head_offset));
      upstream = clip_gradients(std::move(upstream), adam_cfg.clip_norm);
      grads.resize(g_l1.size());
      for (std::size_t i = 0; i < head_offset; ++i)
        grads[i] = g_l1[i] + upstream[i];
      for (std::size_t i = head_offset; i < grads.size(); ++i)
        grads[i] = g_l1[i] + g_ams[i];
      for (double g : grads)
        if (!std::isfinite(g))
          throw NumericError("training diverged at step " +
                             std::to_string(step) +
                             ": gradient is not finite");
    }

    log.records.push_back({step, noam_lr(step, adam_cfg), l1_mean.value(),
                           ams_mean.value(), pre_clip_norm});
    adam_step(flat, grads, state, adam_cfg);
  }

  return {model::unflatten(model_cfg, flat), state, std::move(log)};
}

std::string TrainLog::to_csv() const {
  std::string out = "step,lr,l1,ams,grad_norm\n";
  for (const TrainRecord& r : records) {
    out += std::to_string(r.step);
    out += ',';
    out += format_double(r.lr);
    out += ',';
    out += format_double(r.l1);
    out += ',';
    out += format_double(r.ams);
    out += ',';
    out += format_double(r.grad_norm);
    out += '\n';
  }
  return out;
}

void TrainLog::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << to_csv();
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

void save_checkpoint(const model::ModelParams& params,
                     const model::ModelConfig& cfg, const AdamState& state,
                     const std::filesystem::path& path) {
  const std::vector<model::ParamSpec> layout = model::param_layout(cfg);
  const std::size_t n_params = model::param_count(cfg);
  if (!state.first_moment.empty() &&
      (state.first_moment.size() != n_params ||
       state.second_moment.size() != n_params))
    throw ContractError("checkpoint: optimizer state does not match params");

  std::ostringstream manifest;
  manifest << kCheckpointMagic << '\n';
  manifest << "vocab_size=" << cfg.vocab_size << '\n';
  manifest << "text_emb_dim=" << cfg.text_emb_dim << '\n';
  manifest << "speaker_emb_dim=" << cfg.speaker_emb_dim << '\n';
  manifest << "frame_dim=" << cfg.frame_dim << '\n';
  manifest << "num_speakers=" << cfg.num_speakers << '\n';
  manifest << "enc_layers=" << cfg.enc_layers << '\n';
  manifest << "dec_layers=" << cfg.dec_layers << '\n';
  manifest << "conv_width=" << cfg.conv_width << '\n';
  manifest << "classifier_hidden=" << cfg.classifier_hidden << '\n';
  manifest << "window_back=" << cfg.window.back << '\n';
  manifest << "window_forward=" << cfg.window.forward << '\n';
  manifest << "grl_lambda=" << format_double(cfg.grl.lambda) << '\n';
  manifest << "ams_scale=" << format_double(cfg.ams.scale) << '\n';
  manifest << "ams_margin=" << format_double(cfg.ams.margin) << '\n';
  manifest << "adam_step=" << state.step << '\n';
  manifest << "arrays=" << layout.size() + 2 << '\n';
  for (const model::ParamSpec& spec : layout) {
    manifest << spec.name;
    for (std::size_t d : spec.shape) manifest << ' ' << d;
    manifest << '\n';
  }
  manifest << "adam_first_moment " << n_params << '\n';
  manifest << "adam_second_moment " << n_params << '\n';
  manifest << "end\n";

  std::string payload;
  payload.reserve(3 * n_params * 8);
  for (double v : model::flatten(params)) append_le(payload, v);
  if (state.first_moment.empty()) {
    for (std::size_t i = 0; i < 2 * n_params; ++i) append_le(payload, 0.0);
  } else {
    for (double v : state.first_moment) append_le(payload, v);
    for (double v : state.second_moment) append_le(payload, v);
  }

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << manifest.str() << payload;
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::ostringstream buf;
  buf << in.rdbuf();
  const std::string blob = buf.str();
  const std::string source = path.string();

  std::size_t pos = 0;
  auto next_line = [&]() -> std::string {
    const auto nl = blob.find('\n', pos);
    if (nl == std::string::npos)
      throw CorruptionError(source + ": truncated manifest");
    std::string line = blob.substr(pos, nl - pos);
    pos = nl + 1;
    return line;
  };

  if (next_line() != kCheckpointMagic)
    throw CorruptionError(source + ": not an advtts checkpoint");

  KvDoc doc;
  std::string line;
  while (true) {
    line = next_line();
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw CorruptionError(source + ": malformed manifest line '" + line +
                            "'");
    const std::string key = line.substr(0, eq);
    doc.set(key, line.substr(eq + 1));
    if (key == "arrays") break;
  }

  model::ModelConfig cfg;
  cfg.vocab_size = static_cast<int>(doc.get_int("vocab_size", source));
  cfg.text_emb_dim = static_cast<int>(doc.get_int("text_emb_dim", source));
  cfg.speaker_emb_dim =
      static_cast<int>(doc.get_int("speaker_emb_dim", source));
  cfg.frame_dim = static_cast<int>(doc.get_int("frame_dim", source));
  cfg.num_speakers = static_cast<int>(doc.get_int("num_speakers", source));
  cfg.enc_layers = static_cast<int>(doc.get_int("enc_layers", source));
  cfg.dec_layers = static_cast<int>(doc.get_int("dec_layers", source));
  cfg.conv_width = static_cast<int>(doc.get_int("conv_width", source));
  cfg.classifier_hidden =
      static_cast<int>(doc.get_int("classifier_hidden", source));
  cfg.window.back = static_cast<int>(doc.get_int("window_back", source));
  cfg.window.forward = static_cast<int>(doc.get_int("window_forward", source));
  cfg.grl.lambda = doc.get_double("grl_lambda", source);
  cfg.ams.scale = doc.get_double("ams_scale", source);
  cfg.ams.margin = doc.get_double("ams_margin", source);
  cfg.ams.num_classes = cfg.num_speakers;
  model::validate(cfg);

  const auto n_arrays = static_cast<std::size_t>(doc.get_int("arrays", source));
  const std::vector<model::ParamSpec> layout = model::param_layout(cfg);
  if (n_arrays != layout.size() + 2)
    throw CorruptionError(source + ": expected " +
                          std::to_string(layout.size() + 2) +
                          " arrays for this config, manifest declares " +
                          std::to_string(n_arrays));

  const std::size_t n_params = model::param_count(cfg);
  std::size_t declared_total = 0;
  for (std::size_t a = 0; a < n_arrays; ++a) {
    line = next_line();
    std::istringstream fields(line);
    std::string name;
    fields >> name;
    std::vector<std::size_t> dims;
    std::size_t d = 0;
    while (fields >> d) dims.push_back(d);
    std::size_t count = dims.empty() ? 0 : 1;
    for (std::size_t dim : dims) count *= dim;
    declared_total += count;

    if (a < layout.size()) {
      if (name != layout[a].name || dims != layout[a].shape)
        throw CorruptionError(source + ": array " + std::to_string(a) +
                              " is '" + name +
                              "', expected '" + layout[a].name + "'");
    } else {
      const char* expected =
          a == layout.size() ? "adam_first_moment" : "adam_second_moment";
      if (name != expected || dims != std::vector<std::size_t>{n_params})
        throw CorruptionError(source + ": malformed optimizer array '" + name +
                              "'");
    }
  }
  if (next_line() != "end")
    throw CorruptionError(source + ": manifest missing end marker");

  const std::size_t expected_bytes = declared_total * 8;
  const std::size_t actual_bytes = blob.size() - pos;
  if (actual_bytes != expected_bytes)
    throw CorruptionError(source + ": payload length mismatch, expected " +
                          std::to_string(expected_bytes) + " bytes, got " +
                          std::to_string(actual_bytes));

  std::vector<double> values(declared_total);
  for (std::size_t i = 0; i < declared_total; ++i)
    values[i] = read_le(blob.data() + pos + i * 8);

  Checkpoint ckpt;
  ckpt.config = cfg;
  ckpt.params = model::unflatten(
      cfg, std::span<const double>(values.data(), n_params));
  ckpt.state.step = static_cast<int>(doc.get_int("adam_step", source));
  ckpt.state.first_moment.assign(values.begin() + static_cast<std::ptrdiff_t>(n_params),
                                 values.begin() + static_cast<std::ptrdiff_t>(2 * n_params));
  ckpt.state.second_moment.assign(
      values.begin() + static_cast<std::ptrdiff_t>(2 * n_params), values.end());
  return ckpt;
}

}  // namespace advtts::train
