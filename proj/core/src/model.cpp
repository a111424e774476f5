// Copyright 2026 The advtts Authors
// SPDX-License-Identifier: Apache-2.0

#include "advtts/model.hpp"

#include <cmath>
#include <utility>

#include "advtts/errors.hpp"
#include "advtts/ops.hpp"
#include "advtts/prng.hpp"

namespace advtts::model {

namespace {

constexpr double kRootHalf = 0.7071067811865476;
constexpr double kMaskSentinel = -1e30;
constexpr double kFlushThreshold = 1e-300;

struct ClassifierOutput {
  Tensor features;
  Tensor logits;
};

ClassifierOutput classifier_forward(const ModelParams& params,
                                    const Tensor& text_embedding,
                                    const nn::GrlConfig& grl) {
  Tensor reversed = nn::gradient_reversal(text_embedding, grl);
  Tensor features = ops::relu(ops::matmul(reversed, params.classifier_hidden));
  Tensor logits = ops::matmul_nt(features, params.classifier_output);
  return {std::move(features), std::move(logits)};
}

Tensor speaker_row(const ModelParams& params, int speaker_id) {
  const int speakers = static_cast<int>(params.speaker_embedding.rows());
  if (speaker_id < 0 || speaker_id >= speakers)
    throw ContractError("speaker id " + std::to_string(speaker_id) +
                        " out of range [0, " + std::to_string(speakers) + ")");
  std::vector<int> id = {speaker_id};
  return ops::gather_rows(params.speaker_embedding, id);
}

}  // namespace

void validate(const ModelConfig& cfg) {
  auto positive = [](int v, const char* what) {
    if (v < 1)
      throw ConfigError(std::string(what) + " must be positive, got " +
                        std::to_string(v));
  };
  positive(cfg.vocab_size, "vocab_size");
  positive(cfg.text_emb_dim, "text_emb_dim");
  positive(cfg.speaker_emb_dim, "speaker_emb_dim");
  positive(cfg.frame_dim, "frame_dim");
  positive(cfg.num_speakers, "num_speakers");
  positive(cfg.enc_layers, "enc_layers");
  positive(cfg.dec_layers, "dec_layers");
  positive(cfg.conv_width, "conv_width");
  positive(cfg.classifier_hidden, "classifier_hidden");
  if (cfg.text_emb_dim % 2 != 0)
    throw ConfigError("text_emb_dim must be even for positional encoding");
  if (cfg.conv_width % 2 == 0)
    throw ConfigError("conv_width must be odd for same-padded encoder blocks");
  nn::validate(cfg.window);
  nn::validate(cfg.grl);
  nn::validate(cfg.ams);
  if (cfg.ams.num_classes != cfg.num_speakers)
    throw ConfigError("ams.num_classes " +
                      std::to_string(cfg.ams.num_classes) +
                      " != num_speakers " + std::to_string(cfg.num_speakers));
}

std::vector<ParamSpec> param_layout(const ModelConfig& cfg) {
  validate(cfg);
  const auto V = static_cast<std::size_t>(cfg.vocab_size);
  const auto E = static_cast<std::size_t>(cfg.text_emb_dim);
  const auto S = static_cast<std::size_t>(cfg.speaker_emb_dim);
  const auto F = static_cast<std::size_t>(cfg.frame_dim);
  const auto C = static_cast<std::size_t>(cfg.num_speakers);
  const auto H = static_cast<std::size_t>(cfg.classifier_hidden);
  const auto W = static_cast<std::size_t>(cfg.conv_width);

  std::vector<ParamSpec> layout;
  layout.push_back({"text_embedding", {V, E}, E});
  layout.push_back({"speaker_embedding", {C, S}, S});
  for (int l = 0; l < cfg.enc_layers; ++l) {
    const std::string prefix = "encoder" + std::to_string(l);
    layout.push_back({prefix + ".kernel", {W, E, E}, W * E});
    layout.push_back({prefix + ".speaker_proj", {S, E}, S});
  }
  for (int l = 0; l < cfg.dec_layers; ++l) {
    const std::string prefix = "decoder" + std::to_string(l);
    layout.push_back({prefix + ".kernel", {W, E, E}, W * E});
    layout.push_back({prefix + ".speaker_proj", {S, E}, S});
  }
  layout.push_back({"key_proj", {E, E}, E});
  layout.push_back({"value_proj", {E, E}, E});
  layout.push_back({"decoder_pre", {F, E}, F});
  layout.push_back({"frame_out", {E, F}, E});
  layout.push_back({"classifier_hidden", {E, H}, E});
  layout.push_back({"classifier_output", {C, H}, H});
  return layout;
}

std::size_t param_count(const ModelConfig& cfg) {
  std::size_t total = 0;
  for (const ParamSpec& spec : param_layout(cfg)) {
    std::size_t n = 1;
    for (std::size_t d : spec.shape) n *= d;
    total += n;
  }
  return total;
}

namespace {

// Single source of truth for assembling a ModelParams from a tensor stream
// in canonical order; init_model and unflatten both run through here.
template <typename NextTensor>
ModelParams build_params(const ModelConfig& cfg, NextTensor&& next) {
  ModelParams p;
  p.text_embedding = next();
  p.speaker_embedding = next();
  p.encoder_blocks.resize(static_cast<std::size_t>(cfg.enc_layers));
  for (auto& block : p.encoder_blocks) {
    block.kernel = next();
    block.speaker_proj = next();
  }
  p.decoder_blocks.resize(static_cast<std::size_t>(cfg.dec_layers));
  for (auto& block : p.decoder_blocks) {
    block.kernel = next();
    block.speaker_proj = next();
  }
  p.key_proj = next();
  p.value_proj = next();
  p.decoder_pre = next();
  p.frame_out = next();
  p.classifier_hidden = next();
  p.classifier_output = next();
  return p;
}

}  // namespace

std::vector<Tensor*> param_ptrs(ModelParams& params) {
  std::vector<Tensor*> ptrs = {&params.text_embedding,
                               &params.speaker_embedding};
  for (auto& block : params.encoder_blocks) {
    ptrs.push_back(&block.kernel);
    ptrs.push_back(&block.speaker_proj);
  }
  for (auto& block : params.decoder_blocks) {
    ptrs.push_back(&block.kernel);
    ptrs.push_back(&block.speaker_proj);
  }
  ptrs.push_back(&params.key_proj);
  ptrs.push_back(&params.value_proj);
  ptrs.push_back(&params.decoder_pre);
  ptrs.push_back(&params.frame_out);
  ptrs.push_back(&params.classifier_hidden);
  ptrs.push_back(&params.classifier_output);
  return ptrs;
}

std::vector<const Tensor*> param_ptrs(const ModelParams& params) {
  auto mutable_ptrs = param_ptrs(const_cast<ModelParams&>(params));
  return {mutable_ptrs.begin(), mutable_ptrs.end()};
}

ModelParams init_model(const ModelConfig& cfg, std::uint64_t seed) {
  const std::vector<ParamSpec> layout = param_layout(cfg);
  SplitMix64 rng(seed);
  std::size_t index = 0;
  return build_params(cfg, [&]() {
    const ParamSpec& spec = layout[index++];
    std::size_t n = 1;
    for (std::size_t d : spec.shape) n *= d;
    const double bound = std::sqrt(1.0 / static_cast<double>(spec.fan_in));
    std::vector<double> data(n);
    for (double& v : data) v = bound * (2.0 * rng.uniform() - 1.0);
    return Tensor(spec.shape, std::move(data));
  });
}

std::vector<double> flatten(const ModelParams& params) {
  std::vector<double> flat;
  for (const Tensor* t : param_ptrs(params))
    flat.insert(flat.end(), t->data().begin(), t->data().end());
  return flat;
}

ModelParams unflatten(const ModelConfig& cfg, std::span<const double> flat) {
  if (flat.size() != param_count(cfg))
    throw ContractError("unflatten: expected " +
                        std::to_string(param_count(cfg)) + " values, got " +
                        std::to_string(flat.size()));
  const std::vector<ParamSpec> layout = param_layout(cfg);
  std::size_t index = 0, offset = 0;
  return build_params(cfg, [&]() {
    const ParamSpec& spec = layout[index++];
    std::size_t n = 1;
    for (std::size_t d : spec.shape) n *= d;
    std::vector<double> data(
        flat.begin() + static_cast<std::ptrdiff_t>(offset),
        flat.begin() + static_cast<std::ptrdiff_t>(offset + n));
    offset += n;
    return Tensor(spec.shape, std::move(data));
  });
}

ModelParams watch_params(Tape& tape, const ModelParams& params) {
  ModelParams bound = params;
  for (Tensor* t : param_ptrs(bound)) *t = tape.watch(*t);
  return bound;
}

std::vector<double> gather_gradients(const GradStore& grads,
                                     const ModelParams& bound) {
  std::vector<double> flat;
  for (const Tensor* t : param_ptrs(bound)) {
    Tensor g = grads.at_or_zeros(*t);
    flat.insert(flat.end(), g.data().begin(), g.data().end());
  }
  return flat;
}

EncodeResult encode_text(const ModelParams& params,
                         std::span<const int> symbols, int speaker_id) {
  if (symbols.empty())
    throw ContractError("encode_text: empty symbol sequence");
  Tensor spk = speaker_row(params, speaker_id);
  Tensor x = ops::gather_rows(params.text_embedding, symbols);
  for (const auto& block : params.encoder_blocks)
    x = nn::conditioned_conv_block(x, spk, block, ops::ConvMode::kSame);
  Tensor keys = ops::matmul(x, params.key_proj);
  Tensor pos = nn::positional_encoding(x.rows(), x.cols());
  Tensor values = ops::matmul(ops::add(x, pos), params.value_proj);
  return {std::move(keys), std::move(values), std::move(x)};
}

Tensor classify_speaker(const ModelParams& params,
                        const Tensor& text_embedding,
                        const nn::GrlConfig& grl) {
  return classifier_forward(params, text_embedding, grl).logits;
}

ForwardOutput decode_teacher_forced(const ModelParams& params,
                                    const ModelConfig& cfg,
                                    const Tensor& target_frames,
                                    const EncodeResult& enc, int speaker_id,
                                    bool windowed) {
  const std::size_t F = params.decoder_pre.rows();
  if (target_frames.rank() != 2 || target_frames.cols() != F)
    throw ContractError("decode: target frames " + target_frames.shape_str() +
                        " do not match frame dim " + std::to_string(F));
  const std::size_t T = target_frames.rows();
  const std::size_t E = params.decoder_pre.cols();
  const std::size_t Te = enc.keys.rows();

  // Teacher forcing: input t is target frame t-1, input 0 is the zero frame.
  std::vector<double> shifted(T * F, 0.0);
  std::span<const double> pt = target_frames.data();
  for (std::size_t t = 1; t < T; ++t)
    for (std::size_t j = 0; j < F; ++j)
      shifted[t * F + j] = pt[(t - 1) * F + j];
  Tensor input({T, F}, std::move(shifted));

  Tensor spk = speaker_row(params, speaker_id);
  Tensor d = ops::add(ops::matmul(input, params.decoder_pre),
                      nn::positional_encoding(T, E));
  for (const auto& block : params.decoder_blocks)
    d = nn::conditioned_conv_block(d, spk, block, ops::ConvMode::kCausal);

  Tensor scores = ops::scale(ops::matmul_nt(d, enc.keys),
                             1.0 / std::sqrt(static_cast<double>(E)));

  Tensor weights;
  if (!windowed) {
    weights = ops::softmax_rows(scores);
  } else {
    // Anchor each row's window at the argmax of the previous masked row;
    // anchors come from forward values, the mask itself is a constant.
    std::span<const double> ps = scores.data();
    std::vector<double> mask(T * Te, kMaskSentinel);
    std::size_t prev = 0;
    for (std::size_t t = 0; t < T; ++t) {
      const auto back = static_cast<std::size_t>(cfg.window.back);
      const std::size_t lo = prev >= back ? prev - back : 0;
      const std::size_t hi = std::min(
          Te - 1, prev + static_cast<std::size_t>(cfg.window.forward));
      std::size_t best = lo;
      for (std::size_t j = lo; j <= hi; ++j) {
        mask[t * Te + j] = 0.0;
        if (ps[t * Te + j] > ps[t * Te + best]) best = j;
      }
      prev = best;
    }
    weights = ops::softmax_rows(ops::add(scores, Tensor({T, Te}, mask)));
    std::span<const double> pw = weights.data();
    std::vector<double> keep(pw.size());
    for (std::size_t i = 0; i < keep.size(); ++i)
      keep[i] = pw[i] < kFlushThreshold ? 0.0 : 1.0;
    weights = ops::mul(weights, Tensor({T, Te}, std::move(keep)));
  }

  Tensor context = ops::matmul(weights, enc.values);
  Tensor h = ops::scale(ops::add(d, context), kRootHalf);
  Tensor predicted = ops::matmul(h, params.frame_out);

  ClassifierOutput cls =
      classifier_forward(params, enc.text_embedding, cfg.grl);
  return {std::move(predicted), std::move(weights), enc.text_embedding,
          std::move(cls.logits), std::move(cls.features)};
}

ForwardOutput infer_autoregressive(const ModelParams& params,
                                   const ModelConfig& cfg,
                                   std::span<const int> symbols,
                                   int speaker_id, int num_frames) {
  if (num_frames < 1)
    throw ContractError("infer: num_frames must be >= 1, got " +
                        std::to_string(num_frames));
  EncodeResult enc = encode_text(params, symbols, speaker_id);
  const std::size_t Te = enc.keys.rows();
  const std::size_t E = params.decoder_pre.cols();
  const std::size_t F = params.decoder_pre.rows();
  const auto steps = static_cast<std::size_t>(num_frames);

  Tensor spk = speaker_row(params, speaker_id);
  std::vector<double> frames(steps * F, 0.0);
  std::vector<double> alignment(steps * Te, 0.0);
  int prev = 0;

  for (std::size_t t = 0; t < steps; ++t) {
    // Inputs seen so far: zero frame, then the frames already emitted.
    std::vector<double> in((t + 1) * F, 0.0);
    for (std::size_t s = 1; s <= t; ++s)
      for (std::size_t j = 0; j < F; ++j)
        in[s * F + j] = frames[(s - 1) * F + j];
    Tensor d = ops::add(
        ops::matmul(Tensor({t + 1, F}, std::move(in)), params.decoder_pre),
        nn::positional_encoding(t + 1, E));
    for (const auto& block : params.decoder_blocks)
      d = nn::conditioned_conv_block(d, spk, block, ops::ConvMode::kCausal);

    std::vector<double> q(d.data().end() - static_cast<std::ptrdiff_t>(E),
                          d.data().end());
    Tensor query({1, E}, std::move(q));
    nn::AttentionResult att = nn::windowed_attention(
        query, enc.keys, enc.values, prev, cfg.window, true);

    Tensor h = ops::scale(ops::add(query, att.context), kRootHalf);
    Tensor frame = ops::matmul(h, params.frame_out);
    for (std::size_t j = 0; j < F; ++j) frames[t * F + j] = frame.at(0, j);
    for (std::size_t j = 0; j < Te; ++j)
      alignment[t * Te + j] = att.weights.at(0, j);
    prev = static_cast<int>(nn::argmax_row(att.weights));
  }

  ClassifierOutput cls =
      classifier_forward(params, enc.text_embedding, cfg.grl);
  return {Tensor({steps, F}, std::move(frames)),
          Tensor({steps, Te}, std::move(alignment)), enc.text_embedding,
          std::move(cls.logits), std::move(cls.features)};
}

LossParts joint_loss(const ModelParams& params, const ModelConfig& cfg,
                     const ForwardOutput& out, const Tensor& target_frames,
                     int speaker_id) {
  Tensor l1 = nn::l1_loss(out.predicted_frames, target_frames);
  std::vector<int> labels(out.text_embedding.rows(), speaker_id);
  Tensor ams = nn::am_softmax_loss(out.classifier_features,
                                   params.classifier_output, labels, cfg.ams);
  Tensor total = ops::add(l1, ams);
  return {std::move(total), std::move(l1), std::move(ams)};
}

}  // namespace advtts::model
