// Copyright 2026 The advtts Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef ADVTTS_MODEL_HPP
#define ADVTTS_MODEL_HPP

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "advtts/nnblocks.hpp"
#include "advtts/tape.hpp"
#include "advtts/tensor.hpp"

namespace advtts::model {

struct ModelConfig {
  int vocab_size = 0;
  int text_emb_dim = 32;  // must be even (positional encoding)
  int speaker_emb_dim = 16;
  int frame_dim = 0;
  int num_speakers = 0;
  int enc_layers = 2;
  int dec_layers = 2;
  int conv_width = 5;  // odd (encoder blocks use same padding)
  int classifier_hidden = 32;
  nn::AttentionWindow window;
  nn::GrlConfig grl;
  nn::AmSoftmaxConfig ams{40.0, 0.6, 0};  // num_classes filled from speakers
};

void validate(const ModelConfig& cfg);

// All learnable arrays. The canonical flattening order -- the order used by
// initialization, checkpoints, flatten/unflatten and gradient gathering -- is
// the declaration order below, encoder blocks before decoder blocks, kernel
// before speaker projection within a block.
struct ModelParams {
  Tensor text_embedding;     // vocab x text_emb
  Tensor speaker_embedding;  // speakers x spk_emb
  std::vector<nn::ConvBlockParams> encoder_blocks;
  std::vector<nn::ConvBlockParams> decoder_blocks;
  Tensor key_proj;           // text_emb x text_emb
  Tensor value_proj;         // text_emb x text_emb
  Tensor decoder_pre;        // frame x text_emb
  Tensor frame_out;          // text_emb x frame
  Tensor classifier_hidden;  // text_emb x hidden
  Tensor classifier_output;  // speakers x hidden, rows are class weights
};

struct ParamSpec {
  std::string name;
  std::vector<std::size_t> shape;
  std::size_t fan_in;
};

// Canonical parameter list: names, shapes, and the fan-in that scales the
// uniform(-sqrt(1/fan_in), +sqrt(1/fan_in)) initialization of each array.
std::vector<ParamSpec> param_layout(const ModelConfig& cfg);
std::size_t param_count(const ModelConfig& cfg);

// Parameter tensors in canonical order.
std::vector<Tensor*> param_ptrs(ModelParams& params);
std::vector<const Tensor*> param_ptrs(const ModelParams& params);

ModelParams init_model(const ModelConfig& cfg, std::uint64_t seed);

std::vector<double> flatten(const ModelParams& params);
ModelParams unflatten(const ModelConfig& cfg, std::span<const double> flat);

// Copy of `params` with every tensor registered on `tape`, canonical order.
ModelParams watch_params(Tape& tape, const ModelParams& params);
// Gradients of the watched copy as one flat vector (zeros where a parameter
// did not receive a gradient).
std::vector<double> gather_gradients(const GradStore& grads,
                                     const ModelParams& bound);

struct EncodeResult {
  Tensor keys;            // T_enc x E
  Tensor values;          // T_enc x E
  Tensor text_embedding;  // T_enc x E (e_c)
};

struct ForwardOutput {
  Tensor predicted_frames;    // T_dec x frame
  Tensor alignment;           // T_dec x T_enc
  Tensor text_embedding;      // T_enc x E
  Tensor speaker_logits;      // T_enc x speakers
  Tensor classifier_features; // T_enc x hidden, input to the angular loss
};

// Conditioned convolutional encoder: returns attention keys/values and the
// text embedding. Keys project e_c; values project e_c plus the positional
// encoding.
EncodeResult encode_text(const ModelParams& params,
                         std::span<const int> symbols, int speaker_id);

// Per-timestep speaker logits of the adversarial classifier head applied to
// the text embedding through the reversal layer.
Tensor classify_speaker(const ModelParams& params, const Tensor& text_embedding,
                        const nn::GrlConfig& grl);

// Teacher-forced decode: inputs are the target frames shifted right by one
// (first input is a zero frame). Attention is unmasked unless `windowed`,
// which applies the inference window with anchors derived sequentially from
// the forward scores.
ForwardOutput decode_teacher_forced(const ModelParams& params,
                                    const ModelConfig& cfg,
                                    const Tensor& target_frames,
                                    const EncodeResult& enc, int speaker_id,
                                    bool windowed = false);

// Autoregressive synthesis: each predicted frame feeds back as the next
// decoder input; attention is restricted to the window around the previously
// attended position (step 0 anchors at position 0). Runs tape-free given
// plain params.
ForwardOutput infer_autoregressive(const ModelParams& params,
                                   const ModelConfig& cfg,
                                   std::span<const int> symbols,
                                   int speaker_id, int num_frames);

struct LossParts {
  Tensor total;
  Tensor l1;
  Tensor ams;
};

// total = l1(predicted, target) + am_softmax(classifier features); the
// adversarial sign lives entirely in the reversal layer.
LossParts joint_loss(const ModelParams& params, const ModelConfig& cfg,
                     const ForwardOutput& out, const Tensor& target_frames,
                     int speaker_id);

}  // namespace advtts::model

#endif  // ADVTTS_MODEL_HPP
