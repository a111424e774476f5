// Copyright 2026 The advtts Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <vector>

#include "advtts/errors.hpp"
#include "advtts/model.hpp"
#include "advtts/ops.hpp"
#include "doctest.h"
#include "support/test_utils.hpp"

using advtts::ConfigError;
using advtts::ContractError;
using advtts::GradStore;
using advtts::Tape;
using advtts::Tensor;
namespace model = advtts::model;
namespace nn = advtts::nn;
namespace ops = advtts::ops;
using testutil::DataGen;

namespace {

model::ModelConfig tiny_config() {
  model::ModelConfig cfg;
  cfg.vocab_size = 8;
  cfg.text_emb_dim = 8;
  cfg.speaker_emb_dim = 4;
  cfg.frame_dim = 6;
  cfg.num_speakers = 4;
  cfg.enc_layers = 1;
  cfg.dec_layers = 1;
  cfg.conv_width = 3;
  cfg.classifier_hidden = 8;
  cfg.ams.num_classes = 4;
  return cfg;
}

Tensor random_frames(DataGen& gen, std::size_t steps, std::size_t dim) {
  return gen.tensor({steps, dim}, -1.0, 1.0);
}

}  // namespace

TEST_CASE("init_model is deterministic and seed-sensitive") {
  model::ModelConfig cfg = tiny_config();
  model::ModelParams a = model::init_model(cfg, 123);
  model::ModelParams b = model::init_model(cfg, 123);
  CHECK(model::flatten(a) == model::flatten(b));

  model::ModelParams c = model::init_model(cfg, 124);
  CHECK(model::flatten(a) != model::flatten(c));
}

TEST_CASE("parameter count matches the closed form") {
  model::ModelConfig cfg = tiny_config();
  cfg.vocab_size = 12;
  // V*E + C*S + layers*(W*E*E + S*E) + 2*E*E + F*E + E*F + E*H + C*H
  const std::size_t V = 12, E = 8, S = 4, F = 6, C = 4, H = 8, W = 3;
  const std::size_t expected = V * E + C * S + 1 * (W * E * E + S * E) +
                               1 * (W * E * E + S * E) + E * E + E * E +
                               F * E + E * F + E * H + C * H;
  CHECK(expected == 880);
  CHECK(model::param_count(cfg) == expected);
  CHECK(model::flatten(model::init_model(cfg, 1)).size() == expected);

  // Layout shapes line up with the assembled struct, in order.
  model::ModelParams params = model::init_model(cfg, 1);
  auto layout = model::param_layout(cfg);
  auto ptrs = model::param_ptrs(params);
  REQUIRE(layout.size() == ptrs.size());
  for (std::size_t i = 0; i < layout.size(); ++i)
    CHECK(layout[i].shape == ptrs[i]->shape());
}

TEST_CASE("flatten and unflatten round trip") {
  model::ModelConfig cfg = tiny_config();
  model::ModelParams params = model::init_model(cfg, 9);
  std::vector<double> flat = model::flatten(params);
  model::ModelParams back = model::unflatten(cfg, flat);
  CHECK(model::flatten(back) == flat);
  CHECK_THROWS_AS(model::unflatten(cfg, std::vector<double>(3, 0.0)),
                  ContractError);
}

TEST_CASE("config validation") {
  model::ModelConfig cfg = tiny_config();
  cfg.text_emb_dim = 7;
  CHECK_THROWS_AS(model::validate(cfg), ConfigError);
  cfg = tiny_config();
  cfg.conv_width = 4;
  CHECK_THROWS_AS(model::validate(cfg), ConfigError);
  cfg = tiny_config();
  cfg.ams.num_classes = 5;
  CHECK_THROWS_AS(model::validate(cfg), ConfigError);
  cfg = tiny_config();
  cfg.vocab_size = 0;
  CHECK_THROWS_AS(model::validate(cfg), ConfigError);
}

TEST_CASE("encode_text shapes and sensitivity") {
  model::ModelConfig cfg = tiny_config();
  model::ModelParams params = model::init_model(cfg, 5);

  std::vector<int> one = {3};
  model::EncodeResult res = model::encode_text(params, one, 0);
  CHECK(res.text_embedding.shape() ==
        std::vector<std::size_t>{1, static_cast<std::size_t>(cfg.text_emb_dim)});

  std::vector<int> ab = {1, 2, 5};
  std::vector<int> ba = {2, 1, 5};
  Tensor ea = model::encode_text(params, ab, 0).text_embedding;
  Tensor eb = model::encode_text(params, ba, 0).text_embedding;
  CHECK_FALSE(testutil::bitwise_equal(ea, eb));

  std::vector<int> bad = {99};
  CHECK_THROWS_AS(model::encode_text(params, bad, 0), ContractError);
  CHECK_THROWS_AS(model::encode_text(params, ab, 7), ContractError);
  CHECK_THROWS_AS(model::encode_text(params, std::vector<int>{}, 0),
                  ContractError);
}

TEST_CASE("zeroed speaker projections make e_c speaker-independent") {
  model::ModelConfig cfg = tiny_config();
  model::ModelParams params = model::init_model(cfg, 5);
  for (auto& block : params.encoder_blocks)
    block.speaker_proj = Tensor::zeros(block.speaker_proj.shape());

  std::vector<int> symbols = {1, 2, 3};
  Tensor e0 = model::encode_text(params, symbols, 0).text_embedding;
  Tensor e1 = model::encode_text(params, symbols, 1).text_embedding;
  CHECK(testutil::bitwise_equal(e0, e1));

  // With the projection restored, speakers separate.
  model::ModelParams fresh = model::init_model(cfg, 5);
  Tensor f0 = model::encode_text(fresh, symbols, 0).text_embedding;
  Tensor f1 = model::encode_text(fresh, symbols, 1).text_embedding;
  CHECK_FALSE(testutil::bitwise_equal(f0, f1));
}

TEST_CASE("speaker conditioning reaches every block") {
  model::ModelConfig cfg = tiny_config();
  cfg.enc_layers = 2;
  cfg.dec_layers = 2;
  model::ModelParams params = model::init_model(cfg, 31);
  DataGen gen(32);
  std::vector<int> symbols = {0, 3, 6};
  Tensor targets = random_frames(gen, 5, 6);

  auto run = [&](const model::ModelParams& p) {
    model::EncodeResult enc = model::encode_text(p, symbols, 2);
    return model::decode_teacher_forced(p, cfg, targets, enc, 2)
        .predicted_frames;
  };
  Tensor base = run(params);

  for (std::size_t which = 0; which < 4; ++which) {
    model::ModelParams mutated = params;
    auto& blocks =
        which < 2 ? mutated.encoder_blocks : mutated.decoder_blocks;
    auto& block = blocks[which % 2];
    block.speaker_proj = Tensor::zeros(block.speaker_proj.shape());
    Tensor out = run(mutated);
    CHECK_FALSE(testutil::bitwise_equal(base, out));
  }
}

TEST_CASE("classifier logits shape and lambda=0 cuts encoder gradients") {
  model::ModelConfig cfg = tiny_config();
  cfg.grl.lambda = 0.0;
  model::ModelParams params = model::init_model(cfg, 6);
  DataGen gen(66);
  std::vector<int> symbols = {0, 1, 2, 3, 4};
  Tensor targets = random_frames(gen, 10, 6);

  Tape tape;
  model::ModelParams bound = model::watch_params(tape, params);
  model::EncodeResult enc = model::encode_text(bound, symbols, 1);

  Tensor logits = model::classify_speaker(bound, enc.text_embedding, cfg.grl);
  CHECK(logits.shape() == std::vector<std::size_t>{5, 4});

  model::ForwardOutput out =
      model::decode_teacher_forced(bound, cfg, targets, enc, 1);
  model::LossParts parts = model::joint_loss(bound, cfg, out, targets, 1);
  GradStore grads = tape.backward(parts.ams);

  // The classifier head still learns...
  Tensor head = grads.at_or_zeros(bound.classifier_hidden);
  bool head_nonzero = false;
  for (double v : head.data()) head_nonzero |= v != 0.0;
  CHECK(head_nonzero);

  // ...but nothing leaks into the encoder with lambda = 0.
  for (const auto& block : bound.encoder_blocks) {
    for (double v : grads.at_or_zeros(block.kernel).data()) CHECK(v == 0.0);
    for (double v : grads.at_or_zeros(block.speaker_proj).data())
      CHECK(v == 0.0);
  }
  for (double v : grads.at_or_zeros(bound.text_embedding).data())
    CHECK(v == 0.0);
}

TEST_CASE("lambda=1 classifier gradients are exact negations of the no-GRL path") {
  model::ModelConfig cfg = tiny_config();
  cfg.grl.lambda = 1.0;
  model::ModelParams params = model::init_model(cfg, 7);
  std::vector<int> symbols = {2, 4, 6};
  std::vector<int> labels(symbols.size(), 3);

  // Adversarial path through the model's reversal layer.
  Tape tape_a;
  model::ModelParams bound_a = model::watch_params(tape_a, params);
  model::EncodeResult enc_a = model::encode_text(bound_a, symbols, 3);
  Tensor logits_a =
      model::classify_speaker(bound_a, enc_a.text_embedding, cfg.grl);
  Tensor feats_a = ops::relu(
      ops::matmul(nn::gradient_reversal(enc_a.text_embedding, cfg.grl),
                  bound_a.classifier_hidden));
  Tensor ams_a = nn::am_softmax_loss(feats_a, bound_a.classifier_output,
                                     labels, cfg.ams);
  GradStore grads_a = tape_a.backward(ams_a);

  // Identity path: the same classifier assembled without the reversal layer.
  Tape tape_b;
  model::ModelParams bound_b = model::watch_params(tape_b, params);
  model::EncodeResult enc_b = model::encode_text(bound_b, symbols, 3);
  Tensor feats_b =
      ops::relu(ops::matmul(enc_b.text_embedding, bound_b.classifier_hidden));
  Tensor ams_b = nn::am_softmax_loss(feats_b, bound_b.classifier_output,
                                     labels, cfg.ams);
  GradStore grads_b = tape_b.backward(ams_b);

  CHECK(logits_a.shape() == std::vector<std::size_t>{3, 4});

  // Encoder-side parameters: exact negation, element by element.
  auto check_negated = [&](const Tensor& ta, const Tensor& tb) {
    Tensor ga = grads_a.at_or_zeros(ta);
    Tensor gb = grads_b.at_or_zeros(tb);
    for (std::size_t i = 0; i < ga.size(); ++i) CHECK(ga.at(i) == -gb.at(i));
  };
  check_negated(bound_a.text_embedding, bound_b.text_embedding);
  check_negated(bound_a.speaker_embedding, bound_b.speaker_embedding);
  check_negated(bound_a.encoder_blocks[0].kernel,
                bound_b.encoder_blocks[0].kernel);
  check_negated(bound_a.encoder_blocks[0].speaker_proj,
                bound_b.encoder_blocks[0].speaker_proj);

  // Classifier-head parameters: identical in both runs.
  auto check_equal = [&](const Tensor& ta, const Tensor& tb) {
    Tensor ga = grads_a.at_or_zeros(ta);
    Tensor gb = grads_b.at_or_zeros(tb);
    for (std::size_t i = 0; i < ga.size(); ++i) CHECK(ga.at(i) == gb.at(i));
  };
  check_equal(bound_a.classifier_hidden, bound_b.classifier_hidden);
  check_equal(bound_a.classifier_output, bound_b.classifier_output);
}

TEST_CASE("teacher-forced decode shapes, alignment rows, causality") {
  model::ModelConfig cfg = tiny_config();
  model::ModelParams params = model::init_model(cfg, 8);
  DataGen gen(88);
  std::vector<int> symbols = {1, 3, 5, 7};
  Tensor targets = random_frames(gen, 8, 6);

  model::EncodeResult enc = model::encode_text(params, symbols, 2);
  model::ForwardOutput out =
      model::decode_teacher_forced(params, cfg, targets, enc, 2);

  CHECK(out.predicted_frames.shape() == targets.shape());
  CHECK(out.alignment.shape() == std::vector<std::size_t>{8, 4});
  for (std::size_t i = 0; i < 8; ++i) {
    double sum = 0.0;
    for (std::size_t j = 0; j < 4; ++j) sum += out.alignment.at(i, j);
    CHECK(std::fabs(sum - 1.0) <= 1e-9);
  }

  // Perturbing target frame t leaves predictions at steps <= t untouched.
  const std::size_t t = 3;
  std::vector<double> mutated = testutil::to_vec(targets);
  for (std::size_t j = 0; j < 6; ++j) mutated[t * 6 + j] += 0.7;
  model::ForwardOutput out2 = model::decode_teacher_forced(
      params, cfg, Tensor({8, 6}, mutated), enc, 2);
  for (std::size_t s = 0; s <= t; ++s)
    for (std::size_t j = 0; j < 6; ++j)
      CHECK(out.predicted_frames.at(s, j) == out2.predicted_frames.at(s, j));
  bool later_changed = false;
  for (std::size_t s = t + 1; s < 8; ++s)
    for (std::size_t j = 0; j < 6; ++j)
      later_changed |=
          out.predicted_frames.at(s, j) != out2.predicted_frames.at(s, j);
  CHECK(later_changed);

  CHECK_THROWS_AS(model::decode_teacher_forced(
                      params, cfg, random_frames(gen, 4, 5), enc, 2),
                  ContractError);
}

TEST_CASE("autoregressive inference respects the attention window") {
  model::ModelConfig cfg = tiny_config();
  model::ModelParams params = model::init_model(cfg, 11);
  std::vector<int> symbols = {0, 1, 2, 3, 4, 5, 6, 7};
  model::ForwardOutput out =
      model::infer_autoregressive(params, cfg, symbols, 1, 16);

  CHECK(out.predicted_frames.shape() == std::vector<std::size_t>{16, 6});
  CHECK(out.alignment.shape() == std::vector<std::size_t>{16, 8});

  int prev = 0;
  for (std::size_t t = 0; t < 16; ++t) {
    const int lo = std::max(0, prev - cfg.window.back);
    const int hi = std::min(7, prev + cfg.window.forward);
    int best = lo;
    for (int j = 0; j < 8; ++j) {
      if (j < lo || j > hi) {
        CHECK(out.alignment.at(t, static_cast<std::size_t>(j)) == 0.0);
      } else if (out.alignment.at(t, static_cast<std::size_t>(j)) >
                 out.alignment.at(t, static_cast<std::size_t>(best))) {
        best = j;
      }
    }
    prev = best;
  }
}

TEST_CASE("single frame inference and step-0 agreement with teacher forcing") {
  model::ModelConfig cfg = tiny_config();
  model::ModelParams params = model::init_model(cfg, 12);
  DataGen gen(13);
  // Three encoder steps: the step-0 window [-1, 3] covers everything, so
  // windowed and dense attention coincide.
  std::vector<int> symbols = {2, 5, 7};

  model::ForwardOutput single =
      model::infer_autoregressive(params, cfg, symbols, 0, 1);
  CHECK(single.predicted_frames.rows() == 1);
  CHECK(single.alignment.rows() == 1);

  Tensor targets = random_frames(gen, 6, 6);
  model::EncodeResult enc = model::encode_text(params, symbols, 0);
  model::ForwardOutput forced =
      model::decode_teacher_forced(params, cfg, targets, enc, 0);
  for (std::size_t j = 0; j < 6; ++j)
    CHECK(std::fabs(single.predicted_frames.at(0, j) -
                    forced.predicted_frames.at(0, j)) <= 1e-12);

  CHECK_THROWS_AS(model::infer_autoregressive(params, cfg, symbols, 0, 0),
                  ContractError);
}

TEST_CASE("joint loss composition") {
  model::ModelConfig cfg = tiny_config();
  model::ModelParams params = model::init_model(cfg, 14);
  DataGen gen(15);
  std::vector<int> symbols = {1, 2, 3};
  Tensor targets = random_frames(gen, 6, 6);

  model::EncodeResult enc = model::encode_text(params, symbols, 2);
  model::ForwardOutput out =
      model::decode_teacher_forced(params, cfg, targets, enc, 2);

  model::LossParts parts = model::joint_loss(params, cfg, out, targets, 2);
  CHECK(parts.l1.value() >= 0.0);
  CHECK(parts.ams.value() >= 0.0);
  CHECK(parts.total.value() ==
        doctest::Approx(parts.l1.value() + parts.ams.value()).epsilon(1e-15));

  // Perfect prediction: feed the model's own output as target.
  model::LossParts perfect = model::joint_loss(
      params, cfg, out, out.predicted_frames.detached(), 2);
  CHECK(perfect.l1.value() == 0.0);
  CHECK(perfect.total.value() == perfect.ams.value());
}

TEST_CASE("joint loss total gradient matches finite differences") {
  model::ModelConfig cfg = tiny_config();
  model::ModelParams params = model::init_model(cfg, 16);
  DataGen gen(17);
  std::vector<int> symbols = {0, 4, 7};
  Tensor targets = random_frames(gen, 6, 6);

  auto losses_of = [&](std::span<const double> flat) {
    model::ModelParams p = model::unflatten(cfg, flat);
    model::EncodeResult enc = model::encode_text(p, symbols, 1);
    model::ForwardOutput out =
        model::decode_teacher_forced(p, cfg, targets, enc, 1);
    model::LossParts parts = model::joint_loss(p, cfg, out, targets, 1);
    return std::pair<double, double>(parts.l1.value(), parts.ams.value());
  };

  Tape tape;
  model::ModelParams bound = model::watch_params(tape, params);
  model::EncodeResult enc = model::encode_text(bound, symbols, 1);
  model::ForwardOutput out =
      model::decode_teacher_forced(bound, cfg, targets, enc, 1);
  model::LossParts parts = model::joint_loss(bound, cfg, out, targets, 1);

  GradStore total_grads = tape.backward(parts.total);
  GradStore l1_grads = tape.backward(parts.l1);
  GradStore ams_grads = tape.backward(parts.ams);
  std::vector<double> g_total = model::gather_gradients(total_grads, bound);
  std::vector<double> g_l1 = model::gather_gradients(l1_grads, bound);
  std::vector<double> g_ams = model::gather_gradients(ams_grads, bound);

  // Total gradient is the sum of the component gradients...
  for (std::size_t i = 0; i < g_total.size(); ++i)
    CHECK(std::fabs(g_total[i] - (g_l1[i] + g_ams[i])) <= 1e-12);

  // ...and matches central finite differences of the components on a
  // sampled subset. The reversal layer flips the classifier-loss gradient
  // everywhere upstream of it, so the oracle flips the ams component for
  // all but the classifier-head parameters.
  std::vector<double> flat = model::flatten(params);
  const std::size_t head_offset =
      flat.size() -
      static_cast<std::size_t>(cfg.text_emb_dim * cfg.classifier_hidden +
                               cfg.num_speakers * cfg.classifier_hidden);
  for (int rep = 0; rep < 40; ++rep) {
    const std::size_t i = gen.index(flat.size());
    const double h = 1e-5;
    const double orig = flat[i];
    flat[i] = orig + h;
    const auto [l1_p, ams_p] = losses_of(flat);
    flat[i] = orig - h;
    const auto [l1_m, ams_m] = losses_of(flat);
    flat[i] = orig;
    const double fd_l1 = (l1_p - l1_m) / (2.0 * h);
    const double fd_ams = (ams_p - ams_m) / (2.0 * h);
    const double flip = i >= head_offset ? 1.0 : -cfg.grl.lambda;
    CHECK(testutil::rel_err(g_total[i], fd_l1 + flip * fd_ams) < 1e-4);
  }
}

TEST_CASE("forward pass is deterministic") {
  model::ModelConfig cfg = tiny_config();
  model::ModelParams params = model::init_model(cfg, 20);
  DataGen gen(21);
  std::vector<int> symbols = {3, 1, 4};
  Tensor targets = random_frames(gen, 6, 6);

  auto run = [&]() {
    model::EncodeResult enc = model::encode_text(params, symbols, 1);
    return model::decode_teacher_forced(params, cfg, targets, enc, 1);
  };
  model::ForwardOutput a = run();
  model::ForwardOutput b = run();
  CHECK(testutil::bitwise_equal(a.predicted_frames, b.predicted_frames));
  CHECK(testutil::bitwise_equal(a.alignment, b.alignment));
  CHECK(testutil::bitwise_equal(a.text_embedding, b.text_embedding));
  CHECK(testutil::bitwise_equal(a.speaker_logits, b.speaker_logits));

  model::ForwardOutput ia =
      model::infer_autoregressive(params, cfg, symbols, 1, 9);
  model::ForwardOutput ib =
      model::infer_autoregressive(params, cfg, symbols, 1, 9);
  CHECK(testutil::bitwise_equal(ia.predicted_frames, ib.predicted_frames));
  CHECK(testutil::bitwise_equal(ia.alignment, ib.alignment));
}

TEST_CASE("windowed teacher forcing masks like inference") {
  model::ModelConfig cfg = tiny_config();
  model::ModelParams params = model::init_model(cfg, 23);
  DataGen gen(24);
  std::vector<int> symbols = {0, 1, 2, 3, 4, 5, 6, 7};
  Tensor targets = random_frames(gen, 12, 6);

  model::EncodeResult enc = model::encode_text(params, symbols, 0);
  model::ForwardOutput out = model::decode_teacher_forced(
      params, cfg, targets, enc, 0, /*windowed=*/true);

  int prev = 0;
  for (std::size_t t = 0; t < 12; ++t) {
    const int lo = std::max(0, prev - cfg.window.back);
    const int hi = std::min(7, prev + cfg.window.forward);
    double sum = 0.0;
    int best = lo;
    for (int j = 0; j < 8; ++j) {
      const double w = out.alignment.at(t, static_cast<std::size_t>(j));
      if (j < lo || j > hi) {
        CHECK(w == 0.0);
      } else {
        sum += w;
        if (w > out.alignment.at(t, static_cast<std::size_t>(best))) best = j;
      }
    }
    CHECK(std::fabs(sum - 1.0) <= 1e-12);
    prev = best;
  }
}
