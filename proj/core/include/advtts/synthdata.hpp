// Copyright 2026 The advtts Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef ADVTTS_SYNTHDATA_HPP
#define ADVTTS_SYNTHDATA_HPP

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "advtts/tensor.hpp"

namespace advtts::data {

// Deterministic multi-speaker corpus: shared symbol templates rendered
// through per-speaker affine styles, so speaker identity and symbol content
// are genuinely entangled in the frames. Everything is a pure function of
// this spec; corpora are stored as the spec alone and regenerated on load.
struct CorpusSpec {
  int vocab = 12;
  int frame_dim = 16;
  int frames_per_symbol = 4;
  int speakers = 8;
  int utterances = 2000;
  int len_min = 4;
  int len_max = 10;
  double style = 0.5;      // sigma of the per-speaker style perturbation
  double noise = 0.05;     // per-frame gaussian noise
  std::uint64_t seed = 42;
};

void validate(const CorpusSpec& spec);

struct SpeakerStyle {
  Tensor transform;  // D x D, identity + style * gaussian
  Tensor bias;       // 1 x D
};

struct World {
  Tensor templates;  // V x D
  std::vector<SpeakerStyle> styles;
};

struct Utterance {
  int id = 0;
  int speaker = 0;
  std::vector<int> symbols;
  Tensor frames;  // (frames_per_symbol * |symbols|) x D
};

// Templates come from Prng(seed), drawn row-major, before any style. Style k
// comes from Prng(seed ^ ((k+1) * 0x9E37)): the D x D perturbation row-major,
// then the bias.
World build_world(const CorpusSpec& spec);

// Frame r*i+j = style.transform * template[symbols[i]] + style.bias, plus
// noise * gaussian per element from Prng(utt_seed), drawn frame by frame.
Tensor render_utterance(const World& world, std::span<const int> symbols,
                        int speaker, const CorpusSpec& spec,
                        std::uint64_t utt_seed);

// Utterance i: speaker i mod K, utt_seed = seed ^ ((i+1) * 0xC0FFEE); length
// and symbols are drawn from Prng(utt_seed) before the frames are rendered.
std::vector<Utterance> gen_corpus(const CorpusSpec& spec);

// Key=value text file with exactly the keys {vocab, frame_dim,
// frames_per_symbol, speakers, utterances, len_min, len_max, style, noise,
// seed}; unknown keys are rejected.
void save_corpus(const CorpusSpec& spec, const std::filesystem::path& path);
CorpusSpec load_corpus(const std::filesystem::path& path);

}  // namespace advtts::data

#endif  // ADVTTS_SYNTHDATA_HPP
