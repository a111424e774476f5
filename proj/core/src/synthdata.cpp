// Copyright 2026 The advtts Authors
// SPDX-License-Identifier: Apache-2.0

#include "advtts/synthdata.hpp"

#include <array>
#include <string>

#include "advtts/errors.hpp"
#include "advtts/kvfile.hpp"
#include "advtts/prng.hpp"

namespace advtts::data {

namespace {

constexpr std::uint64_t kStyleSeedStep = 0x9E37ull;
constexpr std::uint64_t kUtteranceSeedStep = 0xC0FFEEull;

constexpr std::array<const char*, 10> kSpecKeys = {
    "vocab",   "frame_dim",  "frames_per_symbol", "speakers", "utterances",
    "len_min", "len_max",    "style",             "noise",    "seed"};

}  // namespace

void validate(const CorpusSpec& spec) {
  auto positive = [](int v, const char* what) {
    if (v < 1)
      throw ConfigError(std::string(what) + " must be positive, got " +
                        std::to_string(v));
  };
  positive(spec.vocab, "vocab");
  positive(spec.frame_dim, "frame_dim");
  positive(spec.frames_per_symbol, "frames_per_symbol");
  positive(spec.speakers, "speakers");
  positive(spec.utterances, "utterances");
  positive(spec.len_min, "len_min");
  if (spec.len_max < spec.len_min)
    throw ConfigError("len_max " + std::to_string(spec.len_max) +
                      " < len_min " + std::to_string(spec.len_min));
  if (!(spec.style >= 0.0)) throw ConfigError("style must be nonnegative");
  if (!(spec.noise >= 0.0)) throw ConfigError("noise must be nonnegative");
}

World build_world(const CorpusSpec& spec) {
  validate(spec);
  const auto V = static_cast<std::size_t>(spec.vocab);
  const auto D = static_cast<std::size_t>(spec.frame_dim);

  SplitMix64 rng(spec.seed);
  std::vector<double> templates(V * D);
  for (double& v : templates) v = rng.gaussian();

  World world{Tensor({V, D}, std::move(templates)), {}};
  world.styles.reserve(static_cast<std::size_t>(spec.speakers));
  for (int k = 0; k < spec.speakers; ++k) {
    SplitMix64 srng(spec.seed ^
                    (static_cast<std::uint64_t>(k + 1) * kStyleSeedStep));
    std::vector<double> a(D * D);
    for (std::size_t i = 0; i < D; ++i)
      for (std::size_t j = 0; j < D; ++j)
        a[i * D + j] = (i == j ? 1.0 : 0.0) + spec.style * srng.gaussian();
    std::vector<double> b(D);
    for (double& v : b) v = spec.style * srng.gaussian();
    world.styles.push_back(
        {Tensor({D, D}, std::move(a)), Tensor({1, D}, std::move(b))});
  }
  return world;
}

Tensor render_utterance(const World& world, std::span<const int> symbols,
                        int speaker, const CorpusSpec& spec,
                        std::uint64_t utt_seed) {
  if (symbols.empty())
    throw ContractError("render_utterance: empty symbol sequence");
  if (speaker < 0 || speaker >= static_cast<int>(world.styles.size()))
    throw ContractError("render_utterance: speaker " +
                        std::to_string(speaker) + " out of range");
  const auto D = static_cast<std::size_t>(spec.frame_dim);
  const auto r = static_cast<std::size_t>(spec.frames_per_symbol);
  const SpeakerStyle& style = world.styles[static_cast<std::size_t>(speaker)];

  SplitMix64 rng(utt_seed);
  std::vector<double> frames(symbols.size() * r * D);
  std::size_t row = 0;
  for (int symbol : symbols) {
    if (symbol < 0 || symbol >= static_cast<int>(world.templates.rows()))
      throw ContractError("render_utterance: symbol " +
                          std::to_string(symbol) + " out of range");
    // base = A_k * template[v] + b_k
    std::vector<double> base(D, 0.0);
    for (std::size_t i = 0; i < D; ++i) {
      double acc = style.bias.at(0, i);
      for (std::size_t j = 0; j < D; ++j)
        acc += style.transform.at(i, j) *
               world.templates.at(static_cast<std::size_t>(symbol), j);
      base[i] = acc;
    }
    for (std::size_t rep = 0; rep < r; ++rep, ++row)
      for (std::size_t i = 0; i < D; ++i)
        frames[row * D + i] = base[i] + spec.noise * rng.gaussian();
  }
  return Tensor({symbols.size() * r, D}, std::move(frames));
}

std::vector<Utterance> gen_corpus(const CorpusSpec& spec) {
  validate(spec);
  const World world = build_world(spec);
  std::vector<Utterance> corpus;
  corpus.reserve(static_cast<std::size_t>(spec.utterances));
  for (int i = 0; i < spec.utterances; ++i) {
    const std::uint64_t utt_seed =
        spec.seed ^ (static_cast<std::uint64_t>(i + 1) * kUtteranceSeedStep);
    SplitMix64 meta(utt_seed);
    const int span = spec.len_max - spec.len_min + 1;
    const int length =
        spec.len_min +
        static_cast<int>(meta.uniform_index(static_cast<std::uint64_t>(span)));
    std::vector<int> symbols(static_cast<std::size_t>(length));
    for (int& s : symbols)
      s = static_cast<int>(
          meta.uniform_index(static_cast<std::uint64_t>(spec.vocab)));

    Utterance utt;
    utt.id = i;
    utt.speaker = i % spec.speakers;
    utt.frames = render_utterance(world, symbols, utt.speaker, spec, utt_seed);
    utt.symbols = std::move(symbols);
    corpus.push_back(std::move(utt));
  }
  return corpus;
}

void save_corpus(const CorpusSpec& spec, const std::filesystem::path& path) {
  validate(spec);
  KvDoc doc;
  doc.set_int("vocab", spec.vocab);
  doc.set_int("frame_dim", spec.frame_dim);
  doc.set_int("frames_per_symbol", spec.frames_per_symbol);
  doc.set_int("speakers", spec.speakers);
  doc.set_int("utterances", spec.utterances);
  doc.set_int("len_min", spec.len_min);
  doc.set_int("len_max", spec.len_max);
  doc.set_double("style", spec.style);
  doc.set_double("noise", spec.noise);
  doc.set_u64("seed", spec.seed);
  doc.write_file(path);
}

CorpusSpec load_corpus(const std::filesystem::path& path) {
  const KvDoc doc = KvDoc::parse_file(path);
  const std::string source = path.string();
  for (const auto& [key, value] : doc.entries()) {
    bool known = false;
    for (const char* k : kSpecKeys) known |= key == k;
    if (!known)
      throw ParseError(source + ": unknown key '" + key + "'");
  }
  CorpusSpec spec;
  spec.vocab = static_cast<int>(doc.get_int("vocab", source));
  spec.frame_dim = static_cast<int>(doc.get_int("frame_dim", source));
  spec.frames_per_symbol =
      static_cast<int>(doc.get_int("frames_per_symbol", source));
  spec.speakers = static_cast<int>(doc.get_int("speakers", source));
  spec.utterances = static_cast<int>(doc.get_int("utterances", source));
  spec.len_min = static_cast<int>(doc.get_int("len_min", source));
  spec.len_max = static_cast<int>(doc.get_int("len_max", source));
  spec.style = doc.get_double("style", source);
  spec.noise = doc.get_double("noise", source);
  spec.seed = doc.get_u64("seed", source);
  validate(spec);
  return spec;
}

}  // namespace advtts::data
