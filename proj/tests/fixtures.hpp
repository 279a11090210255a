#pragma once

// Synthetic corpora and toy vocabularies shared by unit and acceptance tests.

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <filesystem>
#include <fstream>

#include "focus/corpus.hpp"
#include "focus/pipeline.hpp"
#include "oracles.hpp"

namespace fixture {

// Token ids: 0 = X, 1 = Y, 2 = Z, 3 = W, then 20 topics of 10 context tokens.
// X and Y fill the same slot in topics 0-9 with equal probability; Z and W do
// the same in topics 10-19. X/Y therefore share context statistics exactly,
// while X/Z share none.
inline constexpr std::size_t kInterchangeableVocab = 4 + 20 * 10;

inline focus::Corpus interchangeable_corpus(std::size_t sentences = 10000, std::size_t length = 20,
                                            std::uint64_t seed = 5) {
  focus::Corpus c;
  c.token_counts.assign(kInterchangeableVocab, 0);
  std::mt19937_64 rng(seed);
  for (std::size_t s = 0; s < sentences; ++s) {
    std::vector<focus::TokenId> seq;
    const auto topic = static_cast<focus::TokenId>(rng() % 20);
    for (std::size_t i = 0; i < length; ++i) seq.push_back(4 + topic * 10 + static_cast<focus::TokenId>(rng() % 10));
    const focus::TokenId slot = topic < 10 ? static_cast<focus::TokenId>(rng() % 2) : 2 + static_cast<focus::TokenId>(rng() % 2);
    seq[rng() % length] = slot;
    c.sequences.push_back(std::move(seq));
  }
  c.recount();
  return c;
}

// Raw-text corpus over words w0..w(n-1): each line is drawn from one of
// `topics` disjoint word groups.
inline std::vector<std::string> topic_text(std::size_t lines, std::size_t words, std::size_t topics,
                                           std::size_t length, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<std::string> out;
  const std::size_t per_topic = words / topics;
  for (std::size_t l = 0; l < lines; ++l) {
    const std::size_t topic = rng() % topics;
    std::string line;
    for (std::size_t i = 0; i < length; ++i) {
      if (i) line += ' ';
      line += "w" + std::to_string(topic * per_topic + rng() % per_topic);
    }
    out.push_back(std::move(line));
  }
  return out;
}

// Writes a small end-to-end instance into `dir`:
//   source vocab: ▁w0..▁w59, ▁x0..▁x19, ▁the   (81 tokens, random embeddings)
//   target vocab: ▁w0..▁w119, ▁The              (121 tokens)
//   corpus:       topic-structured text over w0..w119
// and returns a config pointing at it.
inline focus::PipelineConfig toy_pipeline(const std::filesystem::path& dir, std::size_t lines = 2000,
                                          std::size_t emb_dim = 16, std::uint64_t seed = 3) {
  namespace fs = std::filesystem;
  fs::remove_all(dir);
  fs::create_directories(dir);
  {
    std::ofstream s(dir / "source.txt"), t(dir / "target.txt"), c(dir / "corpus.txt");
    for (int i = 0; i < 60; ++i) s << "\u2581w" << i << '\n';
    for (int i = 0; i < 20; ++i) s << "\u2581x" << i << '\n';
    s << "\u2581the\n";
    for (int i = 0; i < 120; ++i) t << "\u2581w" << i << '\n';
    t << "\u2581The\n";
    for (const auto& line : topic_text(lines, 120, 12, 12, seed)) c << line << '\n';
  }
  focus::save_matrix(oracle::random_matrix(81, emb_dim, seed + 1), dir / "source.vtm");
  focus::PipelineConfig cfg;
  cfg.source_vocab = (dir / "source.txt").string();
  cfg.target_vocab = (dir / "target.txt").string();
  cfg.source_emb = (dir / "source.vtm").string();
  cfg.corpus = (dir / "corpus.txt").string();
  cfg.run_dir = (dir / "run").string();
  cfg.train.dim = 32;
  return cfg;
}

}  // namespace fixture
