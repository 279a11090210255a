#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "focus/error.hpp"
#include "focus/utf8.hpp"
#include "focus/vocab.hpp"

namespace focus {

struct Corpus {
  std::vector<std::vector<TokenId>> sequences;
  std::vector<std::uint64_t> token_counts;  // indexed by target token id

  // Tokenization diagnostics.
  std::size_t dropped_chars = 0;
  std::size_t dropped_lines = 0;
  std::vector<std::string> warnings;

  std::uint64_t total_tokens() const {
    std::uint64_t n = 0;
    for (const auto& s : sequences) n += s.size();
    return n;
  }
  bool empty() const { return sequences.empty(); }

  void recount() {
    std::fill(token_counts.begin(), token_counts.end(), 0);
    for (const auto& s : sequences)
      for (TokenId id : s) ++token_counts.at(id);
  }
};

struct TokenizerSpec {
  enum class Kind { kGreedyLongestMatch, kPretokenizedIds };
  Kind kind = Kind::kGreedyLongestMatch;
  // Prefix each whitespace-separated word with the space sentinel, as
  // sentencepiece-style vocabularies expect.
  bool prefix_space = true;
};

// Greedy longest-match tokenizer over a canonicalized vocabulary.
class GreedyTokenizer {
 public:
  explicit GreedyTokenizer(const Vocabulary& vocab) : vocab_(vocab) {
    for (const auto& t : vocab.tokens()) max_bytes_ = std::max(max_bytes_, t.size());
  }

  // Appends ids for one line; returns the number of characters that no token covered.
  std::size_t tokenize_line(std::string_view line, bool prefix_space, std::vector<TokenId>& out) const {
    std::size_t dropped = 0;
    std::size_t pos = 0;
    while (pos < line.size()) {
      while (pos < line.size() && is_space(line[pos])) ++pos;
      std::size_t end = pos;
      while (end < line.size() && !is_space(line[end])) ++end;
      if (end > pos) {
        std::string word = prefix_space ? std::string(kSpaceSentinel) : std::string();
        word.append(line.substr(pos, end - pos));
        dropped += tokenize_word(word, prefix_space ? kSpaceSentinel.size() : 0, out);
      }
      pos = end;
    }
    return dropped;
  }

 private:
  static bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

  std::size_t tokenize_word(std::string_view word, std::size_t sentinel_bytes,
                            std::vector<TokenId>& out) const {
    std::vector<std::size_t> bounds;  // code point start offsets plus end
    for (std::size_t p = 0; p < word.size();) {
      bounds.push_back(p);
      if (!utf8::next(word, p)) ++p;  // malformed byte: treat as its own unit
    }
    bounds.push_back(word.size());

    std::size_t dropped = 0;
    std::size_t bi = 0;
    while (bi + 1 < bounds.size()) {
      const std::size_t start = bounds[bi];
      std::size_t matched = 0;
      for (std::size_t bj = bounds.size() - 1; bj > bi; --bj) {
        if (bounds[bj] - start > max_bytes_) continue;
        if (auto id = vocab_.find(word.substr(start, bounds[bj] - start))) {
          out.push_back(*id);
          matched = bj;
          break;
        }
      }
      if (matched) {
        bi = matched;
        continue;
      }
      // The synthetic sentinel may be absent from the vocabulary; that is not a loss.
      if (!(start == 0 && sentinel_bytes > 0)) ++dropped;
      ++bi;
    }
    return dropped;
  }

  const Vocabulary& vocab_;
  std::size_t max_bytes_ = 0;
};

// One document per line. Lines that produce no tokens are dropped and counted.
inline Corpus tokenize_text(std::istream& in, const Vocabulary& target, const TokenizerSpec& spec = {}) {
  Corpus c;
  c.token_counts.assign(target.size(), 0);
  std::string line;
  std::size_t lines = 0;

  if (spec.kind == TokenizerSpec::Kind::kPretokenizedIds) {
    while (std::getline(in, line)) {
      ++lines;
      std::istringstream ls(line);
      std::vector<TokenId> seq;
      std::string field;
      while (ls >> field) {
        std::size_t used = 0;
        unsigned long long id = 0;
        try {
          id = std::stoull(field, &used);
        } catch (const std::exception&) {
          used = 0;
        }
        if (used != field.size() || field.front() == '-')
          throw InputError("line " + std::to_string(lines) + ": invalid token id '" + field + "'");
        if (id >= target.size())
          throw InputError("line " + std::to_string(lines) + ": token id " + field +
                           " exceeds vocabulary size " + std::to_string(target.size()));
        seq.push_back(static_cast<TokenId>(id));
      }
      if (seq.empty()) {
        ++c.dropped_lines;
        continue;
      }
      c.sequences.push_back(std::move(seq));
    }
  } else {
    GreedyTokenizer tok(target);
    while (std::getline(in, line)) {
      ++lines;
      std::vector<TokenId> seq;
      c.dropped_chars += tok.tokenize_line(line, spec.prefix_space, seq);
      if (seq.empty()) {
        ++c.dropped_lines;
        continue;
      }
      c.sequences.push_back(std::move(seq));
    }
  }
  c.recount();
  if (lines == 0) c.warnings.push_back("corpus is empty");
  if (c.dropped_chars > 0)
    c.warnings.push_back(std::to_string(c.dropped_chars) + " characters not covered by the vocabulary were dropped");
  return c;
}

inline Corpus tokenize_corpus(const std::filesystem::path& path, const Vocabulary& target,
                              const TokenizerSpec& spec = {}) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open corpus " + path.string());
  return tokenize_text(in, target, spec);
}

}  // namespace focus
