#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "focus/error.hpp"
#include "focus/utf8.hpp"

namespace focus {

using TokenId = std::uint32_t;

// Canonical leading-space sentinel (U+2E31 WORD SEPARATOR MIDDLE DOT).
inline constexpr std::string_view kSpaceSentinel = "⸱";
// SentencePiece word-boundary marker (U+2581).
inline constexpr std::string_view kSentencePieceMarker = "▁";

enum class SpaceMarker { kSentencePiece, kByteLevel, kNone };

enum class VocabFormat { kText, kJson };

inline SpaceMarker parse_space_marker(std::string_view s) {
  if (s == "sentencepiece" || s == "spm") return SpaceMarker::kSentencePiece;
  if (s == "bpe" || s == "byte-level" || s == "bytelevel") return SpaceMarker::kByteLevel;
  if (s == "none") return SpaceMarker::kNone;
  throw InputError("unknown space marker convention '" + std::string(s) + "'");
}

inline std::string to_string(SpaceMarker m) {
  switch (m) {
    case SpaceMarker::kSentencePiece: return "sentencepiece";
    case SpaceMarker::kByteLevel: return "bpe";
    case SpaceMarker::kNone: return "none";
  }
  return "none";
}

inline VocabFormat parse_vocab_format(std::string_view s) {
  if (s == "text" || s == "txt") return VocabFormat::kText;
  if (s == "json") return VocabFormat::kJson;
  throw InputError("unknown vocabulary format '" + std::string(s) + "'");
}

// Guesses the format from the file extension: ".json" is JSON, anything else text.
inline VocabFormat vocab_format_for(const std::filesystem::path& path) {
  return path.extension() == ".json" ? VocabFormat::kJson : VocabFormat::kText;
}

// Space-marker conventions of the two vocabularies being compared.
struct CanonPolicy {
  SpaceMarker source = SpaceMarker::kSentencePiece;
  SpaceMarker target = SpaceMarker::kSentencePiece;
};

class Vocabulary {
 public:
  Vocabulary() = default;

  // Throws InputError listing duplicates if tokens are not unique.
  explicit Vocabulary(std::vector<std::string> tokens,
                      SpaceMarker marker = SpaceMarker::kNone,
                      std::vector<bool> exact_only = {})
      : tokens_(std::move(tokens)), marker_(marker), exact_only_(std::move(exact_only)) {
    if (!exact_only_.empty() && exact_only_.size() != tokens_.size())
      throw InputError("exact_only mask size does not match vocabulary size");
    index_.reserve(tokens_.size());
    std::vector<std::string> dups;
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
      if (!index_.emplace(tokens_[i], static_cast<TokenId>(i)).second) dups.push_back(tokens_[i]);
    }
    if (!dups.empty()) throw InputError("duplicate tokens: " + join_preview(dups));
  }

  std::size_t size() const { return tokens_.size(); }
  bool empty() const { return tokens_.empty(); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  const std::string& token(TokenId id) const { return tokens_.at(id); }
  SpaceMarker space_marker() const { return marker_; }

  std::optional<TokenId> find(std::string_view token) const {
    auto it = index_.find(std::string(token));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  // True for byte-level tokens that could not be decoded to text; these take
  // part in exact matching only.
  bool exact_only(TokenId id) const { return !exact_only_.empty() && exact_only_[id]; }

  static std::string join_preview(const std::vector<std::string>& items, std::size_t limit = 10) {
    std::string out;
    for (std::size_t i = 0; i < items.size() && i < limit; ++i) {
      if (i) out += ", ";
      out += "'" + items[i] + "'";
    }
    if (items.size() > limit) out += ", ... (" + std::to_string(items.size()) + " total)";
    return out;
  }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
  SpaceMarker marker_ = SpaceMarker::kNone;
  std::vector<bool> exact_only_;
};

namespace detail {

inline Vocabulary parse_text_vocabulary(std::istream& in, SpaceMarker marker) {
  std::vector<std::string> tokens;
  std::string line;
  std::size_t lineno = 0;
  std::size_t pending_empty = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) {
      // Only trailing blank lines are tolerated.
      if (pending_empty == 0) pending_empty = lineno;
      continue;
    }
    if (pending_empty != 0)
      throw InputError("parse error at line " + std::to_string(pending_empty) + ": empty token");
    if (!utf8::valid(line))
      throw InputError("parse error at line " + std::to_string(lineno) + ": invalid UTF-8");
    tokens.push_back(std::move(line));
  }
  return Vocabulary(std::move(tokens), marker);
}

inline Vocabulary parse_json_vocabulary(std::string_view text, SpaceMarker marker) {
  std::vector<std::string> duplicate_keys;
  std::unordered_set<std::string> seen;
  nlohmann::json::parser_callback_t cb = [&](int depth, nlohmann::json::parse_event_t event,
                                             nlohmann::json& parsed) {
    if (event == nlohmann::json::parse_event_t::key && depth == 1) {
      const auto& key = parsed.get_ref<const std::string&>();
      if (!seen.insert(key).second) duplicate_keys.push_back(key);
    }
    return true;
  };
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text.begin(), text.end(), cb);
  } catch (const nlohmann::json::parse_error& e) {
    throw InputError("parse error at offset " + std::to_string(e.byte) + ": " + e.what());
  }
  if (!duplicate_keys.empty())
    throw InputError("duplicate tokens: " + Vocabulary::join_preview(duplicate_keys));
  if (!j.is_object()) throw InputError("JSON vocabulary must be an object of token -> id");
  const std::size_t n = j.size();
  std::vector<std::string> tokens(n);
  std::vector<bool> filled(n, false);
  for (const auto& [key, value] : j.items()) {
    if (!value.is_number_integer())
      throw InputError("token '" + key + "' has a non-integer id");
    const auto id = value.get<std::int64_t>();
    if (id < 0 || static_cast<std::size_t>(id) >= n)
      throw InputError("non-dense ids: token '" + key + "' has id " + std::to_string(id) +
                       " outside 0.." + std::to_string(n == 0 ? 0 : n - 1));
    if (filled[id])
      throw InputError("non-dense ids: id " + std::to_string(id) + " assigned twice");
    filled[id] = true;
    tokens[id] = key;
  }
  return Vocabulary(std::move(tokens), marker);
}

// GPT-2 style byte <-> printable code point table.
inline const std::array<char32_t, 256>& byte_to_unicode() {
  static const std::array<char32_t, 256> table = [] {
    std::array<char32_t, 256> t{};
    char32_t extra = 256;
    for (int b = 0; b < 256; ++b) {
      const bool printable = (b >= 33 && b <= 126) || (b >= 161 && b <= 172) || (b >= 174);
      t[b] = printable ? static_cast<char32_t>(b) : extra++;
    }
    return t;
  }();
  return table;
}

inline std::optional<std::string> decode_byte_level(std::string_view token) {
  static const std::unordered_map<char32_t, unsigned char> inverse = [] {
    std::unordered_map<char32_t, unsigned char> m;
    const auto& t = byte_to_unicode();
    for (int b = 0; b < 256; ++b) m.emplace(t[b], static_cast<unsigned char>(b));
    return m;
  }();
  auto cps = utf8::decode(token);
  if (!cps) return std::nullopt;
  std::string bytes;
  for (char32_t cp : *cps) {
    auto it = inverse.find(cp);
    if (it == inverse.end()) return std::nullopt;
    bytes.push_back(static_cast<char>(it->second));
  }
  if (!utf8::valid(bytes)) return std::nullopt;
  return bytes;
}

inline void replace_all(std::string& s, std::string_view from, std::string_view to) {
  std::size_t pos = 0;
  while ((pos = s.find(from, pos)) != std::string::npos) {
    s.replace(pos, from.size(), to);
    pos += to.size();
  }
}

}  // namespace detail

inline Vocabulary parse_vocabulary(std::string_view text, VocabFormat format,
                                   SpaceMarker marker = SpaceMarker::kNone) {
  if (format == VocabFormat::kJson) return detail::parse_json_vocabulary(text, marker);
  std::istringstream in{std::string(text)};
  return detail::parse_text_vocabulary(in, marker);
}

// Ids follow file order (text) or the stored ids (JSON). Tokens are returned
// raw; call canonicalize() before comparing vocabularies.
inline Vocabulary load_vocabulary(const std::filesystem::path& path, VocabFormat format,
                                  SpaceMarker marker = SpaceMarker::kNone) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open vocabulary file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return parse_vocabulary(buf.str(), format, marker);
  } catch (const InputError& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

// Rewrites leading-space markers onto kSpaceSentinel. Byte-level tokens are
// decoded to text where the bytes form valid UTF-8; the rest are kept verbatim
// and flagged exact-only.
inline Vocabulary canonicalize(const Vocabulary& v, SpaceMarker marker) {
  std::vector<std::string> out;
  out.reserve(v.size());
  std::vector<bool> exact_only(v.size(), false);
  for (std::size_t i = 0; i < v.size(); ++i) {
    std::string tok = v.tokens()[i];
    switch (marker) {
      case SpaceMarker::kSentencePiece:
        detail::replace_all(tok, kSentencePieceMarker, kSpaceSentinel);
        break;
      case SpaceMarker::kByteLevel:
        if (auto text = detail::decode_byte_level(tok)) {
          tok = *text;
          detail::replace_all(tok, " ", kSpaceSentinel);
        } else {
          exact_only[i] = true;
        }
        break;
      case SpaceMarker::kNone:
        break;
    }
    out.push_back(std::move(tok));
  }

  std::unordered_map<std::string, std::size_t> first;
  std::vector<std::string> collisions;
  for (std::size_t i = 0; i < out.size(); ++i) {
    auto [it, inserted] = first.emplace(out[i], i);
    if (!inserted)
      collisions.push_back(v.tokens()[it->second] + "' and '" + v.tokens()[i] + "' -> '" + out[i]);
  }
  if (!collisions.empty())
    throw InputError("canonicalization collisions: " + Vocabulary::join_preview(collisions));
  return Vocabulary(std::move(out), marker, std::move(exact_only));
}

inline Vocabulary canonicalize(const Vocabulary& v) { return canonicalize(v, v.space_marker()); }

enum class MatchKind { kExact, kFuzzy };

inline std::string to_string(MatchKind k) { return k == MatchKind::kExact ? "exact" : "fuzzy"; }

struct OverlapEntry {
  TokenId target_id = 0;
  TokenId source_id = 0;
  MatchKind kind = MatchKind::kExact;
  // Fuzzy matches only: every source token that case-folds to the target.
  std::vector<TokenId> candidates;

  bool operator==(const OverlapEntry&) const = default;
};

struct OverlapResult {
  std::vector<OverlapEntry> overlap;   // ascending target_id
  std::vector<TokenId> additional;     // ascending
  std::size_t source_vocab_size = 0;
  std::size_t target_vocab_size = 0;

  std::size_t exact_count() const {
    return static_cast<std::size_t>(std::count_if(overlap.begin(), overlap.end(), [](const auto& e) {
      return e.kind == MatchKind::kExact;
    }));
  }
  std::size_t fuzzy_count() const { return overlap.size() - exact_count(); }

  // overlap and additional target ids partition 0..target_vocab_size-1.
  bool is_partition() const {
    std::vector<int> seen(target_vocab_size, 0);
    for (const auto& e : overlap) {
      if (e.target_id >= target_vocab_size || seen[e.target_id]++) return false;
    }
    for (TokenId a : additional) {
      if (a >= target_vocab_size || seen[a]++) return false;
    }
    return std::all_of(seen.begin(), seen.end(), [](int s) { return s == 1; });
  }
};

namespace detail {
inline std::size_t case_edit_distance(std::u32string_view a, std::u32string_view b) {
  std::size_t d = a.size() > b.size() ? a.size() - b.size() : b.size() - a.size();
  for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i) d += a[i] != b[i];
  return d;
}
}  // namespace detail

// Exact matches first; with fuzzy enabled, a target token without an exact
// match falls back to source tokens equal under case folding. Among several
// such sources the smallest case-edit distance wins, then the lowest id.
inline OverlapResult compute_overlap(const Vocabulary& source, const Vocabulary& target, bool fuzzy) {
  OverlapResult r;
  r.source_vocab_size = source.size();
  r.target_vocab_size = target.size();

  std::unordered_map<std::u32string, std::vector<TokenId>> folded;
  if (fuzzy) {
    for (std::size_t s = 0; s < source.size(); ++s) {
      if (source.exact_only(static_cast<TokenId>(s))) continue;
      if (auto cps = utf8::decode(source.tokens()[s]))
        folded[utf8::fold(*cps)].push_back(static_cast<TokenId>(s));
    }
  }

  for (std::size_t t = 0; t < target.size(); ++t) {
    const auto tid = static_cast<TokenId>(t);
    const std::string& tok = target.tokens()[t];
    if (auto sid = source.find(tok)) {
      r.overlap.push_back({tid, *sid, MatchKind::kExact, {}});
      continue;
    }
    if (fuzzy && !target.exact_only(tid)) {
      if (auto cps = utf8::decode(tok)) {
        auto it = folded.find(utf8::fold(*cps));
        if (it != folded.end()) {
          TokenId best = it->second.front();
          std::size_t best_dist = SIZE_MAX;
          for (TokenId cand : it->second) {
            const auto cand_cps = utf8::decode(source.tokens()[cand]);
            const std::size_t d = detail::case_edit_distance(*cand_cps, *cps);
            if (d < best_dist) {  // candidates are in ascending id order
              best = cand;
              best_dist = d;
            }
          }
          r.overlap.push_back({tid, best, MatchKind::kFuzzy, it->second});
          continue;
        }
      }
    }
    r.additional.push_back(tid);
  }
  return r;
}

// True when the token is at most one character once a leading sentinel is removed.
inline bool is_single_character(std::string_view token) {
  if (token.starts_with(kSpaceSentinel)) {
    token.remove_prefix(kSpaceSentinel.size());
    if (token.empty()) return true;
  }
  return utf8::length(token) <= 1;
}

// Report-only view: drops single-character overlap tokens. Dropped entries are
// not moved to `additional`, so the result is no longer a partition.
inline OverlapResult clean_overlap_filter(const OverlapResult& r, const Vocabulary& target) {
  OverlapResult out = r;
  std::erase_if(out.overlap, [&](const OverlapEntry& e) {
    return is_single_character(target.token(e.target_id));
  });
  return out;
}

}  // namespace focus
