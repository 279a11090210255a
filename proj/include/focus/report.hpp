#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "focus/matcher.hpp"
#include "focus/matrix.hpp"
#include "focus/vocab.hpp"

namespace focus {

inline constexpr int kReportFormatVersion = 1;

// Audit record of one initialization run.
struct InitReport {
  std::string method;
  std::string mode;
  std::size_t source_vocab_size = 0;
  std::size_t target_vocab_size = 0;
  std::size_t overlap_count = 0;
  std::size_t exact_overlap_count = 0;
  std::size_t fuzzy_overlap_count = 0;
  std::size_t overlap_count_without_fuzzy = 0;
  std::size_t clean_overlap_count = 0;
  std::size_t additional_count = 0;
  std::size_t initialized_additional_count = 0;  // |A|, or the appended subset in capped extend mode
  std::size_t weighted_count = 0;
  std::size_t fallback_count = 0;
  std::size_t untrained_overlap_count = 0;
  double mean_support_size = 0.0;
  std::map<std::size_t, std::size_t> support_histogram;  // |S_a| -> number of tokens
  bool empty_overlap = false;
  std::optional<SizeReport> size;
  std::map<std::string, double> timing_seconds;
  nlohmann::json config = nlohmann::json::object();
  nlohmann::json fuzzy_candidates = nlohmann::json::array();
  std::vector<std::string> warnings;

  // |O| + |A| = |V^t| and weighted + fallback = initialized additional.
  bool accounting_holds() const {
    return overlap_count + additional_count == target_vocab_size &&
           weighted_count + fallback_count == initialized_additional_count &&
           exact_overlap_count + fuzzy_overlap_count == overlap_count;
  }
};

inline void fill_overlap_fields(InitReport& r, const OverlapResult& overlap, const OverlapResult& clean,
                                std::size_t without_fuzzy, const Vocabulary& source, const Vocabulary& target) {
  r.source_vocab_size = overlap.source_vocab_size;
  r.target_vocab_size = overlap.target_vocab_size;
  r.overlap_count = overlap.overlap.size();
  r.exact_overlap_count = overlap.exact_count();
  r.fuzzy_overlap_count = overlap.fuzzy_count();
  r.overlap_count_without_fuzzy = without_fuzzy;
  r.clean_overlap_count = clean.overlap.size();
  r.additional_count = overlap.additional.size();
  r.empty_overlap = overlap.overlap.empty();
  r.fuzzy_candidates = nlohmann::json::array();
  for (const auto& e : overlap.overlap) {
    if (e.kind != MatchKind::kFuzzy || e.candidates.size() < 2) continue;
    nlohmann::json c = nlohmann::json::array();
    for (TokenId s : e.candidates) c.push_back({{"source_id", s}, {"token", source.token(s)}});
    r.fuzzy_candidates.push_back({{"target_id", e.target_id},
                                  {"token", target.token(e.target_id)},
                                  {"chosen_source_id", e.source_id},
                                  {"candidates", std::move(c)}});
  }
  if (r.empty_overlap) r.warnings.push_back("vocabulary overlap is empty");
}

inline void fill_support_fields(InitReport& r, const std::vector<WeightAssignment>& weights) {
  r.support_histogram.clear();
  double total = 0.0;
  for (const auto& w : weights) {
    ++r.support_histogram[w.support.size()];
    total += static_cast<double>(w.support.size());
  }
  r.mean_support_size = weights.empty() ? 0.0 : total / static_cast<double>(weights.size());
}

inline nlohmann::json to_json(const InitReport& r) {
  nlohmann::json hist = nlohmann::json::object();
  for (const auto& [size, count] : r.support_histogram) hist[std::to_string(size)] = count;
  nlohmann::json j{
      {"format_version", kReportFormatVersion},
      {"method", r.method},
      {"mode", r.mode},
      {"source_vocab_size", r.source_vocab_size},
      {"target_vocab_size", r.target_vocab_size},
      {"overlap_count", r.overlap_count},
      {"exact_overlap_count", r.exact_overlap_count},
      {"fuzzy_overlap_count", r.fuzzy_overlap_count},
      {"overlap_count_without_fuzzy", r.overlap_count_without_fuzzy},
      {"clean_overlap_count", r.clean_overlap_count},
      {"additional_count", r.additional_count},
      {"initialized_additional_count", r.initialized_additional_count},
      {"weighted_count", r.weighted_count},
      {"fallback_count", r.fallback_count},
      {"untrained_overlap_count", r.untrained_overlap_count},
      {"mean_support_size", r.mean_support_size},
      {"support_histogram", hist},
      {"empty_overlap", r.empty_overlap},
      {"timing_seconds", r.timing_seconds},
      {"config", r.config},
      {"fuzzy_candidates", r.fuzzy_candidates},
      {"warnings", r.warnings},
  };
  j["size_report"] = r.size ? to_json(*r.size) : nlohmann::json(nullptr);
  return j;
}

}  // namespace focus
