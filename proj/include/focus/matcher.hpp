#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "focus/error.hpp"
#include "focus/matrix.hpp"
#include "focus/parallel.hpp"
#include "focus/skipgram.hpp"
#include "focus/sparsemax.hpp"
#include "focus/vocab.hpp"

namespace focus {

inline double norm(std::span<const float> v) {
  double s = 0.0;
  for (float x : v) s += static_cast<double>(x) * x;
  return std::sqrt(s);
}

inline double cosine(std::span<const float> a, std::span<const float> b, double norm_a, double norm_b) {
  if (norm_a == 0.0 || norm_b == 0.0) return 0.0;
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d += static_cast<double>(a[i]) * b[i];
  return std::clamp(d / (norm_a * norm_b), -1.0, 1.0);
}

struct SimilarityRow {
  TokenId additional_id = 0;
  std::vector<double> scores;                 // one per overlap token, in overlap order
  std::vector<std::size_t> zero_norm_overlap; // overlap indices scored 0 for lack of a direction
};

// Cosine of `a` against each overlap vector. Zero-norm overlap vectors score 0
// and are listed in `zero_norm` when given.
inline std::vector<double> cosine_scores(std::span<const float> a,
                                         std::span<const std::span<const float>> overlap_vecs,
                                         std::vector<std::size_t>* zero_norm = nullptr) {
  const double na = norm(a);
  if (na == 0.0) throw InputError("cosine_scores: query vector has zero norm");
  std::vector<double> scores(overlap_vecs.size());
  for (std::size_t i = 0; i < overlap_vecs.size(); ++i) {
    if (overlap_vecs[i].size() != a.size())
      throw InputError("cosine_scores: dimension mismatch (" + std::to_string(a.size()) + " vs " +
                       std::to_string(overlap_vecs[i].size()) + ")");
    const double no = norm(overlap_vecs[i]);
    if (no == 0.0 && zero_norm) zero_norm->push_back(i);
    scores[i] = cosine(a, overlap_vecs[i], na, no);
  }
  return scores;
}

// Evaluates similarity rows for `additional` against `overlap_rows` (both row
// ids into `space`) in blocks, invoking sink(index, row) once per additional
// token. Scores do not depend on block size or thread count.
template <typename Sink>
void for_each_similarity(const EmbeddingMatrix& space, std::span<const TokenId> overlap_rows,
                         std::span<const TokenId> additional, std::size_t block_size,
                         std::size_t threads, Sink&& sink) {
  for (TokenId id : overlap_rows)
    if (id >= space.rows()) throw InputError("overlap row " + std::to_string(id) + " out of range");
  for (TokenId id : additional)
    if (id >= space.rows()) throw InputError("additional row " + std::to_string(id) + " out of range");
  std::vector<double> overlap_norms(overlap_rows.size());
  std::vector<std::size_t> zero_norm;
  for (std::size_t j = 0; j < overlap_rows.size(); ++j) {
    overlap_norms[j] = norm(space.row(overlap_rows[j]));
    if (overlap_norms[j] == 0.0) zero_norm.push_back(j);
  }
  block_size = std::max<std::size_t>(1, block_size);
  const std::size_t blocks = (additional.size() + block_size - 1) / block_size;
  parallel_for_chunks(blocks, threads, [&](std::size_t b0, std::size_t b1) {
    for (std::size_t b = b0; b < b1; ++b) {
      const std::size_t begin = b * block_size;
      const std::size_t end = std::min(additional.size(), begin + block_size);
      std::vector<SimilarityRow> rows(end - begin);
      std::vector<double> norms(end - begin);
      for (std::size_t i = begin; i < end; ++i) {
        rows[i - begin].additional_id = additional[i];
        rows[i - begin].scores.resize(overlap_rows.size());
        rows[i - begin].zero_norm_overlap = zero_norm;
        norms[i - begin] = norm(space.row(additional[i]));
        if (norms[i - begin] == 0.0)
          throw InputError("additional token " + std::to_string(additional[i]) + " has a zero-norm vector");
      }
      // Overlap-major loop keeps each overlap row hot across the block.
      for (std::size_t j = 0; j < overlap_rows.size(); ++j) {
        auto o = space.row(overlap_rows[j]);
        for (std::size_t i = begin; i < end; ++i)
          rows[i - begin].scores[j] = cosine(space.row(additional[i]), o, norms[i - begin], overlap_norms[j]);
      }
      for (std::size_t i = begin; i < end; ++i) sink(i, std::move(rows[i - begin]));
    }
  });
}

inline std::vector<SimilarityRow> batch_similarities(const EmbeddingMatrix& space,
                                                     std::span<const TokenId> overlap_rows,
                                                     std::span<const TokenId> additional,
                                                     std::size_t block_size = 64, std::size_t threads = 1) {
  std::vector<SimilarityRow> out(additional.size());
  for_each_similarity(space, overlap_rows, additional, block_size, threads,
                      [&](std::size_t i, SimilarityRow&& row) { out[i] = std::move(row); });
  return out;
}

// Target-side F row ids of the overlap tokens, in overlap order.
inline std::vector<TokenId> overlap_target_ids(const OverlapResult& r) {
  std::vector<TokenId> ids;
  ids.reserve(r.overlap.size());
  for (const auto& e : r.overlap) ids.push_back(e.target_id);
  return ids;
}

inline std::vector<SimilarityRow> batch_similarities(const AuxiliarySpace& aux, const OverlapResult& overlap,
                                                     std::size_t block_size = 64, std::size_t threads = 1) {
  const auto ids = overlap_target_ids(overlap);
  return batch_similarities(aux.input_vectors, ids, overlap.additional, block_size, threads);
}

enum class InitMode { kReplace, kExtend };
enum class Fallback { kNormalFromSourceStats, kShuffleRow, kNone };

inline InitMode parse_init_mode(std::string_view s) {
  if (s == "replace") return InitMode::kReplace;
  if (s == "extend") return InitMode::kExtend;
  throw InputError("unknown mode '" + std::string(s) + "' (expected replace|extend)");
}
inline std::string to_string(InitMode m) { return m == InitMode::kReplace ? "replace" : "extend"; }

inline Fallback parse_fallback(std::string_view s) {
  if (s == "normal" || s == "normal_from_source_stats") return Fallback::kNormalFromSourceStats;
  if (s == "shuffle" || s == "shuffle_row") return Fallback::kShuffleRow;
  if (s == "none") return Fallback::kNone;
  throw InputError("unknown fallback '" + std::string(s) + "'");
}
inline std::string to_string(Fallback f) {
  switch (f) {
    case Fallback::kNormalFromSourceStats: return "normal_from_source_stats";
    case Fallback::kShuffleRow: return "shuffle_row";
    case Fallback::kNone: return "none";
  }
  return "none";
}

struct FocusConfig {
  InitMode mode = InitMode::kReplace;
  Fallback fallback = Fallback::kNormalFromSourceStats;
  bool fuzzy = true;
  std::uint64_t seed = 0;
  // Extend mode: append only the N most frequent additional tokens.
  std::optional<std::size_t> extend_cap;
  std::size_t threads = 1;
  std::size_t block_size = 64;
};

inline nlohmann::json to_json(const FocusConfig& c) {
  nlohmann::json j{{"mode", to_string(c.mode)}, {"fallback", to_string(c.fallback)},
                   {"fuzzy", c.fuzzy},          {"seed", c.seed},
                   {"threads", c.threads},      {"block_size", c.block_size}};
  j["extend_cap"] = c.extend_cap ? nlohmann::json(*c.extend_cap) : nlohmann::json(nullptr);
  return j;
}

struct SupportEntry {
  std::size_t overlap_index = 0;
  double weight = 0.0;
};

struct WeightAssignment {
  TokenId additional_id = 0;
  std::vector<SupportEntry> support;  // nonzero sparsemax mass only, ascending overlap_index
};

struct FocusResult {
  EmbeddingMatrix embeddings;
  std::vector<WeightAssignment> weights;
  std::vector<TokenId> fallback_ids;
  // Row index in `embeddings` for each target token that received a row via
  // the overlap copy or initialization. In extend mode the first
  // |source| rows are the source vocabulary.
  std::vector<std::optional<std::size_t>> target_row;
  // Extend mode: target ids appended after the source rows, in row order.
  std::vector<TokenId> appended;
  std::size_t untrained_overlap = 0;  // overlap tokens excluded from scoring
  std::size_t zero_norm_overlap = 0;
  std::vector<std::string> warnings;

  std::size_t weighted_count() const { return weights.size(); }
  std::size_t fallback_count() const { return fallback_ids.size(); }
};

namespace detail {

inline std::mt19937_64 token_rng(std::uint64_t seed, TokenId token) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(token)};
  return std::mt19937_64(seq);
}

inline void fallback_row(std::span<float> out, const EmbeddingMatrix& source, const MatrixStats& stats,
                         Fallback mode, std::uint64_t seed, TokenId token) {
  auto rng = token_rng(seed, token);
  if (mode == Fallback::kShuffleRow) {
    std::uniform_int_distribution<std::size_t> pick(0, source.rows() - 1);
    auto src = source.row(pick(rng));
    std::copy(src.begin(), src.end(), out.begin());
    return;
  }
  for (std::size_t c = 0; c < out.size(); ++c) {
    if (stats.std[c] > 0.0) {
      std::normal_distribution<double> nd(stats.mean[c], stats.std[c]);
      out[c] = static_cast<float>(nd(rng));
    } else {
      out[c] = static_cast<float>(stats.mean[c]);
    }
  }
}

}  // namespace detail

// Initializes target embeddings:
//   overlap token o:     row copied from source_emb[source_id(o)]
//   additional token a:  sum over S_a of w_{a,o} * source_emb[source_id(o)],
//                        w_a = sparsemax of cosine(F[a], F[o]) over overlap tokens
// Additional tokens without a trained, nonzero F row get the fallback.
// Overlap tokens whose F row is untrained or zero are left out of S_a.
inline FocusResult focus_initialize(const EmbeddingMatrix& source_emb, const OverlapResult& overlap,
                                    const AuxiliarySpace& aux, const FocusConfig& cfg) {
  const EmbeddingMatrix& F = aux.input_vectors;
  if (source_emb.rows() != overlap.source_vocab_size)
    throw InputError("source embeddings have " + std::to_string(source_emb.rows()) +
                     " rows but the source vocabulary has " + std::to_string(overlap.source_vocab_size));
  if (F.rows() != overlap.target_vocab_size || aux.trained_mask.size() != F.rows())
    throw InputError("auxiliary space has " + std::to_string(F.rows()) +
                     " rows but the target vocabulary has " + std::to_string(overlap.target_vocab_size));
  if (source_emb.rows() == 0 || source_emb.dim() == 0) throw InputError("source embeddings are empty");

  FocusResult res;
  const std::size_t dim = source_emb.dim();
  res.target_row.assign(overlap.target_vocab_size, std::nullopt);

  // Additional tokens that receive a row, in output order.
  std::vector<TokenId> targets;
  if (cfg.mode == InitMode::kExtend && cfg.extend_cap && *cfg.extend_cap < overlap.additional.size()) {
    std::vector<TokenId> ranked = overlap.additional;
    std::stable_sort(ranked.begin(), ranked.end(), [&](TokenId a, TokenId b) {
      const auto ca = a < aux.token_counts.size() ? aux.token_counts[a] : 0;
      const auto cb = b < aux.token_counts.size() ? aux.token_counts[b] : 0;
      return ca > cb;
    });
    ranked.resize(*cfg.extend_cap);
    std::sort(ranked.begin(), ranked.end());
    targets = std::move(ranked);
  } else {
    targets = overlap.additional;
  }

  std::size_t base = 0;
  if (cfg.mode == InitMode::kReplace) {
    res.embeddings = EmbeddingMatrix(overlap.target_vocab_size, dim);
    for (const auto& e : overlap.overlap) {
      if (e.source_id >= source_emb.rows()) throw InputError("overlap source id out of range");
      auto src = source_emb.row(e.source_id);
      std::copy(src.begin(), src.end(), res.embeddings.row(e.target_id).begin());
      res.target_row[e.target_id] = e.target_id;
    }
    for (TokenId a : targets) res.target_row[a] = a;
  } else {
    base = source_emb.rows();
    res.embeddings = EmbeddingMatrix(base + targets.size(), dim);
    std::copy(source_emb.data().begin(), source_emb.data().end(), res.embeddings.data().begin());
    for (const auto& e : overlap.overlap) res.target_row[e.target_id] = e.source_id;
    for (std::size_t i = 0; i < targets.size(); ++i) res.target_row[targets[i]] = base + i;
    res.appended = targets;
  }

  // Usable overlap candidates: trained with a nonzero F row.
  std::vector<std::size_t> candidate_index;  // into overlap.overlap
  std::vector<TokenId> candidate_rows;       // F rows
  for (std::size_t i = 0; i < overlap.overlap.size(); ++i) {
    const TokenId t = overlap.overlap[i].target_id;
    if (!aux.trained_mask[t]) {
      ++res.untrained_overlap;
      continue;
    }
    if (norm(F.row(t)) == 0.0) {
      ++res.zero_norm_overlap;
      continue;
    }
    candidate_index.push_back(i);
    candidate_rows.push_back(t);
  }

  std::vector<TokenId> weighted_targets;
  std::vector<TokenId> fallback_targets;
  for (TokenId a : targets) {
    if (!candidate_rows.empty() && aux.trained_mask[a] && norm(F.row(a)) > 0.0)
      weighted_targets.push_back(a);
    else
      fallback_targets.push_back(a);
  }

  if (overlap.overlap.empty()) res.warnings.push_back("vocabulary overlap is empty");
  if (!fallback_targets.empty() && cfg.fallback == Fallback::kNone) {
    if (overlap.overlap.empty())
      throw InputError("overlap is empty and fallback initialization is disabled");
    throw InputError(std::to_string(fallback_targets.size()) +
                     " additional tokens need a fallback but fallback is disabled (first: target id " +
                     std::to_string(fallback_targets.front()) + ")");
  }

  auto row_for = [&](TokenId a) { return res.embeddings.row(*res.target_row[a]); };

  // Weighted combinations.
  res.weights.resize(weighted_targets.size());
  for_each_similarity(F, candidate_rows, weighted_targets, cfg.block_size, cfg.threads,
                      [&](std::size_t i, SimilarityRow&& sim) {
    const auto w = sparsemax(std::span<const double>(sim.scores));
    WeightAssignment wa;
    wa.additional_id = sim.additional_id;
    std::vector<double> acc(dim, 0.0);
    for (std::size_t j = 0; j < w.size(); ++j) {
      if (!(w[j] > 0.0)) continue;
      const std::size_t oi = candidate_index[j];
      wa.support.push_back({oi, w[j]});
      auto src = source_emb.row(overlap.overlap[oi].source_id);
      for (std::size_t c = 0; c < dim; ++c) acc[c] += w[j] * static_cast<double>(src[c]);
    }
    auto out = row_for(sim.additional_id);
    for (std::size_t c = 0; c < dim; ++c) {
      out[c] = static_cast<float>(acc[c]);
      if (!std::isfinite(out[c]))
        throw NumericalError("non-finite embedding computed for target token " + std::to_string(sim.additional_id));
    }
    res.weights[i] = std::move(wa);
  });

  if (!fallback_targets.empty()) {
    const MatrixStats stats = matrix_stats(source_emb);
    for (TokenId a : fallback_targets) {
      detail::fallback_row(row_for(a), source_emb, stats, cfg.fallback, cfg.seed, a);
      res.fallback_ids.push_back(a);
    }
  }

  if (auto bad = res.embeddings.first_nonfinite_row())
    throw NumericalError("non-finite value in output row " + std::to_string(*bad));
  return res;
}

}  // namespace focus
