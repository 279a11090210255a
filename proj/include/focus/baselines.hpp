#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "focus/error.hpp"
#include "focus/matcher.hpp"
#include "focus/matrix.hpp"
#include "focus/parallel.hpp"

namespace focus {

// Source row assigned to each target row by the shuffle baseline: a seeded
// permutation of the source rows, cycled when the target is larger.
inline std::vector<std::size_t> shuffle_assignment(std::size_t source_rows, std::size_t target_size,
                                                   std::uint64_t seed) {
  if (target_size == 0) throw InputError("shuffle_initialize: target_size must be >= 1");
  if (source_rows == 0) throw InputError("shuffle_initialize: source embeddings are empty");
  std::vector<std::size_t> perm(source_rows);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<std::size_t> out(target_size);
  for (std::size_t i = 0; i < target_size; ++i) out[i] = perm[i % perm.size()];
  return out;
}

inline EmbeddingMatrix shuffle_initialize(const EmbeddingMatrix& source, std::size_t target_size,
                                          std::uint64_t seed) {
  const auto rows = shuffle_assignment(source.rows(), target_size, seed);
  EmbeddingMatrix out(target_size, source.dim());
  for (std::size_t i = 0; i < target_size; ++i) {
    auto src = source.row(rows[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

// Paired word vectors: row i of `source` translates to row i of `target`.
struct SeedDictionary {
  EmbeddingMatrix source;
  EmbeddingMatrix target;
  std::size_t skipped_pairs = 0;  // word pairs with a missing vector
};

struct ProcrustesResult {
  Eigen::MatrixXd rotation;  // W, minimizing ||X W - Y||_F over orthogonal W
  Eigen::Index rank = 0;     // numerical rank of X^T Y
  std::vector<std::string> warnings;
};

inline Eigen::MatrixXd to_eigen(const EmbeddingMatrix& m) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(m.rows()), static_cast<Eigen::Index>(m.dim()));
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.dim(); ++c) out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = m.at(r, c);
  return out;
}

// Orthogonal Procrustes via the SVD X^T Y = U S V^T, W = U V^T.
inline ProcrustesResult procrustes_align(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y) {
  if (X.rows() != Y.rows() || X.cols() != Y.cols())
    throw InputError("procrustes_align: source and target pair matrices differ in shape");
  if (X.rows() < 2) throw InputError("procrustes_align: need at least 2 pairs");
  if (!X.allFinite() || !Y.allFinite()) throw NumericalError("procrustes_align: non-finite seed vectors");
  ProcrustesResult r;
  if (X.rows() < X.cols())
    r.warnings.push_back("only " + std::to_string(X.rows()) + " pairs for dimension " + std::to_string(X.cols()));
  const Eigen::MatrixXd M = X.transpose() * Y;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(M, Eigen::ComputeFullU | Eigen::ComputeFullV);
  r.rank = svd.rank();
  if (r.rank < M.rows())
    r.warnings.push_back("X^T Y is rank deficient (rank " + std::to_string(r.rank) + " of " +
                         std::to_string(M.rows()) + "); the rotation is not unique");
  r.rotation = svd.matrixU() * svd.matrixV().transpose();
  return r;
}

inline ProcrustesResult procrustes_align(const SeedDictionary& seed) {
  return procrustes_align(to_eigen(seed.source), to_eigen(seed.target));
}

// Returns m * W, e.g. mapping source-side vectors into the target space.
inline EmbeddingMatrix apply_rotation(const EmbeddingMatrix& m, const Eigen::MatrixXd& W) {
  if (static_cast<Eigen::Index>(m.dim()) != W.rows())
    throw InputError("apply_rotation: dimension mismatch");
  const Eigen::MatrixXd out = to_eigen(m) * W;
  EmbeddingMatrix res(m.rows(), static_cast<std::size_t>(W.cols()));
  for (std::size_t r = 0; r < res.rows(); ++r)
    for (std::size_t c = 0; c < res.dim(); ++c)
      res.at(r, c) = static_cast<float>(out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)));
  res.meta() = m.meta();
  return res;
}

namespace detail {
inline std::vector<float> parse_floats(std::string_view text, std::size_t lineno) {
  std::vector<float> v;
  std::istringstream in{std::string(text)};
  std::string field;
  while (in >> field) {
    char* end = nullptr;
    const float x = std::strtof(field.c_str(), &end);
    if (end == field.c_str() || *end != '\0')
      throw InputError("line " + std::to_string(lineno) + ": not a number '" + field + "'");
    if (!std::isfinite(x)) throw NumericalError("line " + std::to_string(lineno) + ": non-finite value");
    v.push_back(x);
  }
  return v;
}
}  // namespace detail

// TSV of paired vectors: "<source values>\t<target values>" per line.
inline SeedDictionary load_paired_vectors(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open seed dictionary " + path.string());
  std::vector<float> xs, ys;
  std::size_t dim = 0, rows = 0, lineno = 0;
  std::string line;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw InputError("line " + std::to_string(lineno) + ": expected a tab");
    auto x = detail::parse_floats(std::string_view(line).substr(0, tab), lineno);
    auto y = detail::parse_floats(std::string_view(line).substr(tab + 1), lineno);
    if (x.size() != y.size() || x.empty() || (rows > 0 && x.size() != dim))
      throw InputError("line " + std::to_string(lineno) + ": vector dimensions disagree");
    dim = x.size();
    xs.insert(xs.end(), x.begin(), x.end());
    ys.insert(ys.end(), y.begin(), y.end());
    ++rows;
  }
  return {EmbeddingMatrix(rows, dim, std::move(xs)), EmbeddingMatrix(rows, dim, std::move(ys)), 0};
}

// Word-vector text file ("word v1 ... vd" per line; an optional "count dim"
// first line is skipped).
inline std::unordered_map<std::string, std::vector<float>> load_word_vectors(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open word vectors " + path.string());
  std::unordered_map<std::string, std::vector<float>> out;
  std::string line;
  std::size_t lineno = 0, dim = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto sp = line.find(' ');
    if (sp == std::string::npos) continue;
    auto values = detail::parse_floats(std::string_view(line).substr(sp + 1), lineno);
    if (lineno == 1 && values.size() == 1) continue;  // header
    if (values.empty()) continue;
    if (dim == 0) dim = values.size();
    if (values.size() != dim) throw InputError("line " + std::to_string(lineno) + ": inconsistent dimension");
    out.emplace(line.substr(0, sp), std::move(values));
  }
  return out;
}

// Word-pair TSV ("source_word\ttarget_word") resolved against two word-vector files.
inline SeedDictionary load_seed_dictionary(const std::filesystem::path& pairs,
                                           const std::filesystem::path& source_vectors,
                                           const std::filesystem::path& target_vectors) {
  const auto sv = load_word_vectors(source_vectors);
  const auto tv = load_word_vectors(target_vectors);
  std::ifstream in(pairs);
  if (!in) throw InputError("cannot open word pairs " + pairs.string());
  std::vector<float> xs, ys;
  std::size_t rows = 0, dim = 0, skipped = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto tab = line.find('\t');
    if (tab == std::string::npos) continue;
    auto s = sv.find(line.substr(0, tab));
    auto t = tv.find(line.substr(tab + 1));
    if (s == sv.end() || t == tv.end()) {
      ++skipped;
      continue;
    }
    if (s->second.size() != t->second.size()) throw InputError("source and target word vectors differ in dimension");
    dim = s->second.size();
    xs.insert(xs.end(), s->second.begin(), s->second.end());
    ys.insert(ys.end(), t->second.begin(), t->second.end());
    ++rows;
  }
  return {EmbeddingMatrix(rows, dim, std::move(xs)), EmbeddingMatrix(rows, dim, std::move(ys)), skipped};
}

// Token embeddings of both vocabularies in one coordinate system.
struct AlignedSpaces {
  EmbeddingMatrix source_tok;
  EmbeddingMatrix target_tok;
};

struct WechselConfig {
  std::size_t k = 10;
  double temperature = 1.0;
  Fallback fallback = Fallback::kNormalFromSourceStats;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
};

struct WechselSelection {
  std::vector<TokenId> sources;  // descending similarity, ties by lower id
  std::vector<double> weights;
};

struct WechselResult {
  EmbeddingMatrix embeddings;
  std::vector<WechselSelection> selections;  // empty selection for fallback rows
  std::vector<TokenId> fallback_ids;
};

// For each target token: the k source tokens most cosine-similar in the
// aligned space, weighted by softmax(similarity / temperature), combined
// over source_emb rows.
inline WechselResult wechsel_combine(const AlignedSpaces& aligned, const EmbeddingMatrix& source_emb,
                                     const WechselConfig& cfg = {}) {
  if (cfg.k < 1) throw InputError("wechsel_combine: k must be >= 1");
  if (!(cfg.temperature > 0.0)) throw InputError("wechsel_combine: temperature must be positive");
  if (aligned.source_tok.dim() != aligned.target_tok.dim())
    throw InputError("wechsel_combine: aligned spaces differ in dimension");
  if (aligned.source_tok.rows() != source_emb.rows())
    throw InputError("wechsel_combine: aligned source space has " + std::to_string(aligned.source_tok.rows()) +
                     " rows, source embeddings have " + std::to_string(source_emb.rows()));
  if (source_emb.rows() == 0) throw InputError("wechsel_combine: no source tokens");

  const std::size_t n_src = source_emb.rows();
  const std::size_t n_tgt = aligned.target_tok.rows();
  const std::size_t dim = source_emb.dim();
  const std::size_t k = std::min(cfg.k, n_src);

  std::vector<double> src_norms(n_src);
  for (std::size_t s = 0; s < n_src; ++s) src_norms[s] = norm(aligned.source_tok.row(s));

  WechselResult res;
  res.embeddings = EmbeddingMatrix(n_tgt, dim);
  res.selections.resize(n_tgt);
  std::vector<char> needs_fallback(n_tgt, 0);

  parallel_for_chunks(n_tgt, cfg.threads, [&](std::size_t begin, std::size_t end) {
    std::vector<double> sims(n_src);
    std::vector<TokenId> order(n_src);
    for (std::size_t t = begin; t < end; ++t) {
      auto tv = aligned.target_tok.row(t);
      const double tn = norm(tv);
      if (tn == 0.0) {
        needs_fallback[t] = 1;
        continue;
      }
      for (std::size_t s = 0; s < n_src; ++s) sims[s] = cosine(tv, aligned.source_tok.row(s), tn, src_norms[s]);
      std::iota(order.begin(), order.end(), TokenId{0});
      std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                        [&](TokenId a, TokenId b) { return sims[a] > sims[b] || (sims[a] == sims[b] && a < b); });
      WechselSelection sel;
      sel.sources.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
      const double top = sims[sel.sources.front()] / cfg.temperature;
      double z = 0.0;
      for (TokenId s : sel.sources) {
        sel.weights.push_back(std::exp(sims[s] / cfg.temperature - top));
        z += sel.weights.back();
      }
      for (double& w : sel.weights) w /= z;
      std::vector<double> acc(dim, 0.0);
      for (std::size_t i = 0; i < k; ++i) {
        auto src = source_emb.row(sel.sources[i]);
        for (std::size_t c = 0; c < dim; ++c) acc[c] += sel.weights[i] * static_cast<double>(src[c]);
      }
      auto out = res.embeddings.row(t);
      for (std::size_t c = 0; c < dim; ++c) out[c] = static_cast<float>(acc[c]);
      res.selections[t] = std::move(sel);
    }
  });

  if (std::find(needs_fallback.begin(), needs_fallback.end(), 1) != needs_fallback.end()) {
    if (cfg.fallback == Fallback::kNone)
      throw InputError("wechsel_combine: zero-norm target vectors and fallback is disabled");
    const MatrixStats stats = matrix_stats(source_emb);
    for (std::size_t t = 0; t < n_tgt; ++t) {
      if (!needs_fallback[t]) continue;
      detail::fallback_row(res.embeddings.row(t), source_emb, stats, cfg.fallback, cfg.seed, static_cast<TokenId>(t));
      res.fallback_ids.push_back(static_cast<TokenId>(t));
    }
  }
  if (auto bad = res.embeddings.first_nonfinite_row())
    throw NumericalError("wechsel_combine: non-finite output row " + std::to_string(*bad));
  return res;
}

// Restricts the source side (aligned vectors and embeddings) to `subset`, e.g.
// the tokens of one language. Selections in the result index into `subset`.
inline std::pair<AlignedSpaces, EmbeddingMatrix> restrict_source(const AlignedSpaces& aligned,
                                                                  const EmbeddingMatrix& source_emb,
                                                                  std::span<const TokenId> subset) {
  return {AlignedSpaces{select_rows(aligned.source_tok, subset), aligned.target_tok},
          select_rows(source_emb, subset)};
}

}  // namespace focus
