#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "focus/baselines.hpp"
#include "oracles.hpp"

using namespace focus;

namespace {

Eigen::MatrixXd to_eigen(const std::vector<std::vector<double>>& rows) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows.size(); ++c) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
  return m;
}

Eigen::MatrixXd gaussian(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = nd(rng);
  return m;
}

std::filesystem::path temp_file(const std::string& name, const std::string& content) {
  auto p = std::filesystem::temp_directory_path() / ("focus_baselines_" + name);
  std::ofstream(p) << content;
  return p;
}

}  // namespace

TEST(Shuffle, DeterministicPermutation) {
  auto src = oracle::random_matrix(30, 4, 1);
  auto a = shuffle_initialize(src, 30, 42);
  auto b = shuffle_initialize(src, 30, 42);
  auto c = shuffle_initialize(src, 30, 43);
  EXPECT_TRUE(a.bit_equal(b));
  EXPECT_FALSE(a.bit_equal(c));
  auto rows = shuffle_assignment(30, 30, 42);
  EXPECT_EQ(std::set<std::size_t>(rows.begin(), rows.end()).size(), 30u);
  for (std::size_t i = 0; i < 30; ++i) EXPECT_TRUE(rows_bit_equal(a.row(i), src.row(rows[i])));
}

TEST(Shuffle, SmallerAndLargerTargets) {
  auto small = shuffle_assignment(10, 4, 7);
  EXPECT_EQ(std::set<std::size_t>(small.begin(), small.end()).size(), 4u);
  auto large = shuffle_assignment(10, 25, 7);
  for (std::size_t i = 10; i < 25; ++i) EXPECT_EQ(large[i], large[i % 10]);
  EXPECT_EQ(std::set<std::size_t>(large.begin(), large.begin() + 10).size(), 10u);
  EXPECT_THROW(shuffle_assignment(10, 0, 1), InputError);
  EXPECT_THROW(shuffle_assignment(0, 3, 1), InputError);
}

TEST(Procrustes, IdentityWhenSpacesAgree) {
  auto X = gaussian(50, 8, 3);
  auto r = procrustes_align(X, X);
  EXPECT_LT((r.rotation - Eigen::MatrixXd::Identity(8, 8)).norm(), 1e-9);
  EXPECT_TRUE(r.warnings.empty());
}

TEST(Procrustes, RecoversRotation) {
  auto R = to_eigen(oracle::random_orthogonal(20, 11));
  auto X = gaussian(500, 20, 12);
  Eigen::MatrixXd Y = X * R;
  auto r = procrustes_align(X, Y);
  EXPECT_LT((r.rotation - R).norm(), 1e-6);
  EXPECT_LT((r.rotation.transpose() * r.rotation - Eigen::MatrixXd::Identity(20, 20)).norm(), 1e-9);
}

TEST(Procrustes, CoordinateSwap) {
  Eigen::MatrixXd X(2, 2), Y(2, 2);
  X << 1, 0, 0, 1;
  Y << 0, 1, 1, 0;
  auto r = procrustes_align(X, Y);
  EXPECT_LT((r.rotation - Y).norm(), 1e-12);
}

TEST(Procrustes, OptimalAmongRandomOrthogonalMatrices) {
  auto X = gaussian(40, 6, 21);
  auto Y = gaussian(40, 6, 22);
  auto r = procrustes_align(X, Y);
  const double best = (X * r.rotation - Y).norm();
  for (std::uint64_t s = 0; s < 100; ++s) {
    auto Q = to_eigen(oracle::random_orthogonal(6, 100 + s));
    EXPECT_LE(best, (X * Q - Y).norm() + 1e-9);
  }
}

TEST(Procrustes, DegenerateInputs) {
  EXPECT_THROW(procrustes_align(gaussian(1, 3, 1), gaussian(1, 3, 2)), InputError);
  EXPECT_THROW(procrustes_align(gaussian(4, 3, 1), gaussian(4, 2, 2)), InputError);
  auto r = procrustes_align(gaussian(3, 5, 1), gaussian(3, 5, 2));
  EXPECT_FALSE(r.warnings.empty());
  EXPECT_LT((r.rotation.transpose() * r.rotation - Eigen::MatrixXd::Identity(5, 5)).norm(), 1e-9);
}

TEST(Procrustes, ApplyRotationMatchesEigenProduct) {
  auto m = oracle::random_matrix(5, 3, 4);
  auto W = to_eigen(oracle::random_orthogonal(3, 5));
  auto out = apply_rotation(m, W);
  Eigen::MatrixXd ref = to_eigen(m) * W;
  for (std::size_t r = 0; r < 5; ++r)
    for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(out.at(r, c), ref(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)), 1e-6);
}

TEST(Wechsel, TopOneCopiesNearestSourceRow) {
  auto aligned_src = oracle::random_matrix(20, 5, 1);
  auto aligned_tgt = oracle::random_matrix(8, 5, 2);
  auto emb = oracle::random_matrix(20, 7, 3);
  WechselConfig cfg;
  cfg.k = 1;
  auto res = wechsel_combine({aligned_src, aligned_tgt}, emb, cfg);
  for (std::size_t t = 0; t < 8; ++t) {
    std::size_t best = 0;
    for (std::size_t s = 1; s < 20; ++s)
      if (oracle::naive_cosine(aligned_src.row(s), aligned_tgt.row(t)) >
          oracle::naive_cosine(aligned_src.row(best), aligned_tgt.row(t)))
        best = s;
    ASSERT_EQ(res.selections[t].sources, (std::vector<TokenId>{static_cast<TokenId>(best)}));
    EXPECT_TRUE(rows_bit_equal(res.embeddings.row(t), emb.row(best)));
  }
}

TEST(Wechsel, TiedNeighboursAverage) {
  EmbeddingMatrix src_tok(3, 2, {1, 0, 0, 1, -1, -1});
  EmbeddingMatrix tgt_tok(1, 2, {1, 1});
  EmbeddingMatrix emb(3, 2, {0, 0, 2, 4, 100, 100});
  WechselConfig cfg;
  cfg.k = 2;
  auto res = wechsel_combine({src_tok, tgt_tok}, emb, cfg);
  EXPECT_EQ(res.selections[0].sources, (std::vector<TokenId>{0, 1}));
  EXPECT_NEAR(res.embeddings.at(0, 0), 1.0f, 1e-6);
  EXPECT_NEAR(res.embeddings.at(0, 1), 2.0f, 1e-6);
}

TEST(Wechsel, MatchesFullSortReference) {
  auto src = oracle::random_matrix(50, 10, 7);
  auto tgt = oracle::random_matrix(30, 10, 8);
  auto emb = oracle::random_matrix(50, 6, 9);
  for (double temperature : {0.1, 1.0, 3.0}) {
    WechselConfig cfg;
    cfg.k = 3;
    cfg.temperature = temperature;
    auto res = wechsel_combine({src, tgt}, emb, cfg);
    for (std::size_t t = 0; t < 30; ++t) {
      auto ref = oracle::wechsel_row(src, tgt.row(t), emb, 3, temperature);
      for (std::size_t c = 0; c < 6; ++c) EXPECT_NEAR(res.embeddings.at(t, c), ref[c], 1e-6 * std::max(1.0, std::abs(ref[c])));
      double sum = 0;
      for (double w : res.selections[t].weights) sum += w;
      EXPECT_NEAR(sum, 1.0, 1e-12);
    }
  }
}

TEST(Wechsel, ThreadCountDoesNotChangeOutput) {
  auto src = oracle::random_matrix(40, 6, 1);
  auto tgt = oracle::random_matrix(33, 6, 2);
  auto emb = oracle::random_matrix(40, 4, 3);
  WechselConfig cfg;
  auto a = wechsel_combine({src, tgt}, emb, cfg);
  cfg.threads = 4;
  auto b = wechsel_combine({src, tgt}, emb, cfg);
  EXPECT_TRUE(a.embeddings.bit_equal(b.embeddings));
}

TEST(Wechsel, ZeroTargetVectorUsesFallback) {
  auto src = oracle::random_matrix(10, 3, 1);
  EmbeddingMatrix tgt(2, 3, {0, 0, 0, 1, 2, 3});
  auto emb = oracle::random_matrix(10, 3, 2);
  auto res = wechsel_combine({src, tgt}, emb, {});
  EXPECT_EQ(res.fallback_ids, (std::vector<TokenId>{0}));
  EXPECT_TRUE(res.selections[0].sources.empty());
  WechselConfig none;
  none.fallback = Fallback::kNone;
  EXPECT_THROW(wechsel_combine({src, tgt}, emb, none), InputError);
}

TEST(Wechsel, RestrictedSourceIndexesSubset) {
  auto src = oracle::random_matrix(12, 4, 1);
  auto tgt = oracle::random_matrix(5, 4, 2);
  auto emb = oracle::random_matrix(12, 3, 3);
  std::vector<TokenId> subset{1, 4, 9};
  auto [aligned, sub_emb] = restrict_source({src, tgt}, emb, subset);
  auto res = wechsel_combine(aligned, sub_emb, {});
  for (std::size_t t = 0; t < 5; ++t) {
    EXPECT_EQ(res.selections[t].sources.size(), 3u);
    auto ref = oracle::wechsel_row(aligned.source_tok, tgt.row(t), sub_emb, 3, 1.0);
    for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(res.embeddings.at(t, c), ref[c], 1e-6);
  }
}

TEST(Wechsel, InvalidConfig) {
  auto src = oracle::random_matrix(4, 2, 1);
  WechselConfig cfg;
  cfg.k = 0;
  EXPECT_THROW(wechsel_combine({src, src}, src, cfg), InputError);
  cfg.k = 1;
  cfg.temperature = 0;
  EXPECT_THROW(wechsel_combine({src, src}, src, cfg), InputError);
  EXPECT_THROW(wechsel_combine({src, src}, oracle::random_matrix(5, 2, 1), {}), InputError);
}

TEST(Loaders, PairedVectors) {
  auto p = temp_file("pairs.tsv", "1 0\t0 1\n0 1\t1 0\n\n");
  auto d = load_paired_vectors(p);
  EXPECT_EQ(d.source.rows(), 2u);
  EXPECT_EQ(d.target.at(0, 1), 1.0f);
  auto bad = temp_file("bad.tsv", "1 0\t0\n");
  EXPECT_THROW(load_paired_vectors(bad), InputError);
  auto nan = temp_file("nan.tsv", "1 nan\t0 1\n");
  EXPECT_THROW(load_paired_vectors(nan), NumericalError);
}

TEST(Loaders, SeedDictionaryFromWordVectors) {
  auto sv = temp_file("src.vec", "3 2\nhouse 1 0\ndog 0 1\ncat 1 1\n");
  auto tv = temp_file("tgt.vec", "haus 0 1\nhund 1 0\n");
  auto pairs = temp_file("pairs.txt", "house\thaus\ndog\thund\ncat\tkatze\n");
  auto d = load_seed_dictionary(pairs, sv, tv);
  EXPECT_EQ(d.source.rows(), 2u);
  EXPECT_EQ(d.skipped_pairs, 1u);
  EXPECT_EQ(d.source.at(1, 1), 1.0f);
  EXPECT_EQ(d.target.at(1, 0), 1.0f);
  auto r = procrustes_align(d);
  EXPECT_EQ(r.rotation.rows(), 2);
}
