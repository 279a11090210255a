#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "focus/corpus.hpp"
#include "focus/error.hpp"
#include "focus/matrix.hpp"
#include "focus/parallel.hpp"

namespace focus {

struct TrainConfig {
  std::size_t dim = 300;
  std::size_t window = 5;
  std::size_t negatives = 5;
  std::size_t epochs = 1;
  std::uint64_t min_count = 1;
  double initial_lr = 0.05;
  double subsample_threshold = 1e-4;
  std::uint64_t seed = 1;
  // 1 is the bit-reproducible mode. More threads use lock-free shared updates.
  std::size_t threads = 1;

  void validate() const {
    if (dim < 1 || window < 1 || negatives < 1 || epochs < 1)
      throw InputError("TrainConfig: dim, window, negatives and epochs must all be >= 1");
    if (!(initial_lr > 0.0) || !std::isfinite(initial_lr))
      throw InputError("TrainConfig: initial_lr must be positive");
    if (threads < 1) throw InputError("TrainConfig: threads must be >= 1");
  }
};

inline nlohmann::json to_json(const TrainConfig& c) {
  return {{"dim", c.dim},           {"window", c.window},
          {"negatives", c.negatives}, {"epochs", c.epochs},
          {"min_count", c.min_count}, {"initial_lr", c.initial_lr},
          {"subsample_threshold", c.subsample_threshold},
          {"seed", c.seed},         {"threads", c.threads}};
}

struct AuxiliarySpace {
  EmbeddingMatrix input_vectors;   // F
  EmbeddingMatrix output_vectors;  // context side
  std::vector<bool> trained_mask;
  std::vector<std::uint64_t> token_counts;
};

struct TrainStats {
  std::uint64_t updates = 0;           // (center, context) pairs
  double mean_loss = 0.0;              // over all pairs
  double final_decile_loss = 0.0;      // over pairs in the last 10% of progress
  std::uint64_t final_decile_updates = 0;
  std::size_t trained_tokens = 0;
  std::size_t untrained_tokens = 0;
};

inline constexpr double kSigmoidClamp = 6.0;

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Logistic function with its argument clamped to [-6, 6].
inline double clamped_sigmoid(double x) { return sigmoid(std::clamp(x, -kSigmoidClamp, kSigmoidClamp)); }

// -log(sigmoid(x)) without overflow.
inline double neg_log_sigmoid(double x) {
  return x >= 0 ? std::log1p(std::exp(-x)) : -x + std::log1p(std::exp(x));
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Negative-sampling loss for one center vector, one positive context and a
// set of negative context vectors:
//   -log s(u_pos . v) - sum_n log s(-u_n . v)
inline double skipgram_loss(std::span<const double> center, std::span<const double> positive,
                            const std::vector<std::vector<double>>& negatives) {
  double loss = neg_log_sigmoid(dot(positive, center));
  for (const auto& n : negatives) loss += neg_log_sigmoid(-dot(n, center));
  return loss;
}

struct SkipGramGradients {
  std::vector<double> center;
  std::vector<double> positive;
  std::vector<std::vector<double>> negatives;
};

// Analytic gradients of skipgram_loss.
inline SkipGramGradients skipgram_gradients(std::span<const double> center,
                                            std::span<const double> positive,
                                            const std::vector<std::vector<double>>& negatives) {
  const std::size_t d = center.size();
  SkipGramGradients g;
  g.center.assign(d, 0.0);
  const double gp = sigmoid(dot(positive, center)) - 1.0;
  g.positive.resize(d);
  for (std::size_t i = 0; i < d; ++i) {
    g.center[i] += gp * positive[i];
    g.positive[i] = gp * center[i];
  }
  for (const auto& n : negatives) {
    const double gn = sigmoid(dot(n, center));
    std::vector<double> gneg(d);
    for (std::size_t i = 0; i < d; ++i) {
      g.center[i] += gn * n[i];
      gneg[i] = gn * center[i];
    }
    g.negatives.push_back(std::move(gneg));
  }
  return g;
}

// Draws token ids with probability proportional to count^0.75 over tokens
// with a nonzero weight.
class NegativeSampler {
 public:
  explicit NegativeSampler(std::span<const std::uint64_t> counts, double power = 0.75) {
    cumulative_.reserve(counts.size());
    double total = 0.0;
    for (std::size_t i = 0; i < counts.size(); ++i) {
      if (counts[i] > 0) {
        total += std::pow(static_cast<double>(counts[i]), power);
        ids_.push_back(static_cast<TokenId>(i));
        cumulative_.push_back(total);
      }
    }
    if (ids_.empty()) throw InputError("negative sampler needs at least one token with nonzero count");
    total_ = total;
  }

  template <typename Rng>
  TokenId sample(Rng& rng) const {
    const double u = std::uniform_real_distribution<double>(0.0, total_)(rng);
    auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
    if (it == cumulative_.end()) --it;
    return ids_[static_cast<std::size_t>(it - cumulative_.begin())];
  }

  // Probability of each id (zero for ids never sampled).
  std::vector<double> probabilities(std::size_t vocab_size) const {
    std::vector<double> p(vocab_size, 0.0);
    double prev = 0.0;
    for (std::size_t i = 0; i < ids_.size(); ++i) {
      p[ids_[i]] = (cumulative_[i] - prev) / total_;
      prev = cumulative_[i];
    }
    return p;
  }

 private:
  std::vector<TokenId> ids_;
  std::vector<double> cumulative_;
  double total_ = 0.0;
};

namespace detail {

template <bool Shared>
inline float load(float& x) {
  if constexpr (Shared) return std::atomic_ref<float>(x).load(std::memory_order_relaxed);
  else return x;
}

template <bool Shared>
inline void store(float& x, float v) {
  if constexpr (Shared) std::atomic_ref<float>(x).store(v, std::memory_order_relaxed);
  else x = v;
}

struct LossAccumulator {
  double sum = 0.0;
  std::uint64_t count = 0;
  double final_sum = 0.0;
  std::uint64_t final_count = 0;
};

template <bool Shared>
class SkipGramKernel {
 public:
  SkipGramKernel(AuxiliarySpace& space, const NegativeSampler& sampler, const TrainConfig& cfg)
      : in_(space.input_vectors), out_(space.output_vectors), sampler_(sampler), cfg_(cfg),
        hidden_(cfg.dim), grad_(cfg.dim) {}

  // One SGD step for (center, context) plus negatives. Returns the pair loss.
  template <typename Rng>
  double update(TokenId center, TokenId context, double lr, Rng& rng) {
    const std::size_t d = cfg_.dim;
    auto v = in_.row(center);
    for (std::size_t i = 0; i < d; ++i) hidden_[i] = load<Shared>(v[i]);
    std::fill(grad_.begin(), grad_.end(), 0.0f);

    double loss = 0.0;
    for (std::size_t n = 0; n <= cfg_.negatives; ++n) {
      TokenId target = context;
      double label = 1.0;
      if (n > 0) {
        target = sampler_.sample(rng);
        if (target == context) continue;
        label = 0.0;
      }
      auto u = out_.row(target);
      double f = 0.0;
      for (std::size_t i = 0; i < d; ++i) f += static_cast<double>(hidden_[i]) * load<Shared>(u[i]);
      const double clamped = std::clamp(f, -kSigmoidClamp, kSigmoidClamp);
      loss += label > 0.5 ? neg_log_sigmoid(clamped) : neg_log_sigmoid(-clamped);
      const auto g = static_cast<float>((label - sigmoid(clamped)) * lr);
      for (std::size_t i = 0; i < d; ++i) {
        const float ui = load<Shared>(u[i]);
        grad_[i] += g * ui;
        store<Shared>(u[i], ui + g * hidden_[i]);
      }
    }
    for (std::size_t i = 0; i < d; ++i) store<Shared>(v[i], load<Shared>(v[i]) + grad_[i]);
    return loss;
  }

 private:
  EmbeddingMatrix& in_;
  EmbeddingMatrix& out_;
  const NegativeSampler& sampler_;
  const TrainConfig& cfg_;
  std::vector<float> hidden_;
  std::vector<float> grad_;
};

// Trains over sequences [begin, end) for one epoch; `processed` counts corpus
// tokens across all workers and drives the linear learning-rate decay.
template <bool Shared, typename Counter>
void train_range(const std::vector<std::vector<TokenId>>& seqs, std::size_t begin, std::size_t end,
                 const std::vector<std::uint64_t>& counts, std::uint64_t effective_total,
                 std::uint64_t schedule_total, SkipGramKernel<Shared>& kernel, const TrainConfig& cfg,
                 std::mt19937_64& rng, Counter& processed, LossAccumulator& acc) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> window_dist(1, cfg.window);
  const double t = cfg.subsample_threshold * static_cast<double>(effective_total);
  std::vector<TokenId> kept;
  for (std::size_t s = begin; s < end; ++s) {
    kept.clear();
    for (TokenId id : seqs[s]) {
      if (counts[id] == 0) continue;  // below min_count or unseen
      if (cfg.subsample_threshold > 0.0) {
        const double f = static_cast<double>(counts[id]);
        const double keep = (std::sqrt(f / t) + 1.0) * t / f;
        if (keep < unit(rng)) continue;
      }
      kept.push_back(id);
    }
    const std::uint64_t done = processed.fetch_add(seqs[s].size());
    const double progress = static_cast<double>(done) / static_cast<double>(schedule_total + 1);
    const double lr = cfg.initial_lr * std::max(1.0 - progress, 1e-4);
    const bool final_decile = progress >= 0.9;
    for (std::size_t i = 0; i < kept.size(); ++i) {
      const std::size_t b = window_dist(rng);
      const std::size_t lo = i >= b ? i - b : 0;
      const std::size_t hi = std::min(kept.size() - 1, i + b);
      for (std::size_t j = lo; j <= hi; ++j) {
        if (j == i) continue;
        const double loss = kernel.update(kept[i], kept[j], lr, rng);
        acc.sum += loss;
        ++acc.count;
        if (final_decile) {
          acc.final_sum += loss;
          ++acc.final_count;
        }
      }
    }
  }
}

struct PlainCounter {
  std::uint64_t value = 0;
  std::uint64_t fetch_add(std::uint64_t n) {
    const std::uint64_t old = value;
    value += n;
    return old;
  }
};

}  // namespace detail

// Skip-gram with negative sampling over token ids. Input vectors start
// uniform in [-0.5/dim, 0.5/dim] and output vectors at zero; tokens below
// min_count (or absent from the corpus) keep their initial rows and are
// flagged untrained.
inline AuxiliarySpace train_skipgram(const Corpus& corpus, const TrainConfig& cfg,
                                     TrainStats* stats = nullptr) {
  cfg.validate();
  const std::size_t vocab = corpus.token_counts.size();
  AuxiliarySpace space;
  space.token_counts = corpus.token_counts;
  space.trained_mask.assign(vocab, false);

  std::vector<std::uint64_t> effective(vocab, 0);
  std::uint64_t effective_total = 0;
  for (std::size_t i = 0; i < vocab; ++i) {
    if (corpus.token_counts[i] > 0 && corpus.token_counts[i] >= cfg.min_count) {
      effective[i] = corpus.token_counts[i];
      effective_total += effective[i];
    }
  }
  if (effective_total == 0) throw InputError("empty effective vocabulary");

  std::mt19937_64 rng(cfg.seed);
  space.input_vectors = EmbeddingMatrix(vocab, cfg.dim);
  const float half = 0.5f / static_cast<float>(cfg.dim);
  std::uniform_real_distribution<float> init(-half, half);
  for (float& x : space.input_vectors.data()) x = init(rng);
  space.output_vectors = EmbeddingMatrix(vocab, cfg.dim, 0.0f);

  const NegativeSampler sampler(effective);
  const std::uint64_t per_epoch = corpus.total_tokens();
  const std::uint64_t schedule_total = per_epoch * cfg.epochs;
  detail::LossAccumulator total;

  if (cfg.threads <= 1) {
    detail::SkipGramKernel<false> kernel(space, sampler, cfg);
    detail::PlainCounter processed;
    for (std::size_t e = 0; e < cfg.epochs; ++e)
      detail::train_range<false>(corpus.sequences, 0, corpus.sequences.size(), effective, effective_total,
                                 schedule_total, kernel, cfg, rng, processed, total);
  } else {
    std::atomic<std::uint64_t> processed{0};
    const std::size_t workers = std::min(cfg.threads, std::max<std::size_t>(1, corpus.sequences.size()));
    std::vector<detail::LossAccumulator> accs(workers);
    for (std::size_t e = 0; e < cfg.epochs; ++e) {
      parallel_for_chunks(workers, workers, [&](std::size_t wb, std::size_t we) {
        for (std::size_t w = wb; w < we; ++w) {
          const std::size_t n = corpus.sequences.size();
          const std::size_t begin = n * w / workers;
          const std::size_t end = n * (w + 1) / workers;
          std::mt19937_64 local(cfg.seed + 0x9E3779B97F4A7C15ull * (e * workers + w + 1));
          detail::SkipGramKernel<true> kernel(space, sampler, cfg);
          detail::train_range<true>(corpus.sequences, begin, end, effective, effective_total,
                                    schedule_total, kernel, cfg, local, processed, accs[w]);
        }
      });
    }
    for (const auto& a : accs) {
      total.sum += a.sum;
      total.count += a.count;
      total.final_sum += a.final_sum;
      total.final_count += a.final_count;
    }
  }

  for (std::size_t i = 0; i < vocab; ++i) space.trained_mask[i] = effective[i] > 0;
  if (auto bad = space.input_vectors.first_nonfinite_row())
    throw NumericalError("skip-gram training produced a non-finite vector for token " + std::to_string(*bad));

  if (stats) {
    stats->updates = total.count;
    stats->mean_loss = total.count ? total.sum / static_cast<double>(total.count) : 0.0;
    stats->final_decile_updates = total.final_count;
    stats->final_decile_loss = total.final_count ? total.final_sum / static_cast<double>(total.final_count) : 0.0;
    stats->trained_tokens = static_cast<std::size_t>(std::count(space.trained_mask.begin(), space.trained_mask.end(), true));
    stats->untrained_tokens = vocab - stats->trained_tokens;
  }
  return space;
}

// Persists as <dir>/input.vtm, <dir>/output.vtm and <dir>/aux.json.
inline void save_auxiliary(const AuxiliarySpace& space, const std::filesystem::path& dir,
                           const nlohmann::json& extra = nlohmann::json::object()) {
  std::filesystem::create_directories(dir);
  save_matrix(space.input_vectors, dir / "input.vtm");
  save_matrix(space.output_vectors, dir / "output.vtm");
  nlohmann::json side = extra;
  side["format_version"] = 1;
  side["trained_mask"] = space.trained_mask;
  side["token_counts"] = space.token_counts;
  std::ofstream out(dir / "aux.json");
  if (!out) throw InputError("cannot write " + (dir / "aux.json").string());
  out << side.dump(2) << '\n';
}

inline AuxiliarySpace load_auxiliary(const std::filesystem::path& dir) {
  AuxiliarySpace space;
  space.input_vectors = load_matrix(dir / "input.vtm");
  space.output_vectors = load_matrix(dir / "output.vtm");
  std::ifstream in(dir / "aux.json");
  if (!in) throw InputError("cannot open " + (dir / "aux.json").string());
  try {
    const auto side = nlohmann::json::parse(in);
    space.trained_mask = side.at("trained_mask").get<std::vector<bool>>();
    if (side.contains("token_counts"))
      space.token_counts = side.at("token_counts").get<std::vector<std::uint64_t>>();
  } catch (const nlohmann::json::exception& e) {
    throw InputError("invalid aux.json: " + std::string(e.what()));
  }
  const std::size_t n = space.input_vectors.rows();
  if (space.output_vectors.rows() != n || space.trained_mask.size() != n ||
      space.output_vectors.dim() != space.input_vectors.dim())
    throw InputError("auxiliary space files disagree on shape");
  if (space.token_counts.empty()) space.token_counts.assign(n, 0);
  return space;
}

}  // namespace focus
