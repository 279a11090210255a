#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <vector>

#include "focus/error.hpp"

namespace focus {

// Euclidean projection of z onto the probability simplex.
//
// Sort z descending (ties keep index order), take the largest k with
// 1 + k * z_(k) > sum_{j<=k} z_(j), set tau = (sum_{j<=k} z_(j) - 1) / k and
// return max(z_i - tau, 0). Entries exactly at tau get zero mass.
template <typename T>
std::vector<double> sparsemax(std::span<const T> z) {
  if (z.empty()) throw InputError("sparsemax of an empty vector");
  for (const T v : z)
    if (!std::isfinite(static_cast<double>(v))) throw NumericalError("sparsemax input is not finite");

  std::vector<std::size_t> order(z.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return static_cast<double>(z[a]) > static_cast<double>(z[b]);
  });

  double cumsum = 0.0;
  double support_sum = 0.0;
  std::size_t k = 0;
  for (std::size_t i = 0; i < order.size(); ++i) {
    const double zi = static_cast<double>(z[order[i]]);
    cumsum += zi;
    if (1.0 + static_cast<double>(i + 1) * zi > cumsum) {
      k = i + 1;
      support_sum = cumsum;
    }
  }
  // k >= 1 always: the largest element satisfies 1 + z_(1) > z_(1).
  const double tau = (support_sum - 1.0) / static_cast<double>(k);

  std::vector<double> p(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) p[i] = std::max(static_cast<double>(z[i]) - tau, 0.0);
  return p;
}

inline std::vector<double> sparsemax(const std::vector<double>& z) {
  return sparsemax(std::span<const double>(z));
}

}  // namespace focus
