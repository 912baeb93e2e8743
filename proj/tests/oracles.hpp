#pragma once

// Independent reference computations used only by tests. Nothing here calls
// into the code paths it is used to check.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <vector>

#include "ope/ranking.hpp"
#include "ope/rng.hpp"

namespace ope::oracle {

using Dense = std::vector<std::vector<double>>;

inline Dense zeros(std::size_t n) { return Dense(n, std::vector<double>(n, 0.0)); }

/// Random permutation vector by Fisher-Yates.
inline std::vector<std::size_t> random_perm(std::size_t n, Rng& rng) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.uniform() * static_cast<double>(i));
    std::swap(v[i - 1], v[j]);
  }
  return v;
}

/// Random doubly-stochastic matrix as a normalized mixture of `terms`
/// random permutation matrices.
inline Dense random_doubly_stochastic(std::size_t n, std::size_t terms, Rng& rng) {
  std::vector<double> w(terms);
  double total = 0.0;
  for (double& x : w) total += (x = 0.05 + rng.uniform());
  Dense m = zeros(n);
  for (std::size_t t = 0; t < terms; ++t) {
    const auto p = random_perm(n, rng);
    for (std::size_t i = 0; i < n; ++i) m[i][p[i]] += w[t] / total;
  }
  return m;
}

/// Sequential remove-and-insert of each (item, 1-based target), list order.
inline std::vector<std::size_t> pin_by_erase_insert(
    std::vector<std::size_t> shown, const std::vector<std::pair<std::size_t, std::size_t>>& pins) {
  for (const auto& [item, target] : pins) {
    auto it = std::find(shown.begin(), shown.end(), item);
    shown.erase(it);
    shown.insert(shown.begin() + static_cast<std::ptrdiff_t>(target - 1), item);
  }
  return shown;
}

/// Standard normal CDF.
inline double phi(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

}  // namespace ope::oracle
