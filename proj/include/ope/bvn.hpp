#pragma once

// Birkhoff-von Neumann decomposition of doubly-stochastic propensity
// matrices and sampling of the resulting randomization.

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <vector>

#include "ope/error.hpp"
#include "ope/ranking.hpp"
#include "ope/rng.hpp"

namespace ope {

struct BvnComponent {
  Permutation permutation;
  double probability = 0.0;

  friend bool operator==(const BvnComponent&, const BvnComponent&) = default;
};

/// P = sum_m p_m * Pi_m with sum_m p_m = 1. Permutations act on slots, so a
/// matrix entry (s, k) is the probability that the ranker's slot s is shown
/// at slot k.
class BvnDecomposition {
 public:
  BvnDecomposition() = default;
  explicit BvnDecomposition(std::vector<BvnComponent> components,
                            double tol = kStochasticTolerance)
      : components_(std::move(components)) {
    if (components_.empty()) throw Error("BvN decomposition has no components");
    const std::size_t n = components_.front().permutation.size();
    double total = 0.0;
    for (const auto& c : components_) {
      if (c.permutation.size() != n) throw Error("BvN components differ in length");
      if (!(c.probability > 0.0) || c.probability > 1.0 + tol)
        throw Error("BvN component probability outside (0,1]");
      total += c.probability;
    }
    if (std::abs(total - 1.0) > tol) throw Error("BvN probabilities do not sum to 1");
  }

  std::size_t n() const noexcept {
    return components_.empty() ? 0 : components_.front().permutation.size();
  }
  std::size_t size() const noexcept { return components_.size(); }
  const BvnComponent& operator[](std::size_t m) const { return components_[m]; }
  const std::vector<BvnComponent>& components() const noexcept { return components_; }

  friend bool operator==(const BvnDecomposition&, const BvnDecomposition&) = default;

 private:
  std::vector<BvnComponent> components_;
};

namespace detail {

inline constexpr std::size_t kUnmatched = std::numeric_limits<std::size_t>::max();

class SupportMatching {
 public:
  SupportMatching(const Matrix& w, double threshold)
      : n_(w.size()),
        adj_(n_ * n_),
        col_of_row_(n_, kUnmatched),
        row_of_col_(n_, kUnmatched),
        seen_(n_) {
    for (std::size_t i = 0; i < n_; ++i)
      for (std::size_t c = 0; c < n_; ++c) adj_[i * n_ + c] = w(i, c) > threshold;
  }

  // Lexicographically first perfect matching in (row, column) scan order:
  // row 0 gets the smallest column that still admits a perfect matching,
  // then row 1, and so on.
  std::optional<std::vector<std::size_t>> solve() {
    for (std::size_t i = 0; i < n_; ++i) {
      std::fill(seen_.begin(), seen_.end(), false);
      if (!augment(i)) return std::nullopt;
    }
    for (std::size_t i = 0; i < n_; ++i) {
      const std::size_t current = col_of_row_[i];
      for (std::size_t c = 0; c < current; ++c) {
        if (!edge(i, c)) continue;
        const std::size_t r = row_of_col_[c];
        if (r < i) continue;
        std::fill(seen_.begin(), seen_.end(), false);
        seen_[c] = true;
        if (reroute(r, current, i)) {
          col_of_row_[i] = c;
          row_of_col_[c] = i;
          break;
        }
      }
    }
    return col_of_row_;
  }

 private:
  bool edge(std::size_t r, std::size_t c) const { return adj_[r * n_ + c]; }

  bool augment(std::size_t r) {
    for (std::size_t c = 0; c < n_; ++c) {
      if (!edge(r, c) || seen_[c]) continue;
      seen_[c] = true;
      if (row_of_col_[c] == kUnmatched || augment(row_of_col_[c])) {
        col_of_row_[r] = c;
        row_of_col_[c] = r;
        return true;
      }
    }
    return false;
  }

  // Alternating path from row r to the column `target`, touching only rows
  // after `fixed`.
  bool reroute(std::size_t r, std::size_t target, std::size_t fixed) {
    for (std::size_t c = 0; c < n_; ++c) {
      if (!edge(r, c) || seen_[c]) continue;
      seen_[c] = true;
      const std::size_t next = row_of_col_[c];
      if (c == target || (next > fixed && reroute(next, target, fixed))) {
        col_of_row_[r] = c;
        row_of_col_[c] = r;
        return true;
      }
    }
    return false;
  }

  std::size_t n_;
  std::vector<bool> adj_;
  std::vector<std::size_t> col_of_row_;
  std::vector<std::size_t> row_of_col_;
  std::vector<bool> seen_;
};

}  // namespace detail

/// Greedy Birkhoff construction: repeatedly match the support (entries > tol),
/// peel off the smallest matched entry as a component weight, and stop once
/// the remaining mass is below tol. Leftover mass up to tol*n is discarded and
/// the weights are renormalized. Produces at most (n-1)^2 + 1 components.
inline BvnDecomposition decompose(const Matrix& p, double tol = kStochasticTolerance) {
  if (auto rep = check_doubly_stochastic(p, tol); !rep)
    throw Error("decompose: input is not doubly stochastic: " + rep.message);
  const std::size_t n = p.size();
  if (n == 0) throw Error("decompose: empty matrix");

  Matrix residual = p;
  std::vector<BvnComponent> components;
  double remaining = 1.0;
  while (remaining > tol) {
    auto match = detail::SupportMatching(residual, tol).solve();
    if (!match) {
      if (remaining <= tol * static_cast<double>(n)) break;
      throw Error("decompose: no perfect matching on the support graph");
    }
    double q = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) q = std::min(q, residual(i, (*match)[i]));
    for (std::size_t i = 0; i < n; ++i) {
      double& v = residual(i, (*match)[i]);
      v = (v == q) ? 0.0 : v - q;
    }
    remaining -= q;
    components.push_back({Permutation(std::move(*match)), q});
    if (components.size() > n * n) throw Error("decompose: component bound exceeded");
  }

  double total = 0.0;
  for (const auto& c : components) total += c.probability;
  for (auto& c : components) c.probability /= total;
  return BvnDecomposition(std::move(components), tol);
}

/// sum_m p_m * Pi_m.
inline Matrix reconstruct(const BvnDecomposition& d) {
  Matrix m(d.n());
  for (const auto& c : d.components())
    for (std::size_t s = 0; s < d.n(); ++s) m(s, c.permutation[s]) += c.probability;
  return m;
}

struct BvnDraw {
  const Permutation& permutation;
  std::size_t index;
};

/// Draws component m with probability p_m.
inline BvnDraw sample(const BvnDecomposition& d, Rng& rng) {
  if (d.size() == 0) throw Error("sample: empty decomposition");
  const double u = rng.uniform();
  double acc = 0.0;
  for (std::size_t m = 0; m < d.size(); ++m) {
    acc += d[m].probability;
    if (u < acc) return {d[m].permutation, m};
  }
  // u landed in the rounding gap above the last cumulative sum.
  return {d[d.size() - 1].permutation, d.size() - 1};
}

/// Keeps each slot in place with probability `stay` and moves it to each
/// other slot with probability (1 - stay)/(n - 1).
inline Matrix stay_probability_matrix(std::size_t n, double stay) {
  if (n < 2) throw Error("stay_probability_matrix: n must be >= 2");
  if (!(stay > 0.0 && stay <= 1.0)) throw Error("stay_probability_matrix: stay outside (0,1]");
  const double off = (1.0 - stay) / static_cast<double>(n - 1);
  Matrix m(n, off);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = stay;
  return m;
}

}  // namespace ope
