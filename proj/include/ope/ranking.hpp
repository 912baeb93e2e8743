#pragma once

// Rankings, position permutations and dense propensity matrices.
//
// Storage is 0-based throughout. Wherever a value is called a "position" in
// a user-facing formula (bias curve b_k, DCG weight, pin targets) it is
// 1-based and documented as such at that API.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ope/error.hpp"

namespace ope {

using Item = std::size_t;

namespace detail {

inline bool is_bijection(std::span<const std::size_t> v) {
  std::vector<bool> seen(v.size(), false);
  for (std::size_t x : v) {
    if (x >= v.size() || seen[x]) return false;
    seen[x] = true;
  }
  return true;
}

}  // namespace detail

/// A ranking lists the item shown at each position (0-based slot index).
class Ranking {
 public:
  Ranking() = default;
  explicit Ranking(std::vector<Item> items_by_position)
      : items_(std::move(items_by_position)) {
    if (!detail::is_bijection(items_))
      throw Error("ranking is not a permutation of 0..n-1");
  }

  static Ranking identity(std::size_t n) {
    std::vector<Item> v(n);
    std::iota(v.begin(), v.end(), Item{0});
    return Ranking(std::move(v));
  }

  std::size_t size() const noexcept { return items_.size(); }
  Item operator[](std::size_t slot) const { return items_[slot]; }
  std::span<const Item> items() const noexcept { return items_; }

  /// Slot (0-based) of every item: result[item] = slot.
  std::vector<std::size_t> slots() const {
    std::vector<std::size_t> s(items_.size());
    for (std::size_t k = 0; k < items_.size(); ++k) s[items_[k]] = k;
    return s;
  }

  friend bool operator==(const Ranking&, const Ranking&) = default;

 private:
  std::vector<Item> items_;
};

/// Position-level action: the entry at source slot s moves to slot dest[s].
class Permutation {
 public:
  Permutation() = default;
  explicit Permutation(std::vector<std::size_t> dest_by_source)
      : dest_(std::move(dest_by_source)) {
    if (!detail::is_bijection(dest_))
      throw Error("permutation is not a bijection");
  }

  static Permutation identity(std::size_t n) {
    std::vector<std::size_t> v(n);
    std::iota(v.begin(), v.end(), std::size_t{0});
    return Permutation(std::move(v));
  }

  std::size_t size() const noexcept { return dest_.size(); }
  std::size_t operator[](std::size_t source) const { return dest_[source]; }
  std::span<const std::size_t> dest_by_source() const noexcept { return dest_; }

  bool is_identity() const noexcept {
    for (std::size_t s = 0; s < dest_.size(); ++s)
      if (dest_[s] != s) return false;
    return true;
  }

  friend bool operator==(const Permutation&, const Permutation&) = default;

 private:
  std::vector<std::size_t> dest_;
};

inline Ranking apply_permutation(const Ranking& r, const Permutation& p) {
  if (r.size() != p.size())
    throw Error("apply_permutation: length mismatch");
  std::vector<Item> out(r.size());
  for (std::size_t s = 0; s < r.size(); ++s) out[p[s]] = r[s];
  return Ranking(std::move(out));
}

/// compose(p1, p2) applies p1 first, then p2.
inline Permutation compose(const Permutation& p1, const Permutation& p2) {
  if (p1.size() != p2.size()) throw Error("compose: length mismatch");
  std::vector<std::size_t> out(p1.size());
  for (std::size_t s = 0; s < p1.size(); ++s) out[s] = p2[p1[s]];
  return Permutation(std::move(out));
}

inline Permutation inverse(const Permutation& p) {
  std::vector<std::size_t> out(p.size());
  for (std::size_t s = 0; s < p.size(); ++s) out[p[s]] = s;
  return Permutation(std::move(out));
}

/// The permutation taking ranking `from` to ranking `to` (same item set).
inline Permutation permutation_between(const Ranking& from, const Ranking& to) {
  if (from.size() != to.size())
    throw Error("permutation_between: length mismatch");
  const auto to_slots = to.slots();
  std::vector<std::size_t> dest(from.size());
  for (std::size_t s = 0; s < from.size(); ++s) dest[s] = to_slots[from[s]];
  return Permutation(std::move(dest));
}

/// Dense square matrix, row-major. For propensities, rows are items and
/// columns are 0-based positions.
class Matrix {
 public:
  Matrix() = default;
  explicit Matrix(std::size_t n, double fill = 0.0) : n_(n), data_(n * n, fill) {}
  Matrix(std::size_t n, std::vector<double> row_major) : n_(n), data_(std::move(row_major)) {
    if (data_.size() != n * n) throw Error("matrix: data size is not n*n");
  }

  static Matrix identity(std::size_t n) {
    Matrix m(n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  /// Permutation matrix with a 1 at (source, dest[source]).
  static Matrix from_permutation(const Permutation& p) {
    Matrix m(p.size());
    for (std::size_t s = 0; s < p.size(); ++s) m(s, p[s]) = 1.0;
    return m;
  }

  /// Y with Y(item, slot) = 1 where the ranking places item at slot.
  static Matrix from_ranking(const Ranking& r) {
    Matrix m(r.size());
    for (std::size_t k = 0; k < r.size(); ++k) m(r[k], k) = 1.0;
    return m;
  }

  std::size_t size() const noexcept { return n_; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * n_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * n_ + c]; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * n_, n_}; }
  std::span<const double> data() const noexcept { return data_; }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t n_ = 0;
  std::vector<double> data_;
};

inline double max_abs_diff(const Matrix& a, const Matrix& b) {
  if (a.size() != b.size()) throw Error("max_abs_diff: size mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.data().size(); ++i)
    m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

inline constexpr double kStochasticTolerance = 1e-9;

struct StochasticityReport {
  bool ok = true;
  std::optional<std::size_t> bad_entry_row;
  std::optional<std::size_t> bad_row;
  std::optional<std::size_t> bad_column;
  std::string message;

  explicit operator bool() const noexcept { return ok; }
};

/// Checks entries in [0,1] and unit row/column sums within `tol`. The report
/// names the first violating entry row, row and column.
inline StochasticityReport check_doubly_stochastic(const Matrix& m,
                                                   double tol = kStochasticTolerance) {
  StochasticityReport rep;
  const std::size_t n = m.size();
  for (std::size_t i = 0; i < n && !rep.bad_entry_row; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double v = m(i, j);
      if (!std::isfinite(v) || v < -tol || v > 1.0 + tol) {
        rep.bad_entry_row = i;
        rep.message += "entry (" + std::to_string(i) + "," + std::to_string(j) +
                       ") out of [0,1]; ";
        break;
      }
    }
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (double v : m.row(i)) s += v;
    if (std::abs(s - 1.0) > tol) {
      rep.bad_row = i;
      rep.message += "row " + std::to_string(i) + " sums to " + std::to_string(s) + "; ";
      break;
    }
  }
  for (std::size_t j = 0; j < n; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += m(i, j);
    if (std::abs(s - 1.0) > tol) {
      rep.bad_column = j;
      rep.message += "column " + std::to_string(j) + " sums to " + std::to_string(s) + "; ";
      break;
    }
  }
  rep.ok = !rep.bad_entry_row && !rep.bad_row && !rep.bad_column;
  return rep;
}

/// Row-major nested input; throws on a non-square shape.
inline Matrix matrix_from_rows(const std::vector<std::vector<double>>& rows) {
  const std::size_t n = rows.size();
  std::vector<double> data;
  data.reserve(n * n);
  for (const auto& r : rows) {
    if (r.size() != n) throw Error("matrix is not square");
    data.insert(data.end(), r.begin(), r.end());
  }
  return Matrix(n, std::move(data));
}

}  // namespace ope
