#pragma once

// Position-bias estimation from randomized logs by intervention harvesting.
//
// Logs are grouped (by the ranker's slot, or by item id), and within a group
// the click-through rates at two displayed positions k, k' estimate the bias
// ratio b_k / b_k'. The curve is fitted to all such ratios in log space by
// full-batch gradient descent with a decaying step size. It is a simple
// ratio-matching fit, not a full intervention-harvesting likelihood.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "ope/error.hpp"
#include "ope/estimators.hpp"
#include "ope/rng.hpp"

namespace ope {

enum class HarvestKey {
  ranker_slot,  // the deterministic ranker's slot; relevance-neutral grouping
  item,         // item identity
};

/// impressions/clicks per (group, 0-based displayed position).
struct InterventionCounts {
  std::size_t groups = 0;
  std::size_t positions = 0;
  std::vector<double> impressions;
  std::vector<double> clicks;

  double& impressions_at(std::size_t g, std::size_t k) { return impressions[g * positions + k]; }
  double& clicks_at(std::size_t g, std::size_t k) { return clicks[g * positions + k]; }
  double impressions_at(std::size_t g, std::size_t k) const {
    return impressions[g * positions + k];
  }
  double clicks_at(std::size_t g, std::size_t k) const { return clicks[g * positions + k]; }
};

inline InterventionCounts harvest_interventions(std::span<const ObservationLog> logs,
                                                HarvestKey key = HarvestKey::ranker_slot) {
  if (logs.empty()) throw Error("harvest_interventions: no logs");
  const std::size_t n = logs.front().displayed_ranking.size();
  InterventionCounts c{n, n, std::vector<double>(n * n, 0.0), std::vector<double>(n * n, 0.0)};
  for (const auto& log : logs) {
    if (log.displayed_ranking.size() != n) throw Error("harvest_interventions: mixed lengths");
    const auto ranker_slot = log.ranker_ranking.slots();
    for (std::size_t k = 0; k < n; ++k) {
      const Item item = log.displayed_ranking[k];
      const std::size_t g = key == HarvestKey::item ? item : ranker_slot[item];
      c.impressions_at(g, k) += 1.0;
      c.clicks_at(g, k) += log.clicks[k] != 0 ? 1.0 : 0.0;
    }
  }
  return c;
}

enum class PairWeight {
  min_impressions,   // min of the two impression counts
  inverse_variance,  // c_k c_k' / (c_k + c_k'): inverse delta-method variance of the log ratio
};

struct SgdConfig {
  double initial_lr = 0.1;
  double decay = 0.01;
  std::size_t epochs = 200;
  std::uint64_t seed = 0;
  PairWeight weighting = PairWeight::inverse_variance;
};

struct BiasFit {
  PositionBiasCurve curve;
  double final_loss = 0.0;
  std::size_t pairs = 0;
};

/// Fits log b_k to the observed log CTR ratios. The loss is
///   sum_pairs w * (theta_k - theta_k' - log(ctr_k / ctr_k'))^2 / (mean(w) * G * n)
/// over same-group position pairs with clicks at both positions, where G is
/// the number of contributing groups. The normalization keeps the Hessian's
/// spectrum near [0, 2] regardless of data volume. Step size at epoch t is
/// initial_lr / (1 + decay * t).
inline BiasFit fit_position_bias_detailed(const InterventionCounts& counts,
                                          std::size_t n_positions, const SgdConfig& cfg = {}) {
  if (n_positions == 0 || n_positions > counts.positions)
    throw Error("fit_position_bias: bad position count");
  for (std::size_t k = 0; k < n_positions; ++k) {
    double impressions = 0.0;
    for (std::size_t g = 0; g < counts.groups; ++g) impressions += counts.impressions_at(g, k);
    if (!(impressions > 0.0))
      throw Error("fit_position_bias: position " + std::to_string(k + 1) +
                  " has no impressions; the curve is unidentifiable there");
  }

  struct Pair {
    std::size_t a, b;
    double target, weight;
  };
  std::vector<Pair> pairs;
  std::vector<bool> group_used(counts.groups, false);
  for (std::size_t g = 0; g < counts.groups; ++g)
    for (std::size_t a = 0; a < n_positions; ++a)
      for (std::size_t b = a + 1; b < n_positions; ++b) {
        const double ia = counts.impressions_at(g, a), ib = counts.impressions_at(g, b);
        const double ca = counts.clicks_at(g, a), cb = counts.clicks_at(g, b);
        if (!(ca > 0.0 && cb > 0.0)) continue;
        const double y = std::log(ca / ia) - std::log(cb / ib);
        const double w = cfg.weighting == PairWeight::min_impressions ? std::min(ia, ib)
                                                                      : ca * cb / (ca + cb);
        pairs.push_back({a, b, y, w});
        group_used[g] = true;
      }
  if (pairs.empty()) throw Error("fit_position_bias: no position pair has clicks");

  double mean_w = 0.0;
  for (const auto& p : pairs) mean_w += p.weight;
  mean_w /= static_cast<double>(pairs.size());
  double groups = 0.0;
  for (bool u : group_used) groups += u ? 1.0 : 0.0;
  const double scale = 1.0 / (mean_w * groups * static_cast<double>(n_positions));

  Rng rng(cfg.seed);
  std::vector<double> theta(n_positions);
  for (double& t : theta) t = rng.normal(0.0, 0.01);

  std::vector<double> grad(n_positions);
  double loss = 0.0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::fill(grad.begin(), grad.end(), 0.0);
    loss = 0.0;
    for (const auto& p : pairs) {
      const double e = theta[p.a] - theta[p.b] - p.target;
      const double g = 2.0 * p.weight * scale * e;
      grad[p.a] += g;
      grad[p.b] -= g;
      loss += p.weight * scale * e * e;
    }
    const double lr = cfg.initial_lr / (1.0 + cfg.decay * static_cast<double>(epoch));
    for (std::size_t k = 0; k < n_positions; ++k) theta[k] -= lr * grad[k];
  }

  std::vector<double> b(n_positions);
  for (std::size_t k = 0; k < n_positions; ++k) b[k] = std::exp(theta[k] - theta[0]);
  b[0] = 1.0;
  return {PositionBiasCurve(std::move(b)), loss, pairs.size()};
}

inline PositionBiasCurve fit_position_bias(const InterventionCounts& counts,
                                           std::size_t n_positions, const SgdConfig& cfg = {}) {
  return fit_position_bias_detailed(counts, n_positions, cfg).curve;
}

}  // namespace ope
