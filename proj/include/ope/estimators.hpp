#pragma once

// Off-policy reward estimates for rankings:
//
//   V_i = sum_j w(item j) * lambda(target position of j) * click_i(j)
//
// with PBM, IPM or INTERPOL weights, aggregated into a mean with a 95%
// confidence interval.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "ope/bvn.hpp"
#include "ope/correction.hpp"
#include "ope/error.hpp"
#include "ope/ranking.hpp"
#include "ope/rng.hpp"
#include "ope/rules.hpp"

namespace ope {

struct ObservationLog {
  std::size_t context_id = 0;
  Ranking ranker_ranking;         // deterministic ranker output
  std::size_t sampled_component = 0;
  Ranking displayed_ranking;      // what the user saw, after rules
  std::vector<std::uint8_t> clicks;  // per displayed slot
  std::string decomposition_ref;
  std::string ruleset_ref;

  /// Ranking after randomization and before any rule fired.
  Ranking randomized_ranking(const BvnDecomposition& d) const {
    return apply_permutation(ranker_ranking, d[sampled_component].permutation);
  }
};

inline void validate(const ObservationLog& log) {
  const std::size_t n = log.displayed_ranking.size();
  if (n == 0) throw Error("log " + std::to_string(log.context_id) + ": empty ranking");
  if (log.clicks.size() != n)
    throw Error("log " + std::to_string(log.context_id) + ": clicks length != n");
  if (log.ranker_ranking.size() != n)
    throw Error("log " + std::to_string(log.context_id) + ": ranking lengths differ");
}

/// Examination probability per position, anchored so the first position is 1.
class PositionBiasCurve {
 public:
  PositionBiasCurve() = default;
  explicit PositionBiasCurve(std::vector<double> b) : b_(std::move(b)) {
    if (b_.empty()) throw Error("position-bias curve is empty");
    if (b_.front() != 1.0) throw Error("position-bias curve must have b_1 = 1");
    for (double v : b_)
      if (!(v > 0.0) || !std::isfinite(v)) throw Error("position-bias entries must be > 0");
  }

  /// Divides by the first entry.
  static PositionBiasCurve normalized(std::vector<double> b) {
    if (b.empty() || !(b.front() > 0.0)) throw Error("cannot normalize position-bias curve");
    const double first = b.front();
    for (double& v : b) v /= first;
    b.front() = 1.0;
    return PositionBiasCurve(std::move(b));
  }

  /// b_k = 1/k.
  static PositionBiasCurve inverse_rank(std::size_t n) {
    std::vector<double> b(n);
    for (std::size_t k = 0; k < n; ++k) b[k] = 1.0 / static_cast<double>(k + 1);
    return PositionBiasCurve(std::move(b));
  }

  std::size_t size() const noexcept { return b_.size(); }
  /// 1-based position.
  double at(std::size_t position) const {
    if (position < 1 || position > b_.size()) throw Error("position-bias: rank out of range");
    return b_[position - 1];
  }
  std::span<const double> values() const noexcept { return b_; }

  bool is_monotone_decreasing() const noexcept {
    return std::is_sorted(b_.rbegin(), b_.rend());
  }

 private:
  std::vector<double> b_;
};

enum class LambdaKind { unit, dcg, dcg_log2 };

/// lambda(j) for a 1-based position: 1, 1/ln(1+j), or 1/log2(1+j).
inline double lambda_weight(LambdaKind kind, std::size_t position) {
  if (position < 1) throw Error("lambda_weight: position must be >= 1");
  const double j = static_cast<double>(position);
  switch (kind) {
    case LambdaKind::unit: return 1.0;
    case LambdaKind::dcg: return 1.0 / std::log1p(j);
    case LambdaKind::dcg_log2: return 1.0 / std::log2(1.0 + j);
  }
  return 1.0;
}

inline double pbm_weight(const PositionBiasCurve& b, std::size_t target_rank,
                         std::size_t logged_rank) {
  return b.at(target_rank) / b.at(logged_rank);
}

/// Indicator of the displayed rank matching the target rank over the
/// (corrected) probability of that event.
inline double ipm_weight(const Matrix& p, Item item, std::size_t target_rank,
                         std::size_t displayed_rank) {
  const std::size_t n = p.size();
  if (item >= n || target_rank < 1 || target_rank > n || displayed_rank < 1 || displayed_rank > n)
    throw Error("ipm_weight: index out of range");
  if (displayed_rank != target_rank) return 0.0;
  const double prop = p(item, target_rank - 1);
  if (!(prop > 0.0)) throw SupportViolation(item, target_rank);
  return 1.0 / prop;
}

/// Positions are split into contiguous windows of `window` slots (the last
/// one may be shorter). Across windows the weight is IPM-like; within a
/// window it is the PBM bias ratio.
inline double interpol_weight(const PositionBiasCurve& b, const Matrix& p, std::size_t window,
                              Item item, std::size_t target_rank, std::size_t displayed_rank) {
  const std::size_t n = p.size();
  if (window < 1 || window > n) throw Error("interpol_weight: window size outside [1,n]");
  if (item >= n || target_rank < 1 || target_rank > n || displayed_rank < 1 || displayed_rank > n)
    throw Error("interpol_weight: index out of range");
  const std::size_t target_window = (target_rank - 1) / window;
  if ((displayed_rank - 1) / window != target_window) return 0.0;
  const std::size_t lo = target_window * window;
  const std::size_t hi = std::min(n, lo + window);
  double mass = 0.0;
  for (std::size_t k = lo; k < hi; ++k) mass += p(item, k);
  if (!(mass > 0.0)) throw SupportViolation(item, target_rank);
  return 1.0 / mass * pbm_weight(b, target_rank, displayed_rank);
}

enum class EstimatorKind { pbm, ipm, interpol };

struct Weighting {
  EstimatorKind kind = EstimatorKind::ipm;
  std::size_t window = 1;  // interpol only
  PositionBiasCurve curve;  // pbm and interpol

  std::string name() const {
    switch (kind) {
      case EstimatorKind::pbm: return "PBM";
      case EstimatorKind::ipm: return "IPM";
      case EstimatorKind::interpol: return "INTERPOL(" + std::to_string(window) + ")";
    }
    return "?";
  }

  bool needs_propensities() const noexcept { return kind != EstimatorKind::pbm; }
};

/// Deterministic target policy: context id -> ranking.
using TargetPolicy = std::function<Ranking(std::size_t context_id)>;

inline TargetPolicy fixed_policy(Ranking r) {
  return [r = std::move(r)](std::size_t) { return r; };
}

/// Pins `top` to the first positions and `bottom` to the last positions, in
/// the given order; every other item fills the middle by ascending index.
inline Ranking top_bottom_ranking(std::size_t n, std::span<const Item> top,
                                  std::span<const Item> bottom) {
  if (top.size() + bottom.size() > n) throw Error("top_bottom_ranking: too many items");
  std::vector<bool> used(n, false);
  std::vector<Item> out;
  out.reserve(n);
  for (Item i : top) {
    if (i >= n || used[i]) throw Error("top_bottom_ranking: bad item");
    used[i] = true;
    out.push_back(i);
  }
  for (Item i : bottom) {
    if (i >= n || used[i]) throw Error("top_bottom_ranking: bad item");
    used[i] = true;
  }
  for (Item i = 0; i < n; ++i)
    if (!used[i]) out.push_back(i);
  out.insert(out.end(), bottom.begin(), bottom.end());
  return Ranking(std::move(out));
}

/// Evaluation policy used in the simulation study: [7, 0, 3, 1] on top,
/// [2, 4] at the bottom, the rest by index.
inline Ranking reference_target_ranking(std::size_t n = 10) {
  const std::vector<Item> top{7, 0, 3, 1};
  const std::vector<Item> bottom{2, 4};
  return top_bottom_ranking(n, top, bottom);
}

enum class CiMethod { normal, bootstrap };

struct EstimateOptions {
  LambdaKind lambda = LambdaKind::unit;
  double lambda_scale = 1.0;
  CiMethod ci = CiMethod::normal;
  std::size_t bootstrap_resamples = 2000;
  std::uint64_t bootstrap_seed = 0;
};

struct EstimateResult {
  std::string estimator_name;
  double mean = 0.0;
  double std_error = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  std::size_t n_observations = 0;
  std::vector<double> per_observation;

  bool covers(double value) const noexcept { return ci_low <= value && value <= ci_high; }
};

namespace detail {

inline double pairwise_sum(std::span<const double> v) {
  if (v.size() <= 8) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
  }
  const std::size_t half = v.size() / 2;
  return pairwise_sum(v.first(half)) + pairwise_sum(v.subspan(half));
}

}  // namespace detail

/// Per-log propensity matrices, indexed like the log span. Empty is allowed
/// for weightings that do not use propensities.
using PropensityTable = std::vector<Matrix>;

/// Estimate for a single observation.
inline double observation_estimate(const ObservationLog& log, const Ranking& target,
                                   const Weighting& w, const Matrix* propensities,
                                   const EstimateOptions& opt) {
  const std::size_t n = log.displayed_ranking.size();
  if (target.size() != n) throw Error("target ranking length differs from log");
  if (w.needs_propensities() && (propensities == nullptr || propensities->size() != n))
    throw Error("estimator " + w.name() + " needs propensities for every log");
  const auto shown_slot = log.displayed_ranking.slots();
  double v = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const Item item = target[k];
    const std::size_t target_rank = k + 1;
    const std::size_t shown_rank = shown_slot[item] + 1;
    double weight = 0.0;
    switch (w.kind) {
      case EstimatorKind::pbm: weight = pbm_weight(w.curve, target_rank, shown_rank); break;
      case EstimatorKind::ipm:
        weight = ipm_weight(*propensities, item, target_rank, shown_rank);
        break;
      case EstimatorKind::interpol:
        weight = interpol_weight(w.curve, *propensities, w.window, item, target_rank, shown_rank);
        break;
    }
    if (log.clicks[shown_rank - 1] != 0)
      v += weight * (opt.lambda_scale * lambda_weight(opt.lambda, target_rank));
  }
  return v;
}

inline EstimateResult summarize(std::string name, std::vector<double> values,
                                const EstimateOptions& opt = {}) {
  if (values.empty()) throw Error("estimate: no observations");
  EstimateResult res;
  res.estimator_name = std::move(name);
  res.n_observations = values.size();
  const double count = static_cast<double>(values.size());
  res.mean = detail::pairwise_sum(values) / count;
  if (values.size() > 1) {
    std::vector<double> sq(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double d = values[i] - res.mean;
      sq[i] = d * d;
    }
    res.std_error = std::sqrt(detail::pairwise_sum(sq) / (count - 1.0) / count);
  }
  if (opt.ci == CiMethod::normal) {
    res.ci_low = res.mean - 1.96 * res.std_error;
    res.ci_high = res.mean + 1.96 * res.std_error;
  } else {
    // Percentile bootstrap of the mean.
    Rng rng(opt.bootstrap_seed);
    std::vector<double> means(std::max<std::size_t>(opt.bootstrap_resamples, 2));
    std::vector<double> resample(values.size());
    for (double& m : means) {
      for (double& x : resample)
        x = values[static_cast<std::size_t>(rng.uniform() * count)];
      m = detail::pairwise_sum(resample) / count;
    }
    std::sort(means.begin(), means.end());
    const auto at = [&](double q) {
      return means[static_cast<std::size_t>(q * static_cast<double>(means.size() - 1))];
    };
    res.ci_low = std::min(at(0.025), res.mean);
    res.ci_high = std::max(at(0.975), res.mean);
  }
  res.per_observation = std::move(values);
  return res;
}

/// Estimates the target policy's value from `logs`. `propensities[i]` belongs
/// to `logs[i]`; it may be empty for PBM.
inline EstimateResult estimate(std::span<const ObservationLog> logs, const TargetPolicy& target,
                               const Weighting& w, const PropensityTable& propensities,
                               const EstimateOptions& opt = {}) {
  if (logs.empty()) throw Error("estimate: empty logs");
  if (w.needs_propensities() && propensities.size() != logs.size())
    throw Error("estimate: propensity table does not match logs");
  std::vector<double> values(logs.size());
  for (std::size_t i = 0; i < logs.size(); ++i) {
    const Matrix* p = propensities.empty() ? nullptr : &propensities[i];
    values[i] = observation_estimate(logs[i], target(logs[i].context_id), w, p, opt);
  }
  return summarize(w.name(), std::move(values), opt);
}

/// Named decompositions and rule sets that logs refer to.
struct LogRegistry {
  std::map<std::string, BvnDecomposition> decompositions;
  std::map<std::string, RuleSet> rulesets;

  const BvnDecomposition& decomposition(const std::string& ref) const {
    auto it = decompositions.find(ref);
    if (it == decompositions.end()) throw Error("unknown decomposition ref '" + ref + "'");
    return it->second;
  }
  const RuleSet& ruleset(const std::string& ref) const {
    auto it = rulesets.find(ref);
    if (it == rulesets.end()) throw Error("unknown ruleset ref '" + ref + "'");
    return it->second;
  }
};

enum class PropensityMode { raw, exact, stochastic, mc };

struct PropensityOptions {
  PropensityMode mode = PropensityMode::stochastic;
  std::size_t mc_samples = 10000;
  std::uint64_t mc_seed = 0;
  // When set, corrections assume this application probability for every
  // rule instead of the logged one.
  std::optional<double> assumed_rule_probability;
};

/// Propensity matrix of one log under the chosen mode.
inline Matrix log_propensities(const ObservationLog& log, const LogRegistry& reg,
                               const PropensityOptions& opt) {
  const BvnDecomposition& d = reg.decomposition(log.decomposition_ref);
  RuleSet rules = reg.ruleset(log.ruleset_ref);
  if (opt.assumed_rule_probability) rules = rules.with_probability(*opt.assumed_rule_probability);
  switch (opt.mode) {
    case PropensityMode::raw: return raw_propensities(log.ranker_ranking, d);
    case PropensityMode::exact: return correct_exact(log.ranker_ranking, d, rules);
    case PropensityMode::stochastic: return correct_stochastic(log.ranker_ranking, d, rules);
    case PropensityMode::mc: {
      Rng rng = Rng(opt.mc_seed).split(log.context_id);
      return correct_mc(bvn_sampler(log.ranker_ranking, d), rules, opt.mc_samples, rng);
    }
  }
  throw Error("unknown propensity mode");
}

namespace detail {

// A correction depends on the base ranking only through the slots holding
// pinned items; everything else moves as an anonymous slot.
inline std::vector<std::size_t> pinned_slots(const Ranking& base, const RuleSet& rules) {
  const auto slots = base.slots();
  std::vector<std::size_t> key;
  key.reserve(rules.size());
  for (const auto& r : rules) key.push_back(r.item < slots.size() ? slots[r.item] : slots.size());
  return key;
}

}  // namespace detail

/// Propensities for every log. Deterministic modes are computed once per
/// (decomposition, rule set, pinned-item slots) and re-labelled per log.
inline PropensityTable propensity_table(std::span<const ObservationLog> logs,
                                        const LogRegistry& reg, const PropensityOptions& opt) {
  PropensityTable t;
  t.reserve(logs.size());
  if (opt.mode == PropensityMode::mc) {
    for (const auto& log : logs) t.push_back(log_propensities(log, reg, opt));
    return t;
  }
  using Key = std::tuple<std::string, std::string, std::vector<std::size_t>>;
  std::map<Key, Matrix> by_slot;  // (ranker slot, position) form
  for (const auto& log : logs) {
    const RuleSet& rules = reg.ruleset(log.ruleset_ref);
    Key key{log.decomposition_ref, log.ruleset_ref, detail::pinned_slots(log.ranker_ranking, rules)};
    auto it = by_slot.find(key);
    if (it == by_slot.end()) {
      Matrix by_item = log_propensities(log, reg, opt);
      Matrix q(by_item.size());
      for (std::size_t s = 0; s < q.size(); ++s)
        for (std::size_t k = 0; k < q.size(); ++k) q(s, k) = by_item(log.ranker_ranking[s], k);
      it = by_slot.emplace(std::move(key), std::move(q)).first;
    }
    const Matrix& q = it->second;
    Matrix p(q.size());
    for (std::size_t s = 0; s < q.size(); ++s)
      for (std::size_t k = 0; k < q.size(); ++k) p(log.ranker_ranking[s], k) = q(s, k);
    t.push_back(std::move(p));
  }
  return t;
}

}  // namespace ope
