#pragma once

// Corrected propensity matrices P' after business rules.
//
// All corrected matrices are indexed (item, 0-based position). The base
// ranking supplies the ranker's slot of each item, so rows follow item
// identity rather than logged rank.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "ope/bvn.hpp"
#include "ope/error.hpp"
#include "ope/ranking.hpp"
#include "ope/rng.hpp"
#include "ope/rules.hpp"

namespace ope {

inline constexpr std::size_t kMaxEnumeratedRules = 16;

/// Raw (uncorrected) propensities of the randomizer for a given base ranking:
/// P[base[s]][k] = reconstruct(d)[s][k].
inline Matrix raw_propensities(const Ranking& base, const BvnDecomposition& d) {
  if (base.size() != d.n()) throw Error("raw_propensities: length mismatch");
  Matrix p(base.size());
  for (const auto& c : d.components())
    for (std::size_t s = 0; s < base.size(); ++s) p(base[s], c.permutation[s]) += c.probability;
  return p;
}

/// Exact correction for rules that always fire: for every component, permute
/// the base ranking, apply all rules, and add p_m at each item's final slot.
inline Matrix correct_exact(const Ranking& base, const BvnDecomposition& d, const RuleSet& rules) {
  if (!rules.all_deterministic())
    throw Error("correct_exact: rules with probability < 1 need correct_stochastic");
  if (base.size() != d.n()) throw Error("correct_exact: length mismatch");
  Matrix p(base.size());
  for (const auto& c : d.components()) {
    const Ranking permuted = apply_permutation(base, c.permutation);
    const Ranking shown = apply_permutation(permuted, rule_permutation(rules, permuted));
    for (std::size_t k = 0; k < shown.size(); ++k) p(shown[k], k) += c.probability;
  }
  return p;
}

/// Exact correction for independently firing rules: enumerates every subset
/// S of the rules and weights each outcome by p_m * P(S).
inline Matrix correct_stochastic(const Ranking& base, const BvnDecomposition& d,
                                 const RuleSet& rules) {
  if (rules.size() > kMaxEnumeratedRules)
    throw Error("correct_stochastic: " + std::to_string(rules.size()) +
                " rules exceed the power-set limit of " + std::to_string(kMaxEnumeratedRules) +
                "; use correct_mc");
  if (base.size() != d.n()) throw Error("correct_stochastic: length mismatch");

  const std::uint64_t subsets = std::uint64_t{1} << rules.size();
  std::vector<RuleSet> subset_rules;
  std::vector<double> subset_p;
  subset_rules.reserve(subsets);
  for (std::uint64_t mask = 0; mask < subsets; ++mask) {
    subset_rules.push_back(rules.subset(mask));
    subset_p.push_back(subset_probability(rules, mask));
  }

  Matrix p(base.size());
  for (const auto& c : d.components()) {
    const Ranking permuted = apply_permutation(base, c.permutation);
    for (std::uint64_t mask = 0; mask < subsets; ++mask) {
      if (subset_p[mask] == 0.0) continue;
      const Ranking shown =
          apply_permutation(permuted, rule_permutation(subset_rules[mask], permuted));
      const double w = c.probability * subset_p[mask];
      for (std::size_t k = 0; k < shown.size(); ++k) p(shown[k], k) += w;
    }
  }
  return p;
}

/// Draws one displayed (pre-rule) ranking from the logging randomizer.
using RankingSampler = std::function<Ranking(Rng&)>;

inline RankingSampler bvn_sampler(Ranking base, BvnDecomposition d) {
  return [base = std::move(base), d = std::move(d)](Rng& rng) {
    return apply_permutation(base, sample(d, rng).permutation);
  };
}

/// Monte Carlo correction: average of the post-rule placement indicators over
/// `samples` draws. Rows sum to one exactly up to rounding.
inline Matrix correct_mc(const RankingSampler& sampler, const RuleSet& rules,
                         std::size_t samples, Rng& rng) {
  if (samples == 0) throw Error("correct_mc: sample count must be >= 1");
  std::vector<std::uint64_t> counts;
  std::size_t n = 0;
  for (std::size_t l = 0; l < samples; ++l) {
    const Ranking y = sampler(rng);
    if (l == 0) {
      n = y.size();
      counts.assign(n * n, 0);
    }
    const Ranking shown = apply_stochastic(rules, y, rng).displayed;
    for (std::size_t k = 0; k < n; ++k) ++counts[shown[k] * n + k];
  }
  Matrix p(n);
  const double inv = 1.0 / static_cast<double>(samples);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < n; ++k) p(i, k) = static_cast<double>(counts[i * n + k]) * inv;
  return p;
}

struct SupportGap {
  Item item;
  std::size_t position;  // 1-based
  double propensity;

  friend bool operator==(const SupportGap&, const SupportGap&) = default;
};

/// Every (item, target position) pair the target ranking relies on whose
/// propensity is <= threshold. Empty means IPM-style weights are defined.
inline std::vector<SupportGap> check_full_support(const Matrix& p, const Ranking& target,
                                                  double threshold = 0.0) {
  if (p.size() != target.size()) throw Error("check_full_support: size mismatch");
  std::vector<SupportGap> gaps;
  for (std::size_t k = 0; k < target.size(); ++k) {
    const double v = p(target[k], k);
    if (v <= threshold) gaps.push_back({target[k], k + 1, v});
  }
  return gaps;
}

}  // namespace ope
