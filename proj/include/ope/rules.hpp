#pragma once

// Pinning business rules applied after randomization.
//
// Rules in a set are treated as independent: each fires with its own
// probability regardless of the others and of the context.

#include <cstddef>
#include <cstdint>
#include <vector>

#include "ope/error.hpp"
#include "ope/ranking.hpp"
#include "ope/rng.hpp"

namespace ope {

struct PinRule {
  Item item = 0;
  std::size_t target_position = 1;  // 1-based
  double probability = 1.0;

  friend bool operator==(const PinRule&, const PinRule&) = default;
};

class RuleSet {
 public:
  RuleSet() = default;
  explicit RuleSet(std::vector<PinRule> rules) : rules_(std::move(rules)) {
    for (std::size_t a = 0; a < rules_.size(); ++a) {
      const auto& r = rules_[a];
      if (!(r.probability > 0.0 && r.probability <= 1.0))
        throw Error("pin rule probability outside (0,1]");
      if (r.target_position < 1) throw Error("pin rule target position must be >= 1");
      for (std::size_t b = 0; b < a; ++b) {
        if (rules_[b].item == r.item)
          throw Error("conflicting rules: item " + std::to_string(r.item) + " pinned twice");
        if (rules_[b].target_position == r.target_position)
          throw Error("conflicting rules: position " + std::to_string(r.target_position) +
                      " targeted twice");
      }
    }
  }

  std::size_t size() const noexcept { return rules_.size(); }
  bool empty() const noexcept { return rules_.empty(); }
  const PinRule& operator[](std::size_t i) const { return rules_[i]; }
  const std::vector<PinRule>& rules() const noexcept { return rules_; }
  auto begin() const noexcept { return rules_.begin(); }
  auto end() const noexcept { return rules_.end(); }

  bool all_deterministic() const noexcept {
    for (const auto& r : rules_)
      if (r.probability != 1.0) return false;
    return true;
  }

  /// The rules selected by bit i of `mask`, in list order.
  RuleSet subset(std::uint64_t mask) const {
    std::vector<PinRule> out;
    for (std::size_t i = 0; i < rules_.size(); ++i)
      if (mask >> i & 1u) out.push_back(rules_[i]);
    return RuleSet(std::move(out));
  }

  /// Same rules with every probability replaced by `p`.
  RuleSet with_probability(double p) const {
    auto copy = rules_;
    for (auto& r : copy) r.probability = p;
    return RuleSet(std::move(copy));
  }

  friend bool operator==(const RuleSet&, const RuleSet&) = default;

 private:
  std::vector<PinRule> rules_;
};

/// B(Y): the slot permutation that applies every rule in `rules` to `r`.
/// Pinned items land on their targets; all other items keep their relative
/// order and fill the remaining slots. For a single rule this is
/// remove-and-insert.
inline Permutation rule_permutation(const RuleSet& rules, const Ranking& r) {
  const std::size_t n = r.size();
  if (rules.empty()) return Permutation::identity(n);

  std::vector<Item> shown(n, n);  // n marks a free slot
  std::vector<bool> pinned(n, false);
  for (const auto& rule : rules) {
    if (rule.item >= n)
      throw Error("pinned item " + std::to_string(rule.item) + " not in ranking");
    if (rule.target_position > n)
      throw Error("pin target " + std::to_string(rule.target_position) + " beyond ranking");
    shown[rule.target_position - 1] = rule.item;
    pinned[rule.item] = true;
  }
  std::size_t free = 0;
  for (std::size_t s = 0; s < n; ++s) {
    if (pinned[r[s]]) continue;
    while (shown[free] != n) ++free;
    shown[free] = r[s];
  }
  return permutation_between(r, Ranking(std::move(shown)));
}

struct RuleApplication {
  Ranking displayed;
  RuleSet applied;
  std::uint64_t applied_mask = 0;
};

/// Includes each rule independently with its probability (draws in list
/// order) and applies the chosen subset.
inline RuleApplication apply_stochastic(const RuleSet& rules, const Ranking& r, Rng& rng) {
  if (rules.size() > 64) throw Error("apply_stochastic: more than 64 rules");
  std::uint64_t mask = 0;
  for (std::size_t i = 0; i < rules.size(); ++i)
    if (rules[i].probability >= 1.0 || rng.bernoulli(rules[i].probability))
      mask |= std::uint64_t{1} << i;
  RuleSet applied = rules.subset(mask);
  Ranking shown = apply_permutation(r, rule_permutation(applied, r));
  return {std::move(shown), std::move(applied), mask};
}

/// P(S) = prod_{r in S} p_r * prod_{r not in S} (1 - p_r), S given as a mask.
inline double subset_probability(const RuleSet& rules, std::uint64_t mask) {
  if (rules.size() < 64 && (mask >> rules.size()) != 0)
    throw Error("subset_probability: subset not contained in rules");
  double p = 1.0;
  for (std::size_t i = 0; i < rules.size(); ++i)
    p *= (mask >> i & 1u) ? rules[i].probability : 1.0 - rules[i].probability;
  return p;
}

inline double subset_probability(const RuleSet& rules, const RuleSet& subset) {
  std::uint64_t mask = 0;
  for (const auto& s : subset) {
    bool found = false;
    for (std::size_t i = 0; i < rules.size(); ++i)
      if (rules[i] == s) {
        mask |= std::uint64_t{1} << i;
        found = true;
        break;
      }
    if (!found) throw Error("subset_probability: subset not contained in rules");
  }
  return subset_probability(rules, mask);
}

}  // namespace ope
