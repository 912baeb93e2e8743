#pragma once

// Synthetic ranking logs: noisy one-hot items, a score-sorting ranker, BvN
// randomization, pinning rules, and position-based-model clicks.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "ope/bvn.hpp"
#include "ope/error.hpp"
#include "ope/estimators.hpp"
#include "ope/ranking.hpp"
#include "ope/rng.hpp"
#include "ope/rules.hpp"

namespace ope {

struct SimulationConfig {
  std::size_t n_rankings = 50'000;
  std::size_t n_items = 10;
  double stay_probability = 0.95;
  std::vector<Item> relevant_items{1, 2, 4, 7};
  double noise_std = 1.0;
  RuleSet ruleset;
  std::uint64_t seed = 0;
  std::vector<double> position_bias;  // click-model bias per position; empty means 1/k

  PositionBiasCurve click_bias() const {
    if (position_bias.empty()) return PositionBiasCurve::inverse_rank(n_items);
    if (position_bias.size() != n_items) throw Error("position_bias length != n_items");
    return PositionBiasCurve(position_bias);
  }

  bool is_relevant_item(Item j) const {
    return std::find(relevant_items.begin(), relevant_items.end(), j) != relevant_items.end();
  }
};

inline void validate(const SimulationConfig& c) {
  if (c.n_items < 2) throw Error("simulation: n_items must be >= 2");
  if (c.n_rankings == 0) throw Error("simulation: n_rankings must be >= 1");
  if (!(c.stay_probability > 0.0 && c.stay_probability <= 1.0))
    throw Error("simulation: stay_probability outside (0,1]");
  if (!(c.noise_std >= 0.0)) throw Error("simulation: noise_std must be >= 0");
  for (Item j : c.relevant_items)
    if (j >= c.n_items) throw Error("simulation: relevant item out of range");
  for (const auto& r : c.ruleset)
    if (r.item >= c.n_items || r.target_position > c.n_items)
      throw Error("simulation: rule outside the item range");
  (void)c.click_bias();
}

struct Context {
  std::vector<double> features;  // n x n, row j = u_j
  std::vector<double> scores;
  std::vector<std::uint8_t> relevance;
};

/// u_j = one-hot(j) + N(0, noise_std^2) per dimension, v_j = +1 (relevant)
/// or -1 in every dimension, score_j = u_j . v_j, relevance_j = [score_j > 0].
inline Context generate_context(const SimulationConfig& cfg, Rng& rng) {
  const std::size_t n = cfg.n_items;
  Context ctx{std::vector<double>(n * n), std::vector<double>(n), std::vector<std::uint8_t>(n)};
  for (std::size_t j = 0; j < n; ++j) {
    const double sign = cfg.is_relevant_item(j) ? 1.0 : -1.0;
    double score = 0.0;
    for (std::size_t d = 0; d < n; ++d) {
      const double u = (d == j ? 1.0 : 0.0) + (cfg.noise_std > 0.0 ? rng.normal(0.0, cfg.noise_std) : 0.0);
      ctx.features[j * n + d] = u;
      score += u * sign;
    }
    ctx.scores[j] = score;
    ctx.relevance[j] = score > 0.0 ? 1 : 0;
  }
  return ctx;
}

/// Items by descending score; ties go to the lower index.
inline Ranking rank_by_score(std::span<const double> scores) {
  std::vector<Item> order(scores.size());
  std::iota(order.begin(), order.end(), Item{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Item a, Item b) { return scores[a] > scores[b]; });
  return Ranking(std::move(order));
}

/// PBM clicks: the item at position k is clicked with probability
/// b_k * relevance, independently across positions.
inline std::vector<std::uint8_t> simulate_clicks(const Ranking& shown, const Context& ctx,
                                                 const PositionBiasCurve& bias, Rng& rng) {
  std::vector<std::uint8_t> clicks(shown.size());
  for (std::size_t k = 0; k < shown.size(); ++k)
    clicks[k] = ctx.relevance[shown[k]] != 0 && rng.bernoulli(bias.at(k + 1)) ? 1 : 0;
  return clicks;
}

struct LogRefs {
  std::string decomposition = "bvn";
  std::string ruleset = "rules";
};

inline ObservationLog simulate_log(const SimulationConfig& cfg, const Context& ctx,
                                   const BvnDecomposition& bvn, const RuleSet& rules, Rng& rng,
                                   std::size_t context_id = 0, const LogRefs& refs = {}) {
  ObservationLog log;
  log.context_id = context_id;
  log.ranker_ranking = rank_by_score(ctx.scores);
  const BvnDraw draw = sample(bvn, rng);
  log.sampled_component = draw.index;
  const Ranking randomized = apply_permutation(log.ranker_ranking, draw.permutation);
  log.displayed_ranking = apply_stochastic(rules, randomized, rng).displayed;
  log.clicks = simulate_clicks(log.displayed_ranking, ctx, cfg.click_bias(), rng);
  log.decomposition_ref = refs.decomposition;
  log.ruleset_ref = refs.ruleset;
  return log;
}

/// BvN decomposition of the configured stay-probability matrix.
inline BvnDecomposition logging_decomposition(const SimulationConfig& cfg) {
  return decompose(stay_probability_matrix(cfg.n_items, cfg.stay_probability));
}

/// Generates cfg.n_rankings logs. Context i draws from its own stream split
/// from cfg.seed, so output depends only on (cfg, bvn, rules).
inline std::vector<ObservationLog> simulate(const SimulationConfig& cfg,
                                            const BvnDecomposition& bvn, const RuleSet& rules,
                                            const LogRefs& refs = {}) {
  validate(cfg);
  if (bvn.n() != cfg.n_items) throw Error("simulate: decomposition size != n_items");
  const Rng master(cfg.seed);
  std::vector<ObservationLog> logs;
  logs.reserve(cfg.n_rankings);
  for (std::size_t i = 0; i < cfg.n_rankings; ++i) {
    Rng rng = master.split(i);
    const Context ctx = generate_context(cfg, rng);
    logs.push_back(simulate_log(cfg, ctx, bvn, rules, rng, i, refs));
  }
  return logs;
}

struct OracleValue {
  double mean = 0.0;
  double std_error = 0.0;
  std::size_t samples = 0;
};

/// Monte Carlo value of showing the target policy's rankings directly (no
/// randomization, no rules): average clicks per ranking, weighted by lambda.
inline OracleValue oracle_on_policy_value(const SimulationConfig& cfg, const TargetPolicy& target,
                                          std::size_t n_samples, Rng& rng,
                                          LambdaKind lambda = LambdaKind::unit) {
  validate(cfg);
  if (n_samples == 0) throw Error("oracle: n_samples must be >= 1");
  const PositionBiasCurve bias = cfg.click_bias();
  std::vector<double> values(n_samples);
  for (std::size_t i = 0; i < n_samples; ++i) {
    const Context ctx = generate_context(cfg, rng);
    const Ranking shown = target(i);
    const auto clicks = simulate_clicks(shown, ctx, bias, rng);
    double v = 0.0;
    for (std::size_t k = 0; k < clicks.size(); ++k)
      if (clicks[k]) v += lambda_weight(lambda, k + 1);
    values[i] = v;
  }
  const EstimateResult s = summarize("oracle", std::move(values));
  return {s.mean, s.std_error, n_samples};
}

}  // namespace ope
