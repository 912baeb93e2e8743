#include <gtest/gtest.h>

#include <cmath>
#include <sstream>
#include <vector>

#include "ope/io.hpp"
#include "ope/simulator.hpp"
#include "oracles.hpp"

namespace ope {
namespace {

SimulationConfig noiseless(std::size_t n_rankings) {
  SimulationConfig cfg;
  cfg.noise_std = 0.0;
  cfg.stay_probability = 1.0;
  cfg.n_rankings = n_rankings;
  return cfg;
}

TEST(Context, ZeroNoiseScores) {
  const SimulationConfig cfg = noiseless(1);
  Rng rng(1);
  const auto ctx = generate_context(cfg, rng);
  for (Item j = 0; j < 10; ++j) {
    EXPECT_EQ(ctx.scores[j], cfg.is_relevant_item(j) ? 1.0 : -1.0);
    EXPECT_EQ(ctx.relevance[j], cfg.is_relevant_item(j) ? 1 : 0);
  }
}

TEST(Context, RelevanceProbability) {
  SimulationConfig cfg;
  Rng rng(2);
  const int contexts = 20000;
  double relevant = 0.0, irrelevant = 0.0;
  for (int i = 0; i < contexts; ++i) {
    const auto ctx = generate_context(cfg, rng);
    relevant += ctx.relevance[7];
    irrelevant += ctx.relevance[0];
  }
  const double p = oracle::phi(1.0 / std::sqrt(10.0));
  EXPECT_NEAR(relevant / contexts, p, 0.01);
  EXPECT_NEAR(irrelevant / contexts, 1.0 - p, 0.01);
}

TEST(RankByScore, TiesByIndex) {
  const std::vector<double> s{0.0, 2.0, 2.0, -1.0};
  EXPECT_EQ(rank_by_score(s), Ranking({1, 2, 0, 3}));
}

TEST(Simulate, NoiselessDisplayAndClicks) {
  const SimulationConfig cfg = noiseless(20000);
  const auto logs = simulate(cfg, logging_decomposition(cfg), RuleSet{});
  double first = 0.0, last = 0.0, total = 0.0;
  for (const auto& log : logs) {
    EXPECT_EQ(log.displayed_ranking, Ranking({1, 2, 4, 7, 0, 3, 5, 6, 8, 9}));
    first += log.clicks[0];
    last += log.clicks[9];
    for (auto c : log.clicks) total += c;
  }
  EXPECT_EQ(first, 20000.0);
  EXPECT_EQ(last, 0.0);
  // 1 + 1/2 + 1/3 + 1/4
  EXPECT_NEAR(total / 20000, 2.0833333, 0.02);
}

TEST(Simulate, RelevantItemAtBottomClickRate) {
  SimulationConfig cfg = noiseless(1);
  Rng rng(5);
  const Ranking shown({0, 3, 5, 6, 8, 9, 1, 2, 4, 7});
  const auto bias = cfg.click_bias();
  double clicks = 0.0;
  const int trials = 100000;
  for (int i = 0; i < trials; ++i) {
    const auto ctx = generate_context(cfg, rng);
    clicks += simulate_clicks(shown, ctx, bias, rng)[9];
  }
  EXPECT_NEAR(clicks / trials, 0.1, 0.004);
}

TEST(Simulate, DisplayFrequenciesMatchStayMatrix) {
  SimulationConfig cfg;
  cfg.n_rankings = 100000;
  cfg.seed = 11;
  const auto logs = simulate(cfg, logging_decomposition(cfg), RuleSet{});
  Matrix freq(10);
  for (const auto& log : logs) {
    const auto slot = log.ranker_ranking.slots();
    for (std::size_t k = 0; k < 10; ++k) freq(slot[log.displayed_ranking[k]], k) += 1.0 / 1e5;
  }
  EXPECT_LT(max_abs_diff(freq, stay_probability_matrix(10, 0.95)), 0.005);
}

TEST(Simulate, SameSeedSameBytes) {
  SimulationConfig cfg;
  cfg.n_rankings = 500;
  cfg.seed = 42;
  cfg.ruleset = RuleSet({{0, 1, 0.95}});
  const auto bvn = logging_decomposition(cfg);
  std::ostringstream a, b, c;
  write_jsonl(a, simulate(cfg, bvn, cfg.ruleset));
  write_jsonl(b, simulate(cfg, bvn, cfg.ruleset));
  cfg.seed = 43;
  write_jsonl(c, simulate(cfg, bvn, cfg.ruleset));
  EXPECT_EQ(a.str(), b.str());
  EXPECT_NE(a.str(), c.str());

  std::istringstream in(a.str());
  const auto back = read_jsonl(in);
  std::ostringstream again;
  write_jsonl(again, back);
  EXPECT_EQ(again.str(), a.str());
}

TEST(Simulate, PinnedRuleHoldsMostOfTheTime) {
  SimulationConfig cfg;
  cfg.n_rankings = 20000;
  const RuleSet rules({{0, 1, 0.95}});
  const auto logs = simulate(cfg, logging_decomposition(cfg), rules);
  double top = 0.0;
  for (const auto& log : logs) top += log.displayed_ranking[0] == 0 ? 1.0 : 0.0;
  EXPECT_GT(top / 20000, 0.94);
}

TEST(Simulate, RejectsBadConfig) {
  SimulationConfig cfg;
  cfg.relevant_items = {12};
  EXPECT_THROW(validate(cfg), Error);
  cfg = {};
  cfg.stay_probability = 0.0;
  EXPECT_THROW(validate(cfg), Error);
  cfg = {};
  cfg.position_bias = {1.0, 0.5};
  EXPECT_THROW(validate(cfg), Error);
}

TEST(Oracle, NoiselessReferenceTarget) {
  const SimulationConfig cfg = noiseless(1);
  Rng rng(3);
  const auto v = oracle_on_policy_value(cfg, fixed_policy(reference_target_ranking()), 200000, rng);
  // Relevant items 7, 1, 2, 4 sit at positions 1, 4, 9, 10.
  const double expected = 1.0 + 1.0 / 4 + 1.0 / 9 + 1.0 / 10;
  EXPECT_NEAR(v.mean, expected, 4 * v.std_error);
}

TEST(Oracle, NoisyReferenceTargetMatchesClosedForm) {
  SimulationConfig cfg;
  Rng rng(4);
  const auto v = oracle_on_policy_value(cfg, fixed_policy(reference_target_ranking()), 200000, rng);
  const double p = oracle::phi(1.0 / std::sqrt(10.0));
  const Ranking t = reference_target_ranking();
  double expected = 0.0;
  for (std::size_t k = 0; k < 10; ++k)
    expected += (cfg.is_relevant_item(t[k]) ? p : 1.0 - p) / (k + 1.0);
  EXPECT_NEAR(v.mean, expected, 4 * v.std_error);
  EXPECT_NEAR(expected, 1.4636, 0.001);
}

TEST(Oracle, DcgLambda) {
  const SimulationConfig cfg = noiseless(1);
  Rng rng(6);
  const auto v = oracle_on_policy_value(cfg, fixed_policy(Ranking({1, 0, 2, 3, 4, 5, 6, 7, 8, 9})),
                                        100000, rng, LambdaKind::dcg);
  double expected = 1.0 / std::log(2.0);  // item 1 at position 1
  expected += 1.0 / 3 / std::log(4.0) + 1.0 / 5 / std::log(6.0) + 1.0 / 8 / std::log(9.0);
  EXPECT_NEAR(v.mean, expected, 4 * v.std_error + 1e-12);
}

}  // namespace
}  // namespace ope
