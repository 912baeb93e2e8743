#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "ope/estimators.hpp"
#include "ope/io.hpp"
#include "oracles.hpp"

namespace ope {
namespace {

ObservationLog make_log(std::size_t id, Ranking shown, std::vector<std::uint8_t> clicks) {
  ObservationLog log;
  log.context_id = id;
  log.ranker_ranking = shown;
  log.displayed_ranking = std::move(shown);
  log.clicks = std::move(clicks);
  return log;
}

TEST(Lambda, Unit) {
  for (std::size_t j = 1; j <= 20; ++j) EXPECT_EQ(lambda_weight(LambdaKind::unit, j), 1.0);
}

TEST(Lambda, DcgNaturalLog) {
  EXPECT_NEAR(lambda_weight(LambdaKind::dcg, 1), 1.4426950408889634, 1e-15);
  EXPECT_NEAR(lambda_weight(LambdaKind::dcg_log2, 1), 1.0, 1e-15);
  for (std::size_t j = 1; j < 30; ++j)
    EXPECT_GT(lambda_weight(LambdaKind::dcg, j), lambda_weight(LambdaKind::dcg, j + 1));
  EXPECT_THROW(lambda_weight(LambdaKind::dcg, 0), Error);
}

TEST(PbmWeight, BiasRatios) {
  const auto b = PositionBiasCurve::inverse_rank(10);
  EXPECT_EQ(pbm_weight(b, 3, 3), 1.0);
  EXPECT_DOUBLE_EQ(pbm_weight(b, 1, 2), 2.0);
  EXPECT_DOUBLE_EQ(pbm_weight(b, 4, 1), 0.25);
  EXPECT_THROW(pbm_weight(b, 0, 1), Error);
  EXPECT_THROW(pbm_weight(b, 1, 11), Error);
}

TEST(PbmWeight, AtLeastOneWhenTargetAboveLogged) {
  const auto b = PositionBiasCurve::inverse_rank(10);
  for (std::size_t t = 1; t <= 10; ++t)
    for (std::size_t l = t; l <= 10; ++l) EXPECT_GE(pbm_weight(b, t, l), 1.0);
}

TEST(PositionBiasCurve, Invariants) {
  EXPECT_THROW(PositionBiasCurve({0.5, 0.25}), Error);
  EXPECT_THROW(PositionBiasCurve({1.0, 0.0}), Error);
  const auto c = PositionBiasCurve::normalized({2.0, 1.0, 0.5});
  EXPECT_EQ(c.at(1), 1.0);
  EXPECT_DOUBLE_EQ(c.at(3), 0.25);
  EXPECT_TRUE(c.is_monotone_decreasing());
}

TEST(IpmWeight, Cases) {
  Matrix p(10, 0.05 / 9.0);
  for (std::size_t i = 0; i < 10; ++i) p(i, i) = 0.95;
  EXPECT_EQ(ipm_weight(p, 3, 4, 5), 0.0);
  EXPECT_NEAR(ipm_weight(p, 3, 4, 4), 1.0526315789473684, 1e-12);
  p(3, 3) = 0.0;
  EXPECT_THROW(ipm_weight(p, 3, 4, 4), SupportViolation);
  try {
    ipm_weight(p, 3, 4, 4);
  } catch (const SupportViolation& e) {
    EXPECT_EQ(e.item(), 3u);
    EXPECT_EQ(e.position(), 4u);
  }
}

TEST(InterpolWeight, DegeneratesToIpmAndPbm) {
  Rng rng(12);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 2 + trial % 9;
    const Matrix p = matrix_from_rows(oracle::random_doubly_stochastic(n, 3 + trial % 5, rng));
    std::vector<double> raw(n);
    for (double& v : raw) v = 0.05 + rng.uniform();
    const auto b = PositionBiasCurve::normalized(raw);
    const Item item = rng.next() % n;
    const std::size_t t = 1 + rng.next() % n;
    // Bias displayed rank toward the target so matches are common.
    const std::size_t s = rng.uniform() < 0.5 ? t : 1 + rng.next() % n;
    if (p(item, t - 1) > 0.0 || s != t) {
      EXPECT_EQ(interpol_weight(b, p, 1, item, t, s), ipm_weight(p, item, t, s));
    }
    EXPECT_NEAR(interpol_weight(b, p, n, item, t, s), pbm_weight(b, t, s), 1e-12);
  }
}

TEST(InterpolWeight, WindowOfThree) {
  Matrix p(10, 0.05 / 9.0);
  for (std::size_t i = 0; i < 10; ++i) p(i, i) = 0.95;
  const auto b = PositionBiasCurve::inverse_rank(10);
  // Target 2 and displayed 3 share window {1,2,3}.
  const double mass = 0.95 + 2 * 0.05 / 9.0;
  EXPECT_NEAR(interpol_weight(b, p, 3, 1, 2, 3), 1.0 / mass * 1.5, 1e-12);
  // Displayed 4 falls into the next window.
  EXPECT_EQ(interpol_weight(b, p, 3, 1, 2, 4), 0.0);
  // Last window {10} is short.
  EXPECT_NEAR(interpol_weight(b, p, 3, 9, 10, 10), 1.0 / 0.95, 1e-12);
  EXPECT_THROW(interpol_weight(b, p, 0, 1, 2, 3), Error);
  EXPECT_THROW(interpol_weight(b, p, 11, 1, 2, 3), Error);
}

TEST(Estimate, OnPolicyIdentity) {
  std::vector<ObservationLog> logs;
  Rng rng(1);
  double clicks = 0.0;
  for (std::size_t i = 0; i < 200; ++i) {
    std::vector<std::uint8_t> c(5);
    for (auto& x : c) clicks += (x = rng.bernoulli(0.3) ? 1 : 0);
    logs.push_back(make_log(i, Ranking(oracle::random_perm(5, rng)), c));
  }
  const TargetPolicy same = [&](std::size_t id) { return logs[id].displayed_ranking; };
  const Weighting w{EstimatorKind::pbm, 1, PositionBiasCurve::inverse_rank(5)};
  const auto r = estimate(logs, same, w, {});
  EXPECT_NEAR(r.mean, clicks / 200.0, 1e-12);
  EXPECT_EQ(r.n_observations, 200u);
  EXPECT_NEAR(r.ci_high - r.mean, 1.96 * r.std_error, 1e-12);
  EXPECT_LE(r.ci_low, r.mean);
}

TEST(Estimate, ZeroClicks) {
  std::vector<ObservationLog> logs;
  for (std::size_t i = 0; i < 10; ++i) logs.push_back(make_log(i, Ranking::identity(4), {0, 0, 0, 0}));
  PropensityTable props(10, Matrix(4, 0.25));
  const auto r = estimate(logs, fixed_policy(Ranking({3, 2, 1, 0})), Weighting{}, props);
  EXPECT_EQ(r.mean, 0.0);
  EXPECT_EQ(r.ci_low, 0.0);
  EXPECT_EQ(r.ci_high, 0.0);
}

TEST(Estimate, EmptyLogsThrow) {
  EXPECT_THROW(estimate({}, fixed_policy(Ranking::identity(3)), Weighting{}, {}), Error);
}

TEST(Estimate, ZeroPropensityPropagates) {
  std::vector<ObservationLog> logs{make_log(0, Ranking::identity(2), {1, 0})};
  PropensityTable props{Matrix::from_ranking(Ranking({1, 0}))};
  EXPECT_THROW(estimate(logs, fixed_policy(Ranking::identity(2)), Weighting{}, props),
               SupportViolation);
}

TEST(Estimate, LambdaLinearity) {
  std::vector<ObservationLog> logs;
  Rng rng(4);
  for (std::size_t i = 0; i < 100; ++i) {
    std::vector<std::uint8_t> c(6);
    for (auto& x : c) x = rng.bernoulli(0.4) ? 1 : 0;
    logs.push_back(make_log(i, Ranking(oracle::random_perm(6, rng)), c));
  }
  PropensityTable props(logs.size(), Matrix(6, 1.0 / 6.0));
  const Weighting w{EstimatorKind::interpol, 2, PositionBiasCurve::inverse_rank(6)};
  EstimateOptions base;
  base.lambda = LambdaKind::dcg;
  const auto r1 = estimate(logs, fixed_policy(Ranking::identity(6)), w, props, base);
  for (double c : {2.0, 0.5, 0.25}) {
    EstimateOptions scaled = base;
    scaled.lambda_scale = c;
    EXPECT_EQ(estimate(logs, fixed_policy(Ranking::identity(6)), w, props, scaled).mean,
              c * r1.mean);
  }
  EstimateOptions three = base;
  three.lambda_scale = 3.0;
  EXPECT_NEAR(estimate(logs, fixed_policy(Ranking::identity(6)), w, props, three).mean,
              3.0 * r1.mean, 1e-12);
}

TEST(Estimate, WeightsNonNegative) {
  Rng rng(21);
  for (int trial = 0; trial < 200; ++trial) {
    const Matrix p = matrix_from_rows(oracle::random_doubly_stochastic(6, 4, rng));
    const auto b = PositionBiasCurve::inverse_rank(6);
    const Item item = rng.next() % 6;
    const std::size_t t = 1 + rng.next() % 6, s = 1 + rng.next() % 6;
    EXPECT_GE(pbm_weight(b, t, s), 0.0);
    if (p(item, t - 1) > 0.0) {
      EXPECT_GE(ipm_weight(p, item, t, s), 0.0);
    }
  }
}

TEST(Estimate, BootstrapInterval) {
  std::vector<double> values;
  Rng rng(5);
  for (int i = 0; i < 2000; ++i) values.push_back(rng.normal(1.0, 1.0));
  EstimateOptions opt;
  opt.ci = CiMethod::bootstrap;
  const auto boot = summarize("x", values, opt);
  const auto normal = summarize("x", values);
  EXPECT_LE(boot.ci_low, boot.mean);
  EXPECT_GE(boot.ci_high, boot.mean);
  EXPECT_NEAR(boot.ci_high - boot.ci_low, normal.ci_high - normal.ci_low, 0.02);
}

TEST(TargetPolicy, ReferenceRanking) {
  EXPECT_EQ(reference_target_ranking(), Ranking({7, 0, 3, 1, 5, 6, 8, 9, 2, 4}));
}

TEST(EstimateJson, AllFields) {
  EstimateResult r = summarize("IPM", {1.0, 2.0, 3.0});
  const json j = to_json(r);
  for (const char* key :
       {"estimator_name", "mean", "std_error", "ci_low", "ci_high", "n_observations", "per_observation"})
    EXPECT_TRUE(j.contains(key)) << key;
  const auto back = estimate_from_json(j);
  EXPECT_EQ(back.mean, r.mean);
  EXPECT_EQ(back.per_observation, r.per_observation);
}

TEST(ObservationLogJson, RoundTripAndValidation) {
  ObservationLog log = make_log(12, Ranking({2, 0, 1}), {1, 0, 1});
  log.ranker_ranking = Ranking({0, 1, 2});
  log.sampled_component = 3;
  log.decomposition_ref = "bvn";
  log.ruleset_ref = "pins";
  const json j = to_json(log);
  const auto back = log_from_json(j);
  EXPECT_EQ(to_json(back), j);
  json bad = j;
  bad["clicks"] = {1, 0};
  EXPECT_THROW(log_from_json(bad), Error);
  bad = j;
  bad["clicks"] = {1, 2, 0};
  EXPECT_THROW(log_from_json(bad), Error);
}

}  // namespace
}  // namespace ope
