#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "ope/harness.hpp"

namespace ope {
namespace {

namespace fs = std::filesystem;

ExperimentSpec small_spec() {
  ExperimentSpec s;
  s.name = "small";
  s.sim.n_rankings = 3000;
  s.seeds = {1, 2};
  s.oracle_samples = 20000;
  return s;
}

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("ope_test_" + name);
  fs::remove_all(p);
  return p;
}

std::vector<std::string> lines_of(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

TEST(Spec, ParsesJson) {
  const auto spec = experiment_spec_from_json(json::parse(R"js({
    "name": "cell",
    "simulation": {"n_rankings": 1000, "stay_probability": 0.9},
    "pin": {"item": "high-relevance", "target": "last", "p": 0.95},
    "correction": {"mode": "stochastic", "assumed_probability": 0.95},
    "estimators": ["pbm", "ipm", "interpol(3)", "interpol:2"],
    "lambda": "dcg",
    "seeds": [4, 5],
    "oracle_samples": 500
  })js"));
  EXPECT_EQ(spec.name, "cell");
  EXPECT_EQ(spec.sim.n_rankings, 1000u);
  ASSERT_TRUE(spec.pin.has_value());
  EXPECT_EQ(resolve_pinned_item(spec.sim, *spec.pin), 7u);
  EXPECT_EQ(spec.pin->target_position, 10u);
  EXPECT_EQ(spec.correction, PropensityMode::stochastic);
  EXPECT_EQ(*spec.assumed_probability, 0.95);
  ASSERT_EQ(spec.estimators.size(), 4u);
  EXPECT_EQ(spec.estimators[2].window, 3u);
  EXPECT_EQ(spec.estimators[3].window, 2u);
  EXPECT_EQ(spec.lambda, LambdaKind::dcg);
  EXPECT_EQ(experiment_target(spec), reference_target_ranking());
}

TEST(Spec, RejectsBadInput) {
  EXPECT_THROW(experiment_spec_from_json(json::parse(R"js({"estimators": ["snips"]})js")), Error);
  EXPECT_THROW(experiment_spec_from_json(json::parse(R"js({"correction": "magic"})js")), Error);
  EXPECT_THROW(experiment_spec_from_json(json::parse(R"js({"estimators": ["interpol(0)"]})js")), Error);
  EXPECT_THROW(experiment_spec_from_json(
                   json::parse(R"js({"pin": {"p": 0.95}, "correction": "exact"})js")),
               Error);
}

TEST(Spec, PinnedItemSelectors) {
  SimulationConfig sim;
  EXPECT_EQ(resolve_pinned_item(sim, {PinSelector::low_relevance, 0, 1, 1.0}), 0u);
  EXPECT_EQ(resolve_pinned_item(sim, {PinSelector::high_relevance, 0, 1, 1.0}), 7u);
  EXPECT_EQ(resolve_pinned_item(sim, {PinSelector::explicit_item, 5, 1, 1.0}), 5u);
}

TEST(Experiment, SummaryRowsAndReproducibility) {
  const auto spec = small_spec();
  const auto a = run_experiment(spec);
  const auto b = run_experiment(spec);
  std::ostringstream sa, sb;
  write_summary_rows(sa, a);
  write_summary_rows(sb, b);
  EXPECT_EQ(sa.str(), sb.str());
  std::istringstream in(sa.str());
  std::size_t rows = 0;
  for (std::string line; std::getline(in, line);) {
    ++rows;
    EXPECT_EQ(std::count(line.begin(), line.end(), ','), 8);
  }
  EXPECT_EQ(rows, spec.seeds.size() * spec.estimators.size());
  EXPECT_FALSE(a.has_support_violations());
}

TEST(Experiment, WritesBundle) {
  const auto dir = scratch_dir("bundle");
  const auto res = run_experiment(small_spec());
  write_experiment(res, dir);
  const auto csv = lines_of(dir / "small.csv");
  ASSERT_EQ(csv.size(), 1 + 2 * 4u);
  EXPECT_EQ(csv[0], "cell,estimator,seed,mean,se,ci_low,ci_high,oracle,covered");
  const json curve = read_json_file((dir / "small.curve.1.json").string());
  ASSERT_TRUE(curve.is_array());
  EXPECT_EQ(curve.size(), 10u);
  EXPECT_EQ(curve[0].get<double>(), 1.0);
  const json full = read_json_file((dir / "small.json").string());
  EXPECT_EQ(full.at("seeds").size(), 2u);
  fs::remove_all(dir);
}

TEST(Experiment, DeterministicPinReportsSupportGaps) {
  auto spec = small_spec();
  spec.seeds = {1};
  spec.pin = PinSetting{PinSelector::low_relevance, 0, 1, 1.0};
  spec.correction = PropensityMode::exact;
  const auto res = run_experiment(spec);
  EXPECT_TRUE(res.has_support_violations());
  // Matching ranks never occur for the unreachable pairs, so the estimators
  // run; the gaps are what flags the result.
  const auto& gaps = res.seeds[0].support_gaps;
  auto has = [&](Item item, std::size_t pos) {
    return std::find(gaps.begin(), gaps.end(), SupportGap{item, pos, 0.0}) != gaps.end();
  };
  EXPECT_TRUE(has(7, 1));
  EXPECT_TRUE(has(0, 2));
  // Other pairs can be unreachable under a given BvN support too.
  for (const auto& g : gaps) EXPECT_EQ(g.propensity, 0.0);
}

TEST(Grid, PinningGridShape) {
  const auto cells = pinning_grid(small_spec());
  ASSERT_EQ(cells.size(), 16u);
  EXPECT_EQ(cells[0].id, "low-first.p100-none");
  EXPECT_EQ(cells[15].id, "high-last.p95-assume95");
  EXPECT_EQ(cells[15].spec.pin->target_position, 10u);
  EXPECT_EQ(cells[15].spec.correction, PropensityMode::stochastic);
  EXPECT_EQ(*cells[15].spec.assumed_probability, 0.95);
}

TEST(Grid, RecordsFailuresAndContinues) {
  const auto dir = scratch_dir("grid");
  auto base = small_spec();
  base.seeds = {1};
  base.estimators = {{EstimatorKind::pbm, 1}};
  std::vector<GridCell> cells;
  cells.push_back({"ok", base});
  auto broken = base;
  broken.name = "broken";
  broken.estimators = {{EstimatorKind::interpol, 99}};
  cells.push_back({"broken", broken});
  auto second = base;
  second.name = "ok2";
  cells.push_back({"ok2", second});
  const auto out = run_grid(cells, dir);
  EXPECT_EQ(out.results.size(), 2u);
  ASSERT_EQ(out.failures.size(), 1u);
  EXPECT_EQ(out.failures[0].first, "broken");
  const auto summary = lines_of(dir / "summary.csv");
  EXPECT_EQ(summary.size(), 3u);
  // Identical setups share one oracle.
  EXPECT_EQ(out.results[0].oracle.mean, out.results[1].oracle.mean);
  fs::remove_all(dir);
}

TEST(Grid, FromJsonOverrides) {
  const auto cells = grid_from_json(json::parse(R"js({
    "base": {"simulation": {"n_rankings": 100}, "seeds": [1]},
    "cells": [{"name": "a"}, {"name": "b", "pin": {"item": 3, "target": 2, "p": 1.0}}]
  })js"));
  ASSERT_EQ(cells.size(), 2u);
  EXPECT_EQ(cells[1].id, "b");
  EXPECT_EQ(resolve_pinned_item(cells[1].spec.sim, *cells[1].spec.pin), 3u);
  EXPECT_EQ(grid_from_json(json::parse(R"js({"base": {"seeds": [1]}})js")).size(), 16u);
}

}  // namespace
}  // namespace ope
