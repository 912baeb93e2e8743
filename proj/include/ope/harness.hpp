#pragma once

// Experiment pipeline: simulate logs, fit the position-bias curve, build
// (corrected) propensities, run the estimators, and compare against an
// on-policy oracle.

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "ope/bvn.hpp"
#include "ope/correction.hpp"
#include "ope/error.hpp"
#include "ope/estimators.hpp"
#include "ope/io.hpp"
#include "ope/position_bias.hpp"
#include "ope/rules.hpp"
#include "ope/simulator.hpp"

namespace ope {

enum class PinSelector { low_relevance, high_relevance, explicit_item };

struct PinSetting {
  PinSelector selector = PinSelector::low_relevance;
  Item item = 0;                     // explicit_item only
  std::size_t target_position = 1;   // 1-based
  double probability = 0.95;
};

struct EstimatorChoice {
  EstimatorKind kind = EstimatorKind::ipm;
  std::size_t window = 1;
};

struct ExperimentSpec {
  std::string name = "experiment";
  SimulationConfig sim;
  std::optional<PinSetting> pin;
  PropensityMode correction = PropensityMode::raw;
  std::size_t mc_samples = 1000;
  std::optional<double> assumed_probability;
  std::vector<EstimatorChoice> estimators{{EstimatorKind::pbm, 1},
                                          {EstimatorKind::ipm, 1},
                                          {EstimatorKind::interpol, 1},
                                          {EstimatorKind::interpol, 3}};
  LambdaKind lambda = LambdaKind::unit;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  std::size_t oracle_samples = 1'000'000;
  std::uint64_t oracle_seed = 20'240'000;
  SgdConfig sgd;
  std::vector<Item> target_top{7, 0, 3, 1};
  std::vector<Item> target_bottom{2, 4};
};

/// Lowest-index irrelevant item, or highest-index relevant item.
inline Item resolve_pinned_item(const SimulationConfig& sim, const PinSetting& pin) {
  switch (pin.selector) {
    case PinSelector::explicit_item:
      if (pin.item >= sim.n_items) throw Error("pin: item out of range");
      return pin.item;
    case PinSelector::low_relevance:
      for (Item j = 0; j < sim.n_items; ++j)
        if (!sim.is_relevant_item(j)) return j;
      throw Error("pin: no low-relevance item");
    case PinSelector::high_relevance:
      for (Item j = sim.n_items; j-- > 0;)
        if (sim.is_relevant_item(j)) return j;
      throw Error("pin: no high-relevance item");
  }
  throw Error("pin: bad selector");
}

inline RuleSet experiment_rules(const ExperimentSpec& spec) {
  if (!spec.pin) return spec.sim.ruleset;
  return RuleSet({{resolve_pinned_item(spec.sim, *spec.pin), spec.pin->target_position,
                   spec.pin->probability}});
}

inline Ranking experiment_target(const ExperimentSpec& spec) {
  return top_bottom_ranking(spec.sim.n_items, spec.target_top, spec.target_bottom);
}

inline void validate(const ExperimentSpec& spec) {
  validate(spec.sim);
  if (spec.seeds.empty()) throw Error("experiment: no seeds");
  if (spec.estimators.empty()) throw Error("experiment: no estimators");
  const RuleSet rules = experiment_rules(spec);
  if (spec.correction == PropensityMode::exact && !rules.empty()) {
    const bool deterministic = spec.assumed_probability ? *spec.assumed_probability == 1.0
                                                        : rules.all_deterministic();
    if (!deterministic) throw Error("experiment: exact correction requires pin probability 1");
  }
  if (spec.correction == PropensityMode::mc && spec.mc_samples == 0)
    throw Error("experiment: mc correction needs mc_samples >= 1");
  for (const auto& e : spec.estimators)
    if (e.kind == EstimatorKind::interpol && (e.window < 1 || e.window > spec.sim.n_items))
      throw Error("experiment: interpol window outside [1,n]");
  (void)experiment_target(spec);
}

struct SeedOutcome {
  std::uint64_t seed = 0;
  PositionBiasCurve curve;
  std::vector<EstimateResult> estimates;  // per_observation cleared
  std::vector<std::string> estimator_errors;  // parallel to estimates; empty = ok
  std::vector<SupportGap> support_gaps;   // unique (item, position) pairs
};

struct ExperimentResult {
  std::string name;
  OracleValue oracle;
  std::vector<SeedOutcome> seeds;

  bool has_support_violations() const {
    for (const auto& s : seeds)
      if (!s.support_gaps.empty()) return true;
    return false;
  }
};

inline OracleValue experiment_oracle(const ExperimentSpec& spec) {
  Rng rng(spec.oracle_seed);
  return oracle_on_policy_value(spec.sim, fixed_policy(experiment_target(spec)),
                                spec.oracle_samples, rng, spec.lambda);
}

/// Runs one seed of the pipeline.
inline SeedOutcome run_seed(const ExperimentSpec& spec, const BvnDecomposition& bvn,
                            std::uint64_t seed) {
  SimulationConfig sim = spec.sim;
  sim.seed = seed;
  const RuleSet rules = experiment_rules(spec);
  const std::vector<ObservationLog> logs = simulate(sim, bvn, rules);

  // With a correction in place, the curve comes from randomized traffic
  // collected before pinning; otherwise from the (possibly pinned) logs.
  SeedOutcome out;
  out.seed = seed;
  if (spec.correction != PropensityMode::raw && !rules.empty()) {
    SimulationConfig calib = sim;
    calib.seed = Rng(seed).split(0xB1A5).next();
    const auto pre = simulate(calib, bvn, RuleSet{});
    out.curve = fit_position_bias(harvest_interventions(pre), sim.n_items, spec.sgd);
  } else {
    out.curve = fit_position_bias(harvest_interventions(logs), sim.n_items, spec.sgd);
  }

  LogRegistry reg;
  reg.decompositions.emplace("bvn", bvn);
  reg.rulesets.emplace("rules", rules);
  PropensityOptions popt;
  popt.mode = spec.correction;
  popt.mc_samples = spec.mc_samples;
  popt.mc_seed = seed;
  popt.assumed_rule_probability = spec.assumed_probability;
  const PropensityTable props = propensity_table(logs, reg, popt);

  const Ranking target = experiment_target(spec);
  std::vector<bool> flagged(sim.n_items * sim.n_items, false);
  for (const auto& p : props)
    for (const auto& gap : check_full_support(p, target, 0.0)) {
      const std::size_t key = gap.item * sim.n_items + (gap.position - 1);
      if (!flagged[key]) {
        flagged[key] = true;
        out.support_gaps.push_back(gap);
      }
    }

  EstimateOptions eopt;
  eopt.lambda = spec.lambda;
  for (const auto& choice : spec.estimators) {
    Weighting w{choice.kind, choice.window, out.curve};
    try {
      EstimateResult r = estimate(logs, fixed_policy(target), w, props, eopt);
      r.per_observation.clear();
      out.estimates.push_back(std::move(r));
      out.estimator_errors.emplace_back();
    } catch (const Error& e) {
      EstimateResult r;
      r.estimator_name = w.name();
      out.estimates.push_back(std::move(r));
      out.estimator_errors.emplace_back(e.what());
    }
  }
  return out;
}

/// Full experiment over spec.seeds. Pass a precomputed oracle to share it
/// between experiments on the same simulation setup.
inline ExperimentResult run_experiment(const ExperimentSpec& spec,
                                       std::optional<OracleValue> oracle = std::nullopt) {
  validate(spec);
  ExperimentResult res;
  res.name = spec.name;
  res.oracle = oracle ? *oracle : experiment_oracle(spec);
  const BvnDecomposition bvn = logging_decomposition(spec.sim);
  for (std::uint64_t seed : spec.seeds) res.seeds.push_back(run_seed(spec, bvn, seed));
  return res;
}

inline constexpr const char* kSummaryHeader = "cell,estimator,seed,mean,se,ci_low,ci_high,oracle,covered";

namespace detail {

/// Calls fn(i) for i in [0, count) on up to `workers` threads.
template <class Fn>
void parallel_for(std::size_t count, std::size_t workers, Fn&& fn) {
  workers = std::min(workers, count);
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i; (i = next.fetch_add(1)) < count;) fn(i);
    });
  for (auto& t : pool) t.join();
}

inline std::string csv_number(double v) {
  std::ostringstream s;
  s.precision(17);
  s << v;
  return s.str();
}

}  // namespace detail

/// One CSV row per (estimator, seed); failed estimators are skipped.
inline void write_summary_rows(std::ostream& out, const ExperimentResult& res) {
  for (const auto& s : res.seeds)
    for (std::size_t e = 0; e < s.estimates.size(); ++e) {
      if (!s.estimator_errors[e].empty()) continue;
      const auto& r = s.estimates[e];
      out << res.name << ',' << r.estimator_name << ',' << s.seed << ','
          << detail::csv_number(r.mean) << ',' << detail::csv_number(r.std_error) << ','
          << detail::csv_number(r.ci_low) << ',' << detail::csv_number(r.ci_high) << ','
          << detail::csv_number(res.oracle.mean) << ','
          << (r.covers(res.oracle.mean) ? "true" : "false") << '\n';
    }
}

inline json to_json(const ExperimentResult& res) {
  json seeds = json::array();
  for (const auto& s : res.seeds) {
    json est = json::array();
    for (std::size_t e = 0; e < s.estimates.size(); ++e) {
      json j = to_json(s.estimates[e], false);
      j["covered"] = s.estimates[e].covers(res.oracle.mean);
      if (!s.estimator_errors[e].empty()) j["error"] = s.estimator_errors[e];
      est.push_back(std::move(j));
    }
    json gaps = json::array();
    for (const auto& g : s.support_gaps)
      gaps.push_back({{"item", g.item}, {"position", g.position}, {"propensity", g.propensity}});
    seeds.push_back({{"seed", s.seed},
                     {"curve", to_json(s.curve)},
                     {"estimates", est},
                     {"support_violations", gaps}});
  }
  return {{"name", res.name},
          {"oracle", {{"mean", res.oracle.mean},
                      {"std_error", res.oracle.std_error},
                      {"samples", res.oracle.samples}}},
          {"seeds", seeds}};
}

/// Writes <out>/<name>.csv, <name>.json and one curve file per seed.
inline void write_experiment(const ExperimentResult& res, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream csv(dir / (res.name + ".csv"));
    if (!csv) throw Error("cannot write " + (dir / (res.name + ".csv")).string());
    csv << kSummaryHeader << '\n';
    write_summary_rows(csv, res);
  }
  write_json_file((dir / (res.name + ".json")).string(), to_json(res));
  for (const auto& s : res.seeds)
    write_json_file((dir / (res.name + ".curve." + std::to_string(s.seed) + ".json")).string(),
                    to_json(s.curve));
}

// ---- spec files ----

inline PropensityMode propensity_mode_from_string(const std::string& s) {
  if (s == "none" || s == "raw") return PropensityMode::raw;
  if (s == "exact") return PropensityMode::exact;
  if (s == "stochastic") return PropensityMode::stochastic;
  if (s == "mc") return PropensityMode::mc;
  throw Error("unknown correction mode '" + s + "'");
}

inline std::string to_string(PropensityMode m) {
  switch (m) {
    case PropensityMode::raw: return "none";
    case PropensityMode::exact: return "exact";
    case PropensityMode::stochastic: return "stochastic";
    case PropensityMode::mc: return "mc";
  }
  return "?";
}

inline LambdaKind lambda_kind_from_string(const std::string& s) {
  if (s == "unit") return LambdaKind::unit;
  if (s == "dcg") return LambdaKind::dcg;
  if (s == "dcg_log2") return LambdaKind::dcg_log2;
  throw Error("unknown lambda kind '" + s + "'");
}

/// "pbm", "ipm", "interpol(3)" or "interpol:3".
inline EstimatorChoice estimator_from_string(const std::string& s) {
  if (s == "pbm") return {EstimatorKind::pbm, 1};
  if (s == "ipm") return {EstimatorKind::ipm, 1};
  if (s.rfind("interpol", 0) == 0) {
    std::string rest = s.substr(8);
    if (rest.size() >= 2 && (rest.front() == '(' || rest.front() == ':')) {
      if (rest.front() == '(' && rest.back() == ')') rest = rest.substr(1, rest.size() - 2);
      else if (rest.front() == ':') rest = rest.substr(1);
      else throw Error("bad estimator '" + s + "'");
      std::size_t used = 0;
      const unsigned long w = std::stoul(rest, &used);
      if (used != rest.size() || w == 0) throw Error("bad interpol window in '" + s + "'");
      return {EstimatorKind::interpol, static_cast<std::size_t>(w)};
    }
  }
  throw Error("unknown estimator '" + s + "'");
}

inline ExperimentSpec experiment_spec_from_json(const json& j) {
  ExperimentSpec spec;
  spec.name = j.value("name", spec.name);
  if (j.contains("simulation")) spec.sim = simulation_config_from_json(j.at("simulation"));
  if (j.contains("pin") && !j.at("pin").is_null()) {
    const auto& p = j.at("pin");
    PinSetting pin;
    const auto item = p.value("item", json("low-relevance"));
    if (item.is_string()) {
      const auto s = item.get<std::string>();
      if (s == "low-relevance") pin.selector = PinSelector::low_relevance;
      else if (s == "high-relevance") pin.selector = PinSelector::high_relevance;
      else throw Error("pin.item: unknown selector '" + s + "'");
    } else {
      pin.selector = PinSelector::explicit_item;
      pin.item = item.get<Item>();
    }
    const auto target = p.value("target", json(1));
    if (target.is_string()) {
      const auto s = target.get<std::string>();
      if (s == "first") pin.target_position = 1;
      else if (s == "last") pin.target_position = spec.sim.n_items;
      else throw Error("pin.target: expected first, last or a position");
    } else {
      pin.target_position = target.get<std::size_t>();
    }
    pin.probability = p.value("p", pin.probability);
    spec.pin = pin;
  }
  if (j.contains("correction")) {
    const auto& c = j.at("correction");
    if (c.is_string()) {
      spec.correction = propensity_mode_from_string(c.get<std::string>());
    } else {
      spec.correction = propensity_mode_from_string(c.at("mode").get<std::string>());
      spec.mc_samples = c.value("mc_samples", spec.mc_samples);
      if (c.contains("assumed_probability") && !c.at("assumed_probability").is_null())
        spec.assumed_probability = c.at("assumed_probability").get<double>();
    }
  }
  if (j.contains("estimators")) {
    spec.estimators.clear();
    for (const auto& e : j.at("estimators")) spec.estimators.push_back(estimator_from_string(e));
  }
  if (j.contains("lambda")) spec.lambda = lambda_kind_from_string(j.at("lambda"));
  if (j.contains("seeds")) spec.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  spec.oracle_samples = j.value("oracle_samples", spec.oracle_samples);
  spec.oracle_seed = j.value("oracle_seed", spec.oracle_seed);
  if (j.contains("sgd")) {
    const auto& s = j.at("sgd");
    spec.sgd.initial_lr = s.value("initial_lr", spec.sgd.initial_lr);
    spec.sgd.decay = s.value("decay", spec.sgd.decay);
    spec.sgd.epochs = s.value("epochs", spec.sgd.epochs);
    spec.sgd.seed = s.value("seed", spec.sgd.seed);
    if (s.contains("weighting")) {
      const auto w = s.at("weighting").get<std::string>();
      if (w == "min_impressions") spec.sgd.weighting = PairWeight::min_impressions;
      else if (w == "inverse_variance") spec.sgd.weighting = PairWeight::inverse_variance;
      else throw Error("sgd.weighting: unknown '" + w + "'");
    }
  }
  if (j.contains("target")) {
    const auto& t = j.at("target");
    spec.target_top = t.value("top", spec.target_top);
    spec.target_bottom = t.value("bottom", spec.target_bottom);
  }
  validate(spec);
  return spec;
}

// ---- grid ----

struct GridCell {
  std::string id;
  ExperimentSpec spec;
};

/// The 4x4 pinning grid: {low, high} relevance item x {first, last} position
/// crossed with (applied p, correction, assumed p) in
///   (1.0, none), (0.95, none), (1.0, stochastic assuming 0.95),
///   (0.95, stochastic assuming 0.95).
inline std::vector<GridCell> pinning_grid(const ExperimentSpec& base) {
  struct Row {
    const char* id;
    PinSelector selector;
    bool last;
  };
  struct Col {
    const char* id;
    double applied;
    PropensityMode mode;
    std::optional<double> assumed;
  };
  const Row rows[] = {{"low-first", PinSelector::low_relevance, false},
                      {"low-last", PinSelector::low_relevance, true},
                      {"high-first", PinSelector::high_relevance, false},
                      {"high-last", PinSelector::high_relevance, true}};
  const Col cols[] = {{"p100-none", 1.0, PropensityMode::raw, std::nullopt},
                      {"p95-none", 0.95, PropensityMode::raw, std::nullopt},
                      {"p100-assume95", 1.0, PropensityMode::stochastic, 0.95},
                      {"p95-assume95", 0.95, PropensityMode::stochastic, 0.95}};
  std::vector<GridCell> cells;
  for (const auto& r : rows)
    for (const auto& c : cols) {
      ExperimentSpec s = base;
      s.name = std::string(r.id) + "." + c.id;
      s.pin = PinSetting{r.selector, 0, r.last ? base.sim.n_items : 1, c.applied};
      s.correction = c.mode;
      s.assumed_probability = c.assumed;
      cells.push_back({s.name, std::move(s)});
    }
  return cells;
}

/// Grid file: {"base": <experiment spec>, "cells": [<experiment spec overrides>]}.
/// Without "cells" the 4x4 pinning grid is generated from "base".
inline std::vector<GridCell> grid_from_json(const json& j) {
  const json base_json = j.value("base", json::object());
  const ExperimentSpec base = experiment_spec_from_json(base_json);
  if (!j.contains("cells")) return pinning_grid(base);
  std::vector<GridCell> cells;
  for (const auto& c : j.at("cells")) {
    json merged = base_json;
    merged.merge_patch(c);
    ExperimentSpec s = experiment_spec_from_json(merged);
    cells.push_back({s.name, std::move(s)});
  }
  return cells;
}

struct GridOutcome {
  std::vector<ExperimentResult> results;
  std::vector<std::pair<std::string, std::string>> failures;  // (cell id, message)
};

/// Runs every cell, writing per-cell bundles under `dir` and `dir/summary.csv`.
/// A failing cell is recorded and the grid continues. Oracle values are
/// shared between cells with identical simulation and target setups. Cells
/// run on up to `workers` threads (0 = hardware concurrency); output does not
/// depend on the worker count.
inline GridOutcome run_grid(const std::vector<GridCell>& cells, const std::filesystem::path& dir,
                            std::size_t workers = 0) {
  std::filesystem::create_directories(dir);
  std::ofstream summary(dir / "summary.csv");
  if (!summary) throw Error("cannot write " + (dir / "summary.csv").string());
  summary << kSummaryHeader << '\n';

  struct Slot {
    std::optional<ExperimentResult> result;
    std::string error;
    std::size_t oracle = 0;
  };
  std::vector<Slot> slots(cells.size());
  std::vector<std::string> keys;
  std::vector<const ExperimentSpec*> key_specs;
  for (std::size_t c = 0; c < cells.size(); ++c) {
    try {
      validate(cells[c].spec);
      const auto& spec = cells[c].spec;
      json key = {{"sim", to_json(spec.sim)},        {"top", spec.target_top},
                  {"bottom", spec.target_bottom},    {"n", spec.oracle_samples},
                  {"seed", spec.oracle_seed},        {"lambda", static_cast<int>(spec.lambda)}};
      key["sim"].erase("ruleset");
      key["sim"].erase("seed");
      const std::string k = key.dump();
      const auto it = std::find(keys.begin(), keys.end(), k);
      slots[c].oracle = static_cast<std::size_t>(it - keys.begin());
      if (it == keys.end()) {
        keys.push_back(k);
        key_specs.push_back(&spec);
      }
    } catch (const std::exception& e) {
      slots[c].error = e.what();
    }
  }

  if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
  std::vector<OracleValue> oracles(keys.size());
  detail::parallel_for(keys.size(), workers,
                       [&](std::size_t i) { oracles[i] = experiment_oracle(*key_specs[i]); });
  detail::parallel_for(cells.size(), workers, [&](std::size_t c) {
    if (!slots[c].error.empty()) return;
    try {
      ExperimentResult r = run_experiment(cells[c].spec, oracles[slots[c].oracle]);
      write_experiment(r, dir / cells[c].id);
      slots[c].result = std::move(r);
    } catch (const std::exception& e) {
      slots[c].error = e.what();
    }
  });

  GridOutcome out;
  for (std::size_t c = 0; c < cells.size(); ++c) {
    if (slots[c].result) {
      write_summary_rows(summary, *slots[c].result);
      out.results.push_back(std::move(*slots[c].result));
    } else {
      out.failures.emplace_back(cells[c].id, slots[c].error);
    }
  }
  return out;
}

}  // namespace ope
