// ope: simulate logs, correct propensities, estimate, and run experiments.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "ope/ope.hpp"

namespace fs = std::filesystem;
using namespace ope;

namespace {

constexpr int kExitError = 1;
constexpr int kExitViolation = 2;

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string format = "csv";
  bool allow_violations = false;
  std::optional<std::size_t> mc_samples;
};

std::vector<Item> parse_items(const std::string& s) {
  std::vector<Item> out;
  std::size_t pos = 0;
  while (pos <= s.size()) {
    const std::size_t comma = std::min(s.find(',', pos), s.size());
    const std::string tok = s.substr(pos, comma - pos);
    std::size_t used = 0;
    const unsigned long v = std::stoul(tok, &used);
    if (used != tok.size()) throw Error("bad item list '" + s + "'");
    out.push_back(static_cast<Item>(v));
    pos = comma + 1;
  }
  return out;
}

ExperimentSpec load_spec(const Common& c) {
  ExperimentSpec spec = c.config.empty() ? ExperimentSpec{} : experiment_spec_from_json(read_json_file(c.config));
  if (c.seed) {
    spec.seeds = {*c.seed};
    spec.sim.seed = *c.seed;
  }
  if (c.mc_samples) spec.mc_samples = *c.mc_samples;
  validate(spec);
  return spec;
}

void print_gaps(const std::vector<SupportGap>& gaps) {
  for (const auto& g : gaps)
    spdlog::error("full-support violation: item {} at position {} has propensity {}", g.item,
                  g.position, g.propensity);
}

void print_matrix(const Matrix& m, const std::string& format, const std::string& kind) {
  if (format == "json") {
    std::cout << matrix_to_json(m, kind).dump(2) << '\n';
    return;
  }
  std::cout.precision(17);
  for (std::size_t i = 0; i < m.size(); ++i) {
    for (std::size_t k = 0; k < m.size(); ++k) std::cout << (k ? "," : "") << m(i, k);
    std::cout << '\n';
  }
}

void print_estimates(const std::vector<EstimateResult>& rs, const std::string& format) {
  if (format == "json") {
    json arr = json::array();
    for (const auto& r : rs) arr.push_back(to_json(r, false));
    std::cout << arr.dump(2) << '\n';
    return;
  }
  std::cout.precision(17);
  std::cout << "estimator,mean,se,ci_low,ci_high,n\n";
  for (const auto& r : rs)
    std::cout << r.estimator_name << ',' << r.mean << ',' << r.std_error << ',' << r.ci_low << ','
              << r.ci_high << ',' << r.n_observations << '\n';
}

// simulate: logs.jsonl, bvn.json and rules.json under --out.
int cmd_simulate(const Common& c) {
  const ExperimentSpec spec = load_spec(c);
  SimulationConfig sim = spec.sim;
  if (!c.seed) sim.seed = spec.seeds.front();
  const RuleSet rules = experiment_rules(spec);
  const BvnDecomposition bvn = logging_decomposition(sim);
  spdlog::info("simulating {} rankings, seed {}, {} rule(s), {} BvN components", sim.n_rankings,
               sim.seed, rules.size(), bvn.size());
  const auto logs = simulate(sim, bvn, rules);
  const fs::path dir = c.out.empty() ? fs::path(".") : fs::path(c.out);
  fs::create_directories(dir);
  std::ofstream out(dir / "logs.jsonl");
  if (!out) throw Error("cannot write " + (dir / "logs.jsonl").string());
  write_jsonl(out, logs);
  write_json_file((dir / "bvn.json").string(), to_json(bvn));
  write_json_file((dir / "rules.json").string(), to_json(rules));
  spdlog::info("wrote {}", dir.string());
  return 0;
}

struct CorrectArgs {
  std::string decomposition;
  std::string rules;
  std::string ranking;
  std::string mode = "stochastic";
  std::optional<double> assume_p;
  std::string target;
};

int cmd_correct(const Common& c, const CorrectArgs& a) {
  const BvnDecomposition d = decomposition_from_json(read_json_file(a.decomposition));
  RuleSet rules = a.rules.empty() ? RuleSet{} : ruleset_from_json(read_json_file(a.rules));
  if (a.assume_p) rules = rules.with_probability(*a.assume_p);
  const Ranking base = a.ranking.empty() ? Ranking::identity(d.n()) : Ranking(parse_items(a.ranking));
  Matrix p;
  switch (propensity_mode_from_string(a.mode)) {
    case PropensityMode::raw: p = raw_propensities(base, d); break;
    case PropensityMode::exact: p = correct_exact(base, d, rules); break;
    case PropensityMode::stochastic: p = correct_stochastic(base, d, rules); break;
    case PropensityMode::mc: {
      Rng rng(c.seed.value_or(0));
      p = correct_mc(bvn_sampler(base, d), rules, c.mc_samples.value_or(10'000), rng);
      break;
    }
  }
  print_matrix(p, c.format, a.mode == "none" || a.mode == "raw" ? "propensity" : "corrected");
  if (!a.target.empty()) {
    const auto gaps = check_full_support(p, Ranking(parse_items(a.target)));
    if (!gaps.empty()) {
      print_gaps(gaps);
      if (!c.allow_violations) return kExitViolation;
    }
  }
  return 0;
}

struct EstimateArgs {
  std::string logs;
  std::string target;
  std::vector<std::string> estimators{"pbm", "ipm", "interpol(1)", "interpol(3)"};
  std::string mode = "stochastic";
  std::optional<double> assume_p;
  std::string curve;
  std::string lambda = "unit";
};

int cmd_estimate(const Common& c, const EstimateArgs& a) {
  const fs::path dir(a.logs);
  std::ifstream in(dir / "logs.jsonl");
  if (!in) throw Error("cannot open " + (dir / "logs.jsonl").string());
  const auto logs = read_jsonl(in);
  if (logs.empty()) throw Error("no logs in " + (dir / "logs.jsonl").string());
  const std::size_t n = logs.front().displayed_ranking.size();

  LogRegistry reg;
  reg.decompositions.emplace(logs.front().decomposition_ref,
                             decomposition_from_json(read_json_file((dir / "bvn.json").string())));
  const fs::path rules_path = dir / "rules.json";
  reg.rulesets.emplace(logs.front().ruleset_ref, fs::exists(rules_path)
                                                     ? ruleset_from_json(read_json_file(rules_path.string()))
                                                     : RuleSet{});
  PropensityOptions popt;
  popt.mode = propensity_mode_from_string(a.mode);
  popt.mc_samples = c.mc_samples.value_or(popt.mc_samples);
  popt.mc_seed = c.seed.value_or(0);
  popt.assumed_rule_probability = a.assume_p;
  const PropensityTable props = propensity_table(logs, reg, popt);

  const PositionBiasCurve curve = a.curve.empty()
                                      ? fit_position_bias(harvest_interventions(logs), n)
                                      : curve_from_json(read_json_file(a.curve));
  const Ranking target = a.target.empty() ? reference_target_ranking(n) : Ranking(parse_items(a.target));

  std::vector<SupportGap> gaps;
  for (const auto& p : props)
    for (const auto& g : check_full_support(p, target))
      if (std::find(gaps.begin(), gaps.end(), g) == gaps.end()) gaps.push_back(g);
  if (!gaps.empty()) {
    print_gaps(gaps);
    if (!c.allow_violations) return kExitViolation;
  }

  EstimateOptions eopt;
  eopt.lambda = lambda_kind_from_string(a.lambda);
  std::vector<EstimateResult> results;
  for (const auto& name : a.estimators) {
    const EstimatorChoice e = estimator_from_string(name);
    try {
      results.push_back(estimate(logs, fixed_policy(target), Weighting{e.kind, e.window, curve}, props, eopt));
    } catch (const SupportViolation& v) {
      spdlog::warn("{}: {}", name, v.what());
    }
  }
  print_estimates(results, c.format);
  return 0;
}

int cmd_run(const Common& c) {
  const ExperimentSpec spec = load_spec(c);
  spdlog::info("running '{}': {} seed(s), correction {}", spec.name, spec.seeds.size(),
               to_string(spec.correction));
  const ExperimentResult res = run_experiment(spec);
  spdlog::info("oracle {} (se {})", res.oracle.mean, res.oracle.std_error);
  const fs::path dir = c.out.empty() ? fs::path(spec.name) : fs::path(c.out);
  write_experiment(res, dir);
  if (c.format == "json") {
    std::cout << to_json(res).dump(2) << '\n';
  } else {
    std::cout << kSummaryHeader << '\n';
    write_summary_rows(std::cout, res);
  }
  for (const auto& s : res.seeds)
    for (std::size_t e = 0; e < s.estimates.size(); ++e)
      if (!s.estimator_errors[e].empty())
        spdlog::warn("seed {} {}: {}", s.seed, s.estimates[e].estimator_name, s.estimator_errors[e]);
  if (res.has_support_violations()) {
    for (const auto& s : res.seeds) print_gaps(s.support_gaps);
    if (!c.allow_violations) return kExitViolation;
  }
  return 0;
}

int cmd_grid(const Common& c, std::size_t workers) {
  if (c.config.empty()) throw Error("grid needs --config");
  json j = read_json_file(c.config);
  if (c.seed) j["base"]["seeds"] = {*c.seed};
  if (c.mc_samples) {
    json& corr = j["base"]["correction"];
    if (corr.is_string()) corr = json{{"mode", corr}};
    if (corr.is_object()) corr["mc_samples"] = *c.mc_samples;
  }
  const auto cells = grid_from_json(j);
  const fs::path dir = c.out.empty() ? fs::path("grid") : fs::path(c.out);
  spdlog::info("running {} grid cells into {}", cells.size(), dir.string());
  const GridOutcome out = run_grid(cells, dir, workers);
  for (const auto& [id, msg] : out.failures) spdlog::error("cell {} failed: {}", id, msg);
  bool violations = false;
  for (const auto& r : out.results) violations = violations || r.has_support_violations();
  if (violations) spdlog::warn("some cells have full-support violations; see their JSON bundles");
  std::ifstream summary(dir / "summary.csv");
  std::cout << summary.rdbuf();
  if (!out.failures.empty()) return kExitError;
  return violations && !c.allow_violations ? kExitViolation : 0;
}

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "JSON spec file");
  app->add_option("--seed", c.seed, "seed override");
  app->add_option("--out", c.out, "output directory");
  app->add_option("--format", c.format, "stdout format")->check(CLI::IsMember({"csv", "json"}));
  app->add_flag("--allow-violations", c.allow_violations, "exit 0 despite full-support violations");
  app->add_option("--mc-samples", c.mc_samples, "Monte Carlo samples for mc correction");
}

}  // namespace

int main(int argc, char** argv) {
  auto logger = spdlog::stderr_color_mt("ope");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("%^%l%$: %v");
  spdlog::set_level(spdlog::level::info);
  if (const char* lvl = std::getenv("OPE_LOG_LEVEL")) spdlog::set_level(spdlog::level::from_str(lvl));

  CLI::App app{"Off-policy evaluation for rankings with business rules"};
  app.require_subcommand(1);

  Common sim_c, corr_c, est_c, run_c, grid_c;
  auto* sim = app.add_subcommand("simulate", "generate logs (logs.jsonl, bvn.json, rules.json)");
  add_common(sim, sim_c);

  CorrectArgs ca;
  auto* corr = app.add_subcommand("correct", "propensity matrix for one ranker output");
  add_common(corr, corr_c);
  corr->add_option("--decomposition", ca.decomposition, "BvN decomposition JSON")->required();
  corr->add_option("--rules", ca.rules, "rule set JSON");
  corr->add_option("--ranking", ca.ranking, "ranker output, comma-separated items (default identity)");
  corr->add_option("--mode", ca.mode, "none|exact|stochastic|mc");
  corr->add_option("--assume-p", ca.assume_p, "assumed rule application probability");
  corr->add_option("--target", ca.target, "check full support for this target ranking");

  EstimateArgs ea;
  auto* est = app.add_subcommand("estimate", "estimate a target ranking's value from logs");
  add_common(est, est_c);
  est->add_option("--logs", ea.logs, "directory written by simulate")->required();
  est->add_option("--target", ea.target, "target ranking, comma-separated items");
  est->add_option("--estimator", ea.estimators, "pbm, ipm, interpol(w)");
  est->add_option("--mode", ea.mode, "propensity correction: none|exact|stochastic|mc");
  est->add_option("--assume-p", ea.assume_p, "assumed rule application probability");
  est->add_option("--curve", ea.curve, "position-bias curve JSON (default: fit from logs)");
  est->add_option("--lambda", ea.lambda, "unit|dcg|dcg_log2");

  auto* run = app.add_subcommand("run", "run one experiment spec over its seeds");
  add_common(run, run_c);

  std::size_t workers = 0;
  auto* grid = app.add_subcommand("grid", "run a grid of experiment cells");
  add_common(grid, grid_c);
  grid->add_option("--workers", workers, "parallel cells (0 = all cores)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*sim) return cmd_simulate(sim_c);
    if (*corr) return cmd_correct(corr_c, ca);
    if (*est) return cmd_estimate(est_c, ea);
    if (*run) return cmd_run(run_c);
    if (*grid) return cmd_grid(grid_c, workers);
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kExitError;
  }
  return kExitError;
}
