#pragma once

// JSON and JSONL encodings of the library types.
//
//   matrix         {"kind": "propensity"|"corrected", "n": int, "entries": [[...]]}
//   decomposition  {"n": int, "components": [{"perm": [int], "p": float}]}
//                  perm[s] is the 0-based destination slot of source slot s
//   rule set       {"rules": [{"item": int, "target": int, "p": float}]}
//                  target is a 1-based position
//   log line       {"context_id", "ranker_ranking", "sampled_component",
//                   "displayed_ranking", "clicks", "decomposition_ref", "ruleset_ref"}
//   curve          [b_1, ..., b_n]

#include <fstream>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ope/bvn.hpp"
#include "ope/error.hpp"
#include "ope/estimators.hpp"
#include "ope/ranking.hpp"
#include "ope/rules.hpp"
#include "ope/simulator.hpp"

namespace ope {

using json = nlohmann::json;

inline json matrix_to_json(const Matrix& m, const std::string& kind = "propensity") {
  json rows = json::array();
  for (std::size_t i = 0; i < m.size(); ++i)
    rows.push_back(std::vector<double>(m.row(i).begin(), m.row(i).end()));
  return {{"kind", kind}, {"n", m.size()}, {"entries", rows}};
}

inline Matrix matrix_from_json(const json& j) {
  const auto rows = j.at("entries").get<std::vector<std::vector<double>>>();
  Matrix m = matrix_from_rows(rows);
  if (j.contains("n") && j.at("n").get<std::size_t>() != m.size())
    throw Error("matrix json: n does not match entries");
  return m;
}

inline json to_json(const BvnDecomposition& d) {
  json comps = json::array();
  for (const auto& c : d.components()) {
    const auto perm = c.permutation.dest_by_source();
    comps.push_back({{"perm", std::vector<std::size_t>(perm.begin(), perm.end())},
                     {"p", c.probability}});
  }
  return {{"n", d.n()}, {"components", comps}};
}

inline BvnDecomposition decomposition_from_json(const json& j) {
  std::vector<BvnComponent> comps;
  for (const auto& c : j.at("components"))
    comps.push_back({Permutation(c.at("perm").get<std::vector<std::size_t>>()),
                     c.at("p").get<double>()});
  BvnDecomposition d(std::move(comps));
  if (j.contains("n") && j.at("n").get<std::size_t>() != d.n())
    throw Error("decomposition json: n does not match permutations");
  return d;
}

inline json to_json(const RuleSet& rs) {
  json rules = json::array();
  for (const auto& r : rs)
    rules.push_back({{"item", r.item}, {"target", r.target_position}, {"p", r.probability}});
  return {{"rules", rules}};
}

inline RuleSet ruleset_from_json(const json& j) {
  std::vector<PinRule> rules;
  for (const auto& r : j.at("rules"))
    rules.push_back({r.at("item").get<Item>(), r.at("target").get<std::size_t>(),
                     r.value("p", 1.0)});
  return RuleSet(std::move(rules));
}

inline json to_json(const ObservationLog& log) {
  const auto ranker = log.ranker_ranking.items();
  const auto shown = log.displayed_ranking.items();
  return {{"context_id", log.context_id},
          {"ranker_ranking", std::vector<Item>(ranker.begin(), ranker.end())},
          {"sampled_component", log.sampled_component},
          {"displayed_ranking", std::vector<Item>(shown.begin(), shown.end())},
          {"clicks", std::vector<int>(log.clicks.begin(), log.clicks.end())},
          {"decomposition_ref", log.decomposition_ref},
          {"ruleset_ref", log.ruleset_ref}};
}

inline ObservationLog log_from_json(const json& j) {
  ObservationLog log;
  log.context_id = j.at("context_id").get<std::size_t>();
  log.ranker_ranking = Ranking(j.at("ranker_ranking").get<std::vector<Item>>());
  log.sampled_component = j.at("sampled_component").get<std::size_t>();
  log.displayed_ranking = Ranking(j.at("displayed_ranking").get<std::vector<Item>>());
  for (int c : j.at("clicks").get<std::vector<int>>()) {
    if (c != 0 && c != 1) throw Error("log json: clicks must be 0/1");
    log.clicks.push_back(static_cast<std::uint8_t>(c));
  }
  log.decomposition_ref = j.value("decomposition_ref", std::string{"bvn"});
  log.ruleset_ref = j.value("ruleset_ref", std::string{"rules"});
  validate(log);
  return log;
}

inline void write_jsonl(std::ostream& out, std::span<const ObservationLog> logs) {
  for (const auto& log : logs) out << to_json(log).dump() << '\n';
}

inline std::vector<ObservationLog> read_jsonl(std::istream& in) {
  std::vector<ObservationLog> logs;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      logs.push_back(log_from_json(json::parse(line)));
    } catch (const std::exception& e) {
      throw Error("jsonl line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return logs;
}

inline json to_json(const PositionBiasCurve& c) {
  return std::vector<double>(c.values().begin(), c.values().end());
}

inline PositionBiasCurve curve_from_json(const json& j) {
  return PositionBiasCurve(j.get<std::vector<double>>());
}

inline json to_json(const EstimateResult& r, bool with_per_observation = true) {
  json j = {{"estimator_name", r.estimator_name}, {"mean", r.mean},
            {"std_error", r.std_error},           {"ci_low", r.ci_low},
            {"ci_high", r.ci_high},               {"n_observations", r.n_observations}};
  if (with_per_observation) j["per_observation"] = r.per_observation;
  return j;
}

inline EstimateResult estimate_from_json(const json& j) {
  EstimateResult r;
  r.estimator_name = j.at("estimator_name").get<std::string>();
  r.mean = j.at("mean").get<double>();
  r.std_error = j.at("std_error").get<double>();
  r.ci_low = j.at("ci_low").get<double>();
  r.ci_high = j.at("ci_high").get<double>();
  r.n_observations = j.at("n_observations").get<std::size_t>();
  if (j.contains("per_observation"))
    r.per_observation = j.at("per_observation").get<std::vector<double>>();
  return r;
}

inline json to_json(const SimulationConfig& c) {
  json j = {{"n_rankings", c.n_rankings},
            {"n_items", c.n_items},
            {"stay_probability", c.stay_probability},
            {"relevant_items", c.relevant_items},
            {"noise_std", c.noise_std},
            {"ruleset", to_json(c.ruleset)},
            {"seed", c.seed}};
  if (c.position_bias.empty())
    j["position_bias"] = "inverse_rank";
  else
    j["position_bias"] = c.position_bias;
  return j;
}

inline SimulationConfig simulation_config_from_json(const json& j) {
  SimulationConfig c;
  c.n_rankings = j.value("n_rankings", c.n_rankings);
  c.n_items = j.value("n_items", c.n_items);
  c.stay_probability = j.value("stay_probability", c.stay_probability);
  c.relevant_items = j.value("relevant_items", c.relevant_items);
  c.noise_std = j.value("noise_std", c.noise_std);
  if (j.contains("ruleset")) c.ruleset = ruleset_from_json(j.at("ruleset"));
  c.seed = j.value("seed", c.seed);
  if (j.contains("position_bias")) {
    const auto& b = j.at("position_bias");
    if (b.is_string()) {
      if (b.get<std::string>() != "inverse_rank")
        throw Error("position_bias: unknown kind '" + b.get<std::string>() + "'");
    } else {
      c.position_bias = b.get<std::vector<double>>();
    }
  }
  validate(c);
  return c;
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(path + ": " + e.what());
  }
}

inline void write_json_file(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << j.dump(2) << '\n';
}

}  // namespace ope
