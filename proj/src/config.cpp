#include "consensuspd/config.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include "consensuspd/errors.hpp"

namespace consensuspd {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

void reject_unknown_keys(const json& j, const std::set<std::string>& allowed,
                         const std::string& where) {
  for (const auto& [key, _] : j.items())
    if (!allowed.count(key))
      throw ConfigError("config: unknown key '" + where + key + "'");
}

const json& require_key(const json& j, const char* key,
                        const std::string& where) {
  const auto it = j.find(key);
  if (it == j.end())
    throw ConfigError("config: missing key '" + where + key + "'");
  return *it;
}

double as_number(const json& j, const std::string& where) {
  if (!j.is_number())
    throw ConfigError("config: '" + where + "' must be a number");
  return j.get<double>();
}

VectorXd as_vector(const json& j, const std::string& where) {
  if (!j.is_array())
    throw ConfigError("config: '" + where + "' must be an array of numbers");
  VectorXd v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i)
    v(i) = as_number(j[i], where + "[" + std::to_string(i) + "]");
  return v;
}

// Array of [lo, hi] pairs -> two stacked face vectors.
std::pair<VectorXd, VectorXd> as_faces(const json& j,
                                       const std::string& where) {
  if (!j.is_array())
    throw ConfigError("config: '" + where + "' must be an array of [lo, hi]");
  VectorXd lo(j.size()), hi(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) {
    const std::string at = where + "[" + std::to_string(i) + "]";
    if (!j[i].is_array() || j[i].size() != 2)
      throw ConfigError("config: '" + at + "' must be a [lo, hi] pair");
    lo(i) = as_number(j[i][0], at);
    hi(i) = as_number(j[i][1], at);
  }
  return {lo, hi};
}

json faces_to_json(const VectorXd& lo, const VectorXd& hi) {
  json out = json::array();
  for (int i = 0; i < lo.size(); ++i) out.push_back({lo(i), hi(i)});
  return out;
}

json vector_to_json(const VectorXd& v) {
  json out = json::array();
  for (int i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

}  // namespace

ExperimentConfig parse_config_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config: top level must be an object");
  reject_unknown_keys(j,
                      {"schema", "problem", "network", "gamma", "init",
                       "max_iter", "stop_tol", "seed", "out_dir"},
                      "");
  const json& schema = require_key(j, "schema", "");
  if (!schema.is_number_integer() || schema.get<int>() != 1)
    throw ConfigError("config: unsupported schema version (expected 1)");

  ExperimentConfig cfg;

  const json& problem = require_key(j, "problem", "");
  reject_unknown_keys(problem, {"agents"}, "problem.");
  const json& agents = require_key(problem, "agents", "problem.");
  if (!agents.is_array() || agents.empty())
    throw ConfigError("config: 'problem.agents' must be a nonempty array");
  for (std::size_t i = 0; i < agents.size(); ++i) {
    const std::string at = "problem.agents[" + std::to_string(i) + "].";
    const json& ja = agents[i];
    reject_unknown_keys(ja, {"a", "b", "p", "q"}, at);
    QuadraticAgent qa;
    qa.a = as_number(require_key(ja, "a", at), at + "a");
    qa.b = as_number(require_key(ja, "b", at), at + "b");
    qa.p = ja.contains("p") ? as_vector(ja["p"], at + "p") : VectorXd(0);
    qa.q = ja.contains("q") ? as_vector(ja["q"], at + "q") : VectorXd(0);
    if (qa.p.size() != qa.q.size())
      throw ConfigError("config: '" + at + "p' and '" + at +
                        "q' must have equal length");
    cfg.agents.push_back(std::move(qa));
  }
  const int n = static_cast<int>(cfg.agents.size());
  int m = 0;
  for (const auto& a : cfg.agents) m += static_cast<int>(a.p.size());

  const json& network = require_key(j, "network", "");
  reject_unknown_keys(network, {"preset", "weight", "edges", "normalize"},
                      "network.");
  if (network.contains("preset")) {
    if (network.contains("edges"))
      throw ConfigError(
          "config: 'network.preset' and 'network.edges' are exclusive");
    if (!network["preset"].is_string())
      throw ConfigError("config: 'network.preset' must be a string");
    cfg.preset = network["preset"].get<std::string>();
    if (network.contains("weight"))
      cfg.preset_weight = as_number(network["weight"], "network.weight");
  } else {
    const json& edges = require_key(network, "edges", "network.");
    if (!edges.is_array())
      throw ConfigError("config: 'network.edges' must be an array");
    for (std::size_t i = 0; i < edges.size(); ++i) {
      const std::string at = "network.edges[" + std::to_string(i) + "]";
      const json& je = edges[i];
      if (!je.is_array() || je.size() != 3)
        throw ConfigError("config: '" + at + "' must be [i, j, weight]");
      if (!je[0].is_number_integer() || !je[1].is_number_integer())
        throw ConfigError("config: '" + at + "' indices must be integers");
      cfg.edges.push_back({je[0].get<int>(), je[1].get<int>(),
                           as_number(je[2], at + "[2]")});
    }
  }
  if (network.contains("normalize")) {
    if (!network["normalize"].is_boolean())
      throw ConfigError("config: 'network.normalize' must be a boolean");
    cfg.normalize = network["normalize"].get<bool>();
  }

  const json& gamma = require_key(j, "gamma", "");
  if (gamma.is_string()) {
    if (gamma.get<std::string>() != "auto")
      throw ConfigError("config: 'gamma' must be a number or \"auto\"");
    cfg.gamma_auto = true;
  } else {
    cfg.gamma = as_number(gamma, "gamma");
    if (!(cfg.gamma > 0))
      throw ConfigError("config: 'gamma' must be positive");
  }

  const json& init = require_key(j, "init", "");
  reject_unknown_keys(init, {"x", "z", "lambda", "box"}, "init.");
  cfg.x0 = as_vector(require_key(init, "x", "init."), "init.x");
  if (cfg.x0.size() != n)
    throw ConfigError("config: 'init.x' must have one entry per agent");
  cfg.z0 = init.contains("z") ? as_vector(init["z"], "init.z")
                              : VectorXd::Zero(n);
  if (cfg.z0.size() != n)
    throw ConfigError("config: 'init.z' must have one entry per agent");
  cfg.lambda0 = init.contains("lambda")
                    ? as_vector(init["lambda"], "init.lambda")
                    : VectorXd::Zero(m);
  if (cfg.lambda0.size() != m)
    throw ConfigError(
        "config: 'init.lambda' must have one entry per constraint row");
  if (m > 0 && cfg.lambda0.minCoeff() < 0)
    throw ConfigError(
        "config: 'init.lambda' must be nonnegative — the dual update starts "
        "and stays in the nonnegative orthant");
  if (init.contains("box")) {
    const json& bx = init["box"];
    reject_unknown_keys(bx, {"x", "z", "lambda"}, "init.box.");
    InitBox box;
    std::tie(box.x_lo, box.x_hi) =
        as_faces(require_key(bx, "x", "init.box."), "init.box.x");
    std::tie(box.z_lo, box.z_hi) =
        as_faces(require_key(bx, "z", "init.box."), "init.box.z");
    std::tie(box.lam_lo, box.lam_hi) =
        as_faces(require_key(bx, "lambda", "init.box."), "init.box.lambda");
    if (box.x_lo.size() != n || box.z_lo.size() != n ||
        box.lam_lo.size() != m)
      throw ConfigError("config: 'init.box' faces have wrong dimensions");
    cfg.box = std::move(box);
  }

  if (j.contains("max_iter")) {
    if (!j["max_iter"].is_number_integer() || j["max_iter"].get<long>() < 1)
      throw ConfigError("config: 'max_iter' must be a positive integer");
    cfg.max_iter = j["max_iter"].get<long>();
  }
  if (j.contains("stop_tol")) {
    cfg.stop_tol = as_number(j["stop_tol"], "stop_tol");
    if (!(cfg.stop_tol > 0))
      throw ConfigError("config: 'stop_tol' must be positive");
  }
  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned() && !j["seed"].is_number_integer())
      throw ConfigError("config: 'seed' must be a nonnegative integer");
    cfg.seed = j["seed"].get<std::uint64_t>();
  }
  if (j.contains("out_dir")) {
    if (!j["out_dir"].is_string())
      throw ConfigError("config: 'out_dir' must be a string");
    cfg.out_dir = j["out_dir"].get<std::string>();
  }
  return cfg;
}

ExperimentConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config parse error in '" + path + "': " + e.what());
  }
  return parse_config_json(j);
}

ordered_json emit_config(const ExperimentConfig& cfg) {
  ordered_json j;
  j["schema"] = 1;
  ordered_json agents = json::array();
  for (const auto& a : cfg.agents) {
    ordered_json ja;
    ja["a"] = a.a;
    ja["b"] = a.b;
    ja["p"] = vector_to_json(a.p);
    ja["q"] = vector_to_json(a.q);
    agents.push_back(std::move(ja));
  }
  j["problem"] = ordered_json{{"agents", std::move(agents)}};
  ordered_json net;
  if (!cfg.preset.empty()) {
    net["preset"] = cfg.preset;
    net["weight"] = cfg.preset_weight;
  } else {
    json edges = json::array();
    for (const auto& e : cfg.edges) edges.push_back({e.i, e.j, e.w});
    net["edges"] = std::move(edges);
  }
  net["normalize"] = cfg.normalize;
  j["network"] = std::move(net);
  if (cfg.gamma_auto)
    j["gamma"] = "auto";
  else
    j["gamma"] = cfg.gamma;
  ordered_json init;
  init["x"] = vector_to_json(cfg.x0);
  init["z"] = vector_to_json(cfg.z0);
  init["lambda"] = vector_to_json(cfg.lambda0);
  if (cfg.box) {
    ordered_json bx;
    bx["x"] = faces_to_json(cfg.box->x_lo, cfg.box->x_hi);
    bx["z"] = faces_to_json(cfg.box->z_lo, cfg.box->z_hi);
    bx["lambda"] = faces_to_json(cfg.box->lam_lo, cfg.box->lam_hi);
    init["box"] = std::move(bx);
  }
  j["init"] = std::move(init);
  j["max_iter"] = cfg.max_iter;
  j["stop_tol"] = cfg.stop_tol;
  j["seed"] = cfg.seed;
  j["out_dir"] = cfg.out_dir;
  return j;
}

ConstrainedProblem build_problem(const ExperimentConfig& cfg) {
  return make_quadratic_problem(cfg.agents);
}

Network build_network(const ExperimentConfig& cfg) {
  const int n = static_cast<int>(cfg.agents.size());
  if (!cfg.preset.empty())
    return make_network_preset(n, cfg.preset, cfg.preset_weight,
                               cfg.normalize);
  return make_network(n, cfg.edges, cfg.normalize);
}

AlgorithmState initial_state(const ExperimentConfig& cfg,
                             const ConstrainedProblem& pb) {
  AlgorithmState st;
  if (cfg.x0.size() != pb.n || cfg.z0.size() != pb.n ||
      cfg.lambda0.size() != pb.m)
    throw ShapeError("initial state does not match the problem dimensions");
  st.x = cfg.x0;
  st.z = cfg.z0;
  st.lambda = cfg.lambda0;
  st.t = 0;
  return st;
}

}  // namespace consensuspd
