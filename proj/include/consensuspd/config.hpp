#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "consensuspd/analysis.hpp"
#include "consensuspd/network.hpp"
#include "consensuspd/problem.hpp"

#include <json.hpp>

namespace consensuspd {

// Parsed experiment description. External indices are 0-based; all numerics
// are 64-bit floats. Parsing and emission round-trip exactly.
struct ExperimentConfig {
  std::vector<QuadraticAgent> agents;

  std::string preset;               // "path" | "cycle" | "complete" | "" (edge list)
  double preset_weight = 0.2;
  std::vector<WeightedEdge> edges;  // used when preset is empty
  bool normalize = false;

  bool gamma_auto = false;
  double gamma = 0.05;

  VectorXd x0;                       // required
  VectorXd z0;                       // defaults to 0
  VectorXd lambda0;                  // defaults to 0; must be >= 0
  std::optional<InitBox> box;        // enables certification

  long max_iter = 100000;
  double stop_tol = 1e-8;
  std::uint64_t seed = 0;
  std::string out_dir = "out";
};

ExperimentConfig parse_config_file(const std::string& path);
ExperimentConfig parse_config_json(const nlohmann::json& j);
nlohmann::ordered_json emit_config(const ExperimentConfig& cfg);

ConstrainedProblem build_problem(const ExperimentConfig& cfg);
Network build_network(const ExperimentConfig& cfg);
AlgorithmState initial_state(const ExperimentConfig& cfg,
                             const ConstrainedProblem& pb);

}  // namespace consensuspd
