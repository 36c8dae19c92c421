#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "consensuspd/network.hpp"
#include "consensuspd/problem.hpp"

namespace consensuspd {

struct ConstantsLedger;  // analysis module; run() only stores a pointer

// Full iterate of the distributed method.
struct AlgorithmState {
  VectorXd x;       // local copies of the decision variable
  VectorXd z;       // consensus integral action
  VectorXd lambda;  // stacked multipliers, >= 0 whenever lambda(0) >= 0
  long t = 0;
};

// The iterate after the average/dispersion split, with the conserved mean of
// z removed. Stability of this reduced state is equivalent to stability of
// the full iterate.
struct CoreState {
  double x_m = 0;
  VectorXd x_perp;
  VectorXd z_perp;
  VectorXd lambda;
  long t = 0;
};

// The optimal steady-state family: x = 1*theta_star, lambda = lambda_star,
// z = S*z_perp_star + 1*c for any c. z_perp_star scales linearly with the
// stepsize used to build it.
struct OptimalEquilibrium {
  double theta_star = 0;
  VectorXd lambda_star;
  VectorXd z_perp_star;
  double gamma = 0;  // stepsize the correction term was built for
  VectorXd z_e(const MatrixXd& S, double c) const;
};

// One full iteration:
//   x+ = (I-K)x - Kz - gamma*n*Phi(x,lambda)
//   z+ = z + Kx
//   lambda+ = max{0, lambda + gamma*g(x)}
// corrupt_z_update negates the whole z-update right-hand side (fault
// injection for test-sensitivity demos; breaks the 1'z conservation law).
AlgorithmState step_distributed(const ConstrainedProblem& pb,
                                const Network& net,
                                const AlgorithmState& state, double gamma,
                                bool corrupt_z_update = false);

// The single-machine baseline on (theta, lambda): gradient descent on the
// summed Lagrangian, projected gradient ascent on the multipliers.
std::pair<double, VectorXd> step_centralized(const ConstrainedProblem& pb,
                                             double theta,
                                             const VectorXd& lambda,
                                             double gamma);

CoreState step_core(const ConstrainedProblem& pb, const Network& net,
                    const CoreState& core, double gamma);

CoreState to_core(const Network& net, const AlgorithmState& state);
AlgorithmState from_core(const Network& net, const CoreState& core,
                         double z_m);

// The coupling signals between the averaged dynamics and the consensus-error
// dynamics: w and d vanish on consensual states, v vanishes at the optimum.
struct PerturbationSignals {
  double w = 0;
  VectorXd d;
  VectorXd v;
};
PerturbationSignals perturbation_signals(const ConstrainedProblem& pb,
                                         const Network& net,
                                         const CoreState& core,
                                         const OptimalEquilibrium& eq);

// Builds the equilibrium for the given stepsize and verifies it is fixed
// under step_distributed (max-abs residual above 1e-10 is an error).
OptimalEquilibrium compute_optimal_equilibrium(const ConstrainedProblem& pb,
                                               const Network& net,
                                               const KktPoint& kkt,
                                               double gamma);

// Closed-form Euclidean distance from (x, z, lambda) to the equilibrium
// family, with the free mean-of-z direction projected out:
// |(sqrt(n)(x_m - theta*), x_perp, z_perp - z_perp*, lambda - lambda*)|.
double distance_to_optimal_set(const AlgorithmState& state,
                               const OptimalEquilibrium& eq,
                               const Network& net);

struct TrajectoryRow {
  long t = 0;
  double dist = std::numeric_limits<double>::quiet_NaN();
  double x_perp_norm = 0;
  double kkt_stationarity = 0;
  double kkt_primal = 0;
  double kkt_comp = 0;
  double z_sum = 0;
  // Lyapunov columns; populated only when a certificate ledger is attached.
  std::optional<double> V, V_opt, V_net;
  // |(x_m - theta*, lambda - lambda*, xi - xi*)|; internal (not emitted),
  // used by the descent monitor for level-set membership.
  double err_norm = std::numeric_limits<double>::quiet_NaN();
  double kkt_dual = 0;  // internal; the emitted columns use the three above
};

struct TrajectoryRecord {
  std::vector<TrajectoryRow> rows;  // one per iterate, t = 0 included
  AlgorithmState final_state;
  long iterations = 0;
  std::string stop_reason;  // "dist_tol", "kkt_tol", or "max_iter"
  double final_dist = std::numeric_limits<double>::quiet_NaN();
  double gamma = 0;
};

struct RunOptions {
  long max_iter = 100000;
  double stop_tol = 1e-8;
  // With an equilibrium attached the stop rule is dist <= stop_tol; without
  // one it is max(kkt residual components) + |x_perp| <= stop_tol.
  const OptimalEquilibrium* eq = nullptr;
  const ConstantsLedger* ledger = nullptr;  // enables the V columns
  bool corrupt_z_update = false;
};

// Iterates step_distributed from init, recording one diagnostics row per
// iterate. NaN/Inf in the state aborts with the iteration index;
// non-convergence within max_iter is a reported outcome, not an error.
TrajectoryRecord run(const ConstrainedProblem& pb, const Network& net,
                     double gamma, const AlgorithmState& init,
                     const RunOptions& opts);

}  // namespace consensuspd
