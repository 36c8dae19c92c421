#pragma once

#include <Eigen/Dense>
#include <functional>
#include <optional>
#include <utility>
#include <vector>

namespace consensuspd {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// One agent's local data: a scalar cost f_i with derivative and m_i scalar
// inequality constraints g_i (decision variable is scalar, so the constraint
// Jacobian is the column vector constraint_grad).
struct AgentProblem {
  std::function<double(double)> cost_eval;
  std::function<double(double)> cost_grad;
  std::function<VectorXd(double)> constraint_eval;
  std::function<VectorXd(double)> constraint_grad;
  int m_i = 0;
};

// Quadratic cost f_i(t) = (a/2) t^2 + b t with affine constraints
// p_j t + q_j <= 0. The canonical concrete family: every certificate
// constant has a closed form for it.
struct QuadraticAgent {
  double a = 1.0;
  double b = 0.0;
  VectorXd p;  // may be empty (agent with no constraints)
  VectorXd q;  // same length as p
};

struct ConstrainedProblem {
  std::vector<AgentProblem> agents;
  int n = 0;       // number of agents
  int m = 0;       // total constraint count
  double mu_f = 0; // strong-convexity modulus of the summed cost
  // Set iff the problem was built from the quadratic/affine family; enables
  // the exact KKT oracle and closed-form constants.
  std::optional<std::vector<QuadraticAgent>> family;
  // offsets[i] = first row of agent i's block in the stacked constraint
  // vector; offsets[n] = m.
  std::vector<int> offsets;
};

ConstrainedProblem make_quadratic_problem(std::vector<QuadraticAgent> agents);
ConstrainedProblem make_generic_problem(std::vector<AgentProblem> agents,
                                        double mu_f);

// A primal/dual pair satisfying stationarity, feasibility, nonnegativity and
// complementarity, plus the constraint classification at that point.
struct KktPoint {
  double theta_star = 0;
  VectorXd lambda_star;                            // length m, >= 0
  std::vector<std::pair<int, int>> active_set;     // (agent, local row)
  std::vector<std::pair<int, int>> inactive_set;
  int m_a = 0;   // |active_set|
  // min over inactive rows of |g(theta_star)|; when every constraint is
  // active this margin is unused by the dynamics and is set to the
  // documented convention value 1.0 with h_convention = true.
  double h = 1.0;
  bool h_convention = false;
};

struct Classification {
  std::vector<std::pair<int, int>> active_set;
  std::vector<std::pair<int, int>> inactive_set;
  int m_a = 0;
  double h = 1.0;
  bool h_convention = false;
};

struct KktResidual {
  double stationarity = 0;
  double primal = 0;
  double dual = 0;
  double complementarity = 0;
  double max() const;
};

// Stacked gradient of the per-agent Lagrangians: component i is
// f_i'(x_i) + <lambda_i, g_i'(x_i)>.
VectorXd lagrangian_gradient(const ConstrainedProblem& pb, const VectorXd& x,
                             const VectorXd& lambda);

// Stacked constraint values g(x) = (g_i(x_i))_i, and the consensual variants
// evaluated at x = 1*theta.
VectorXd constraint_values(const ConstrainedProblem& pb, const VectorXd& x);
VectorXd constraint_values_consensual(const ConstrainedProblem& pb,
                                      double theta);
VectorXd constraint_gradient_consensual(const ConstrainedProblem& pb,
                                        double theta);

KktResidual kkt_residual(const ConstrainedProblem& pb, double theta,
                         const VectorXd& lambda);

// Exact optimality oracle for the quadratic/affine family: enumerates active
// sets, solves each stationarity system exactly, keeps feasible candidates
// with nonnegative multipliers, and requires a unique survivor.
KktPoint solve_kkt_oracle(const ConstrainedProblem& pb);

// Independent cross-check: coarse grid localization of the summed-cost
// minimizer over the feasible interval, then derivative bisection. Shares no
// code path with the enumeration oracle.
std::pair<double, VectorXd> solve_kkt_grid(const ConstrainedProblem& pb);

// Splits constraints into active (|g(theta*)| <= tol) and inactive rows and
// computes the inactive margin h. Errors if a multiplier is positive beyond
// tol on an inactive row.
Classification classify_constraints(const ConstrainedProblem& pb,
                                    const KktPoint& kkt, double tol);

}  // namespace consensuspd
