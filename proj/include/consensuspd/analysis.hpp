#pragma once

#include <Eigen/Dense>
#include <array>
#include <limits>

#include "consensuspd/algorithm.hpp"
#include "consensuspd/network.hpp"
#include "consensuspd/problem.hpp"

namespace consensuspd {

// Axis-aligned initialization box in (x, z, lambda) coordinates. The lambda
// faces must be >= 0.
struct InitBox {
  VectorXd x_lo, x_hi;
  VectorXd z_lo, z_hi;
  VectorXd lam_lo, lam_hi;
};

// Lipschitz/curvature constants of the problem data over the working ball of
// radius kappa around the optimum, plus the active-gradient margin q0 and
// the inactive margin radius eps_bar1.
struct ProblemConstants {
  double k0 = 0, k1 = 0, k2 = 0, k3 = 0, k4 = 0, k5 = 0, k6 = 0, k7 = 0;
  double mu_f = 0;
  double q0 = 1;
  double eps_bar1 = 0;
  double h = 1;
  bool h_convention = false;
  bool q0_convention = false;
  bool sampled = false;  // true when estimated by grid sampling (generic
                         // problems) rather than closed forms
};

// Every scalar the stepsize bound and rate certificate are built from. The
// alpha numbering has a deliberate gap (alpha5/alpha6 do not exist in the
// constant family); gammabar[i] stores the bound numbered i+1.
struct ConstantsLedger {
  int n = 0, m = 0, m_a = 0;
  double kappa0 = 0, kappa1 = 0, kappa = 0;
  double k0 = 0, k1 = 0, k2 = 0, k3 = 0, k4 = 0, k5 = 0, k6 = 0, k7 = 0;
  double q0 = 1, mu_f = 0, h = 1;
  double eps_bar1 = 0, eps_bar = 0, eps = 0;
  double M = 1, beta = 0;
  double alpha1 = 0, alpha2 = 0, alpha3 = 0, alpha4 = 0;
  double alpha7 = 0, alpha8 = 0, alpha9 = 0, alpha10 = 0, alpha11 = 0;
  double delta1 = 0, delta2 = 0;
  std::array<double, 20> gammabar{};
  double gammabar0 = 0;
  double c_l = 1, c_u = 1;
  double norm_AtPB = 0, norm_BtPB = 0;  // spectral norms entering M
  double gamma_center = 0;  // stepsize the equilibrium offset was built at
  double theta_star = 0;
  VectorXd lambda_star;
  VectorXd z_perp_star;
  bool h_convention = false;
  bool q0_convention = false;
  bool delta2_zero_branch = false;      // m == m_a
  bool lyapunov_convention = false;     // n == 1: c_l = c_u = 1 by convention
  bool sampled_constants = false;
};

// Exponential-envelope certificate for one admissible stepsize. c can
// overflow double (the bound is valid but extremely conservative); log_c and
// log_mu are always finite and are what the envelope monitor uses.
struct RateCertificate {
  double gamma = 0;
  double omega = 0;
  double eta2 = 0;
  double T = 0;
  double mu = 1;
  double c = 1;
  double log_c = 0;
  double log_mu = 0;
};

// Smallest ball radius around (theta*, lambda*, xi*) containing the image of
// the box under the average/dispersion split; exact by vertex enumeration
// (the squared distance is convex in the box coordinates), floored at 1e-6
// for degenerate point boxes.
double compute_kappa0(const Network& net, const OptimalEquilibrium& eq,
                      const InitBox& box);

// Closed forms for the quadratic/affine family; dense grid sampling with a
// 1.1 safety inflation (and the sampled flag set) otherwise. grid_n is the
// per-dimension sample count of the sampling fallback.
ProblemConstants estimate_problem_constants(const ConstrainedProblem& pb,
                                            const Network& net, double kappa,
                                            const KktPoint& kkt,
                                            int grid_n = 200);

// Assembles the whole ledger. gamma_center is the stepsize at which the
// equilibrium offset z_perp_star (hence kappa0's ball center) is evaluated.
ConstantsLedger assemble_ledger(const ConstrainedProblem& pb,
                                const Network& net, const KktPoint& kkt,
                                const InitBox& box, double gamma_center);

// Fixed-point iteration for the self-consistent automatic stepsize
// gamma = gammabar0(gamma)/2; returns the stepsize and its ledger.
std::pair<double, ConstantsLedger> auto_gamma(const ConstrainedProblem& pb,
                                              const Network& net,
                                              const KktPoint& kkt,
                                              const InitBox& box);

// Refuses gamma outside (0, gammabar0).
RateCertificate rate_certificate(const ConstantsLedger& ledger, double gamma);

// Primal-dual candidate with the stepsize-weighted cross term; the 1/2..3/2
// sandwich holds on the kappa-ball for admissible gamma.
double V_opt_value(const ConstrainedProblem& pb, double gamma, double beta,
                   double x_m, const VectorXd& lambda, double theta_star,
                   const VectorXd& lambda_star);

struct VBreakdown {
  double V = 0;
  double V_opt = 0;
  double V_net = 0;
};
VBreakdown V_total(const ConstrainedProblem& pb, const Network& net,
                   const ConstantsLedger& ledger, double gamma,
                   const CoreState& core, const OptimalEquilibrium& eq);

// Per-step certified-descent check plus the exponential envelope check over
// a recorded trajectory. Report-only; all inequalities carry a 1e-12
// absolute slack.
struct DescentReport {
  long steps_checked = 0;
  long in_level_set = 0;          // rows inside the certified level set
  long descent_violations = 0;
  long first_descent_violation = -1;
  long envelope_checked = 0;
  long envelope_violations = 0;
  long first_envelope_violation = -1;
  bool pass = true;
};
DescentReport monitor_descent(const TrajectoryRecord& record,
                              const ConstantsLedger& ledger,
                              const RateCertificate& cert);

}  // namespace consensuspd
