#include "consensuspd/algorithm.hpp"

#include <cmath>
#include <string>

#include "consensuspd/analysis.hpp"
#include "consensuspd/errors.hpp"

namespace consensuspd {

namespace {

void require_step_inputs(const ConstrainedProblem& pb, const Network& net,
                         double gamma, const VectorXd& lambda) {
  if (!(gamma > 0)) throw DomainError("stepsize must be positive");
  if (net.n != pb.n)
    throw ShapeError("network has " + std::to_string(net.n) +
                     " agents, problem has " + std::to_string(pb.n));
  if (lambda.size() != pb.m)
    throw ShapeError("lambda has " + std::to_string(lambda.size()) +
                     " entries, expected " + std::to_string(pb.m));
  if (pb.m > 0 && lambda.minCoeff() < 0)
    throw DomainError("multipliers must be nonnegative");
}

void require_finite(const VectorXd& v, long t, const char* what) {
  if (!v.allFinite())
    throw NumericOverflowError(t, std::string(what) + " is not finite");
}

}  // namespace

VectorXd OptimalEquilibrium::z_e(const MatrixXd& S, double c) const {
  return S * z_perp_star + VectorXd::Constant(S.rows(), c);
}

AlgorithmState step_distributed(const ConstrainedProblem& pb,
                                const Network& net, const AlgorithmState& st,
                                double gamma, bool corrupt_z_update) {
  require_step_inputs(pb, net, gamma, st.lambda);
  if (st.z.size() != pb.n)
    throw ShapeError("z has " + std::to_string(st.z.size()) +
                     " entries, expected " + std::to_string(pb.n));
  const VectorXd phi = lagrangian_gradient(pb, st.x, st.lambda);
  require_finite(phi, st.t, "Lagrangian gradient");
  AlgorithmState nx;
  nx.x = st.x - net.K * (st.x + st.z) - gamma * pb.n * phi;
  nx.z = corrupt_z_update ? VectorXd(-st.z - net.K * st.x)
                          : VectorXd(st.z + net.K * st.x);
  if (pb.m > 0) {
    const VectorXd g = constraint_values(pb, st.x);
    require_finite(g, st.t, "constraint value");
    nx.lambda = (st.lambda + gamma * g).cwiseMax(0.0);
  } else {
    nx.lambda = st.lambda;
  }
  nx.t = st.t + 1;
  require_finite(nx.x, st.t, "primal iterate");
  require_finite(nx.z, st.t, "tracking iterate");
  return nx;
}

std::pair<double, VectorXd> step_centralized(const ConstrainedProblem& pb,
                                             double theta,
                                             const VectorXd& lambda,
                                             double gamma) {
  if (!(gamma > 0)) throw DomainError("stepsize must be positive");
  if (lambda.size() != pb.m)
    throw ShapeError("lambda has " + std::to_string(lambda.size()) +
                     " entries, expected " + std::to_string(pb.m));
  if (pb.m > 0 && lambda.minCoeff() < 0)
    throw DomainError("multipliers must be nonnegative");
  const VectorXd ones = VectorXd::Constant(pb.n, theta);
  const VectorXd phi = lagrangian_gradient(pb, ones, lambda);
  require_finite(phi, 0, "Lagrangian gradient");
  const double theta_next = theta - gamma * phi.sum();
  VectorXd lambda_next = lambda;
  if (pb.m > 0) {
    const VectorXd g = constraint_values_consensual(pb, theta);
    require_finite(g, 0, "constraint value");
    lambda_next = (lambda + gamma * g).cwiseMax(0.0);
  }
  if (!std::isfinite(theta_next))
    throw NumericOverflowError(0, "consensual iterate is not finite");
  return {theta_next, lambda_next};
}

CoreState step_core(const ConstrainedProblem& pb, const Network& net,
                    const CoreState& st, double gamma) {
  require_step_inputs(pb, net, gamma, st.lambda);
  const VectorXd x = recompose(net.S, st.x_m, st.x_perp);
  const VectorXd phi = lagrangian_gradient(pb, x, st.lambda);
  require_finite(phi, st.t, "Lagrangian gradient");
  const MatrixXd L = net.S.transpose() * net.K * net.S;
  CoreState nx;
  nx.x_m = st.x_m - gamma * phi.sum();
  nx.x_perp = st.x_perp - L * (st.x_perp + st.z_perp) -
              gamma * pb.n * (net.S.transpose() * phi);
  nx.z_perp = st.z_perp + L * st.x_perp;
  if (pb.m > 0) {
    const VectorXd g = constraint_values(pb, x);
    require_finite(g, st.t, "constraint value");
    nx.lambda = (st.lambda + gamma * g).cwiseMax(0.0);
  } else {
    nx.lambda = st.lambda;
  }
  nx.t = st.t + 1;
  if (!std::isfinite(nx.x_m))
    throw NumericOverflowError(st.t, "average iterate is not finite");
  require_finite(nx.x_perp, st.t, "dispersion iterate");
  return nx;
}

CoreState to_core(const Network& net, const AlgorithmState& st) {
  CoreState core;
  std::tie(core.x_m, core.x_perp) = decompose(net.S, st.x);
  core.z_perp = net.S.transpose() * st.z;
  core.lambda = st.lambda;
  core.t = st.t;
  return core;
}

AlgorithmState from_core(const Network& net, const CoreState& core,
                         double z_m) {
  AlgorithmState st;
  st.x = recompose(net.S, core.x_m, core.x_perp);
  st.z = recompose(net.S, z_m, core.z_perp);
  st.lambda = core.lambda;
  st.t = core.t;
  return st;
}

PerturbationSignals perturbation_signals(const ConstrainedProblem& pb,
                                         const Network& net,
                                         const CoreState& core,
                                         const OptimalEquilibrium& eq) {
  const VectorXd x = recompose(net.S, core.x_m, core.x_perp);
  const VectorXd phi_x = lagrangian_gradient(pb, x, core.lambda);
  const VectorXd consensual = VectorXd::Constant(pb.n, core.x_m);
  const VectorXd phi_c = lagrangian_gradient(pb, consensual, core.lambda);
  const VectorXd star = VectorXd::Constant(pb.n, eq.theta_star);
  PerturbationSignals sig;
  sig.w = (phi_c - phi_x).sum();
  sig.d = constraint_values(pb, x) - constraint_values(pb, consensual);
  sig.v = lagrangian_gradient(pb, star, eq.lambda_star) - phi_x;
  return sig;
}

OptimalEquilibrium compute_optimal_equilibrium(const ConstrainedProblem& pb,
                                               const Network& net,
                                               const KktPoint& kkt,
                                               double gamma) {
  if (!(gamma > 0)) throw DomainError("stepsize must be positive");
  if (net.n != pb.n)
    throw ShapeError("network and problem agent counts disagree");
  OptimalEquilibrium eq;
  eq.theta_star = kkt.theta_star;
  eq.lambda_star = kkt.lambda_star;
  eq.gamma = gamma;
  const VectorXd phi_star = lagrangian_gradient(
      pb, VectorXd::Constant(pb.n, kkt.theta_star), kkt.lambda_star);
  if (net.n == 1) {
    eq.z_perp_star = VectorXd(0);
  } else {
    const MatrixXd L = net.S.transpose() * net.K * net.S;
    eq.z_perp_star =
        -gamma * pb.n * L.llt().solve(net.S.transpose() * phi_star);
  }

  AlgorithmState st;
  st.x = VectorXd::Constant(pb.n, kkt.theta_star);
  st.z = eq.z_e(net.S, 0.0);
  st.lambda = kkt.lambda_star;
  const AlgorithmState next = step_distributed(pb, net, st, gamma);
  double res = (next.x - st.x).cwiseAbs().maxCoeff();
  res = std::max(res, (next.z - st.z).cwiseAbs().maxCoeff());
  if (pb.m > 0)
    res = std::max(res, (next.lambda - st.lambda).cwiseAbs().maxCoeff());
  if (res > 1e-10)
    throw ConsistencyError("constructed equilibrium is not fixed (residual " +
                           std::to_string(res) + ")");
  return eq;
}

double distance_to_optimal_set(const AlgorithmState& st,
                               const OptimalEquilibrium& eq,
                               const Network& net) {
  const auto [x_m, x_perp] = decompose(net.S, st.x);
  const VectorXd z_perp = net.S.transpose() * st.z;
  const double n = static_cast<double>(net.n);
  double sq = n * (x_m - eq.theta_star) * (x_m - eq.theta_star) +
              x_perp.squaredNorm() + (z_perp - eq.z_perp_star).squaredNorm() +
              (st.lambda - eq.lambda_star).squaredNorm();
  return std::sqrt(sq);
}

TrajectoryRecord run(const ConstrainedProblem& pb, const Network& net,
                     double gamma, const AlgorithmState& init,
                     const RunOptions& opts) {
  if (!(gamma > 0)) throw DomainError("stepsize must be positive");
  if (pb.m > 0 && init.lambda.minCoeff() < 0)
    throw DomainError(
        "initial multipliers must be nonnegative: the dual update projects "
        "onto the nonnegative orthant and assumes a nonnegative start");

  TrajectoryRecord rec;
  rec.gamma = gamma;
  AlgorithmState st = init;
  st.t = 0;

  const auto record = [&](const AlgorithmState& s) {
    TrajectoryRow row;
    row.t = s.t;
    const auto [x_m, x_perp] = decompose(net.S, s.x);
    row.x_perp_norm = x_perp.norm();
    const KktResidual res = kkt_residual(pb, x_m, s.lambda);
    row.kkt_stationarity = res.stationarity;
    row.kkt_primal = res.primal;
    row.kkt_comp = res.complementarity;
    row.kkt_dual = res.dual;
    row.z_sum = s.z.sum();
    if (opts.eq) row.dist = distance_to_optimal_set(s, *opts.eq, net);
    if (opts.eq && opts.ledger) {
      const VBreakdown vb = V_total(pb, net, *opts.ledger, gamma,
                                    to_core(net, s), *opts.eq);
      row.V = vb.V;
      row.V_opt = vb.V_opt;
      row.V_net = vb.V_net;
    }
    rec.rows.push_back(std::move(row));
  };

  const auto stopped = [&]() {
    const TrajectoryRow& row = rec.rows.back();
    if (opts.eq) return row.dist <= opts.stop_tol;
    const double kkt = std::max(
        {row.kkt_stationarity, row.kkt_primal, row.kkt_dual, row.kkt_comp});
    return kkt + row.x_perp_norm <= opts.stop_tol;
  };

  record(st);
  rec.stop_reason = "max_iter";
  while (true) {
    if (stopped()) {
      rec.stop_reason = opts.eq ? "dist_tol" : "kkt_tol";
      break;
    }
    if (st.t >= opts.max_iter) break;
    st = step_distributed(pb, net, st, gamma, opts.corrupt_z_update);
    record(st);
  }

  rec.final_state = std::move(st);
  rec.iterations = rec.final_state.t;
  rec.final_dist = rec.rows.back().dist;
  return rec;
}

}  // namespace consensuspd
