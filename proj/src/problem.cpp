#include "consensuspd/problem.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "consensuspd/errors.hpp"

namespace consensuspd {

namespace {

constexpr double kActiveTol = 1e-9;

void finalize_layout(ConstrainedProblem& pb) {
  pb.n = static_cast<int>(pb.agents.size());
  pb.offsets.assign(pb.n + 1, 0);
  for (int i = 0; i < pb.n; ++i) {
    if (pb.agents[i].m_i < 0)
      throw ShapeError("agent " + std::to_string(i) + ": negative constraint count");
    pb.offsets[i + 1] = pb.offsets[i] + pb.agents[i].m_i;
  }
  pb.m = pb.offsets[pb.n];
}

VectorXd agent_constraints(const ConstrainedProblem& pb, int i, double xi) {
  const AgentProblem& ag = pb.agents[i];
  if (ag.m_i == 0) return VectorXd(0);
  VectorXd g = ag.constraint_eval(xi);
  if (g.size() != ag.m_i)
    throw ShapeError("agent " + std::to_string(i) +
                     ": constraint_eval returned " + std::to_string(g.size()) +
                     " rows, expected " + std::to_string(ag.m_i));
  return g;
}

VectorXd agent_constraint_grads(const ConstrainedProblem& pb, int i, double xi) {
  const AgentProblem& ag = pb.agents[i];
  if (ag.m_i == 0) return VectorXd(0);
  VectorXd dg = ag.constraint_grad(xi);
  if (dg.size() != ag.m_i)
    throw ShapeError("agent " + std::to_string(i) +
                     ": constraint_grad returned " + std::to_string(dg.size()) +
                     " rows, expected " + std::to_string(ag.m_i));
  return dg;
}

// Feasible interval [lo, hi] of the affine system p*t + q <= 0; rows with
// p = 0 are feasibility constants. Throws when empty.
struct Interval {
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
};

Interval feasible_interval(const std::vector<QuadraticAgent>& fam) {
  Interval iv;
  for (const auto& ag : fam)
    for (int j = 0; j < ag.p.size(); ++j) {
      const double p = ag.p(j), q = ag.q(j);
      if (p > 0)
        iv.hi = std::min(iv.hi, -q / p);
      else if (p < 0)
        iv.lo = std::max(iv.lo, -q / p);
      else if (q > kActiveTol)
        throw InfeasibleError("constant constraint row is positive (q = " +
                              std::to_string(q) + " with p = 0)");
    }
  if (iv.lo > iv.hi + 1e-12)
    throw InfeasibleError("empty feasible interval");
  return iv;
}

}  // namespace

double KktResidual::max() const {
  return std::max({stationarity, primal, dual, complementarity});
}

ConstrainedProblem make_quadratic_problem(std::vector<QuadraticAgent> fam) {
  ConstrainedProblem pb;
  double asum = 0;
  for (std::size_t i = 0; i < fam.size(); ++i) {
    const QuadraticAgent& qa = fam[i];
    if (qa.p.size() != qa.q.size())
      throw ShapeError("agent " + std::to_string(i) +
                       ": p and q lengths differ");
    if (!(qa.a > 0))
      throw AssumptionViolation(1, "agent " + std::to_string(i) +
                                       " has nonpositive quadratic "
                                       "coefficient a = " +
                                       std::to_string(qa.a));
    asum += qa.a;
    AgentProblem ag;
    const double a = qa.a, b = qa.b;
    const VectorXd p = qa.p, q = qa.q;
    ag.cost_eval = [a, b](double t) { return 0.5 * a * t * t + b * t; };
    ag.cost_grad = [a, b](double t) { return a * t + b; };
    ag.constraint_eval = [p, q](double t) -> VectorXd { return p * t + q; };
    ag.constraint_grad = [p](double) -> VectorXd { return p; };
    ag.m_i = static_cast<int>(p.size());
    pb.agents.push_back(std::move(ag));
  }
  if (!(asum > 0))
    throw AssumptionViolation(1, "summed cost is not strongly convex");
  pb.mu_f = asum;
  pb.family = std::move(fam);
  finalize_layout(pb);
  return pb;
}

ConstrainedProblem make_generic_problem(std::vector<AgentProblem> agents,
                                        double mu_f) {
  if (!(mu_f > 0))
    throw DomainError("mu_f must be positive");
  ConstrainedProblem pb;
  pb.agents = std::move(agents);
  pb.mu_f = mu_f;
  finalize_layout(pb);
  return pb;
}

VectorXd lagrangian_gradient(const ConstrainedProblem& pb, const VectorXd& x,
                             const VectorXd& lambda) {
  if (x.size() != pb.n)
    throw ShapeError("x has " + std::to_string(x.size()) +
                     " entries, expected " + std::to_string(pb.n));
  if (lambda.size() != pb.m)
    throw ShapeError("lambda has " + std::to_string(lambda.size()) +
                     " entries, expected " + std::to_string(pb.m));
  VectorXd phi(pb.n);
  for (int i = 0; i < pb.n; ++i) {
    double v = pb.agents[i].cost_grad(x(i));
    if (pb.agents[i].m_i > 0) {
      const VectorXd dg = agent_constraint_grads(pb, i, x(i));
      v += lambda.segment(pb.offsets[i], pb.agents[i].m_i).dot(dg);
    }
    phi(i) = v;
  }
  return phi;
}

VectorXd constraint_values(const ConstrainedProblem& pb, const VectorXd& x) {
  if (x.size() != pb.n)
    throw ShapeError("x has " + std::to_string(x.size()) +
                     " entries, expected " + std::to_string(pb.n));
  VectorXd g(pb.m);
  for (int i = 0; i < pb.n; ++i)
    if (pb.agents[i].m_i > 0)
      g.segment(pb.offsets[i], pb.agents[i].m_i) = agent_constraints(pb, i, x(i));
  return g;
}

VectorXd constraint_values_consensual(const ConstrainedProblem& pb,
                                      double theta) {
  VectorXd g(pb.m);
  for (int i = 0; i < pb.n; ++i)
    if (pb.agents[i].m_i > 0)
      g.segment(pb.offsets[i], pb.agents[i].m_i) = agent_constraints(pb, i, theta);
  return g;
}

VectorXd constraint_gradient_consensual(const ConstrainedProblem& pb,
                                        double theta) {
  VectorXd dg(pb.m);
  for (int i = 0; i < pb.n; ++i)
    if (pb.agents[i].m_i > 0)
      dg.segment(pb.offsets[i], pb.agents[i].m_i) =
          agent_constraint_grads(pb, i, theta);
  return dg;
}

KktResidual kkt_residual(const ConstrainedProblem& pb, double theta,
                         const VectorXd& lambda) {
  KktResidual r;
  const VectorXd ones = VectorXd::Constant(pb.n, theta);
  r.stationarity = std::abs(lagrangian_gradient(pb, ones, lambda).sum());
  if (pb.m > 0) {
    const VectorXd g = constraint_values_consensual(pb, theta);
    r.primal = std::max(0.0, g.maxCoeff());
    r.dual = std::max(0.0, -lambda.minCoeff());
    r.complementarity = (lambda.array() * g.array()).abs().maxCoeff();
  }
  return r;
}

KktPoint solve_kkt_oracle(const ConstrainedProblem& pb) {
  if (!pb.family)
    throw DomainError("exact oracle needs the quadratic/affine family");
  if (pb.m > 24)
    throw DomainError("active-set enumeration limited to 24 constraints");
  const auto& fam = *pb.family;
  feasible_interval(fam);  // throws on infeasibility

  double asum = 0, bsum = 0;
  VectorXd p_flat(pb.m), q_flat(pb.m);
  for (int i = 0, r = 0; i < pb.n; ++i) {
    asum += fam[i].a;
    bsum += fam[i].b;
    for (int j = 0; j < fam[i].p.size(); ++j, ++r) {
      p_flat(r) = fam[i].p(j);
      q_flat(r) = fam[i].q(j);
    }
  }

  struct Candidate {
    double theta;
    VectorXd lambda;
  };
  std::vector<Candidate> survivors;

  const unsigned long masks = 1ul << pb.m;
  for (unsigned long mask = 0; mask < masks; ++mask) {
    std::vector<int> act;
    for (int r = 0; r < pb.m; ++r)
      if (mask & (1ul << r)) act.push_back(r);
    const int k = static_cast<int>(act.size());

    MatrixXd Mx = MatrixXd::Zero(k + 1, k + 1);
    VectorXd rhs(k + 1);
    Mx(0, 0) = asum;
    rhs(0) = -bsum;
    for (int j = 0; j < k; ++j) {
      Mx(0, 1 + j) = p_flat(act[j]);
      Mx(1 + j, 0) = p_flat(act[j]);
      rhs(1 + j) = -q_flat(act[j]);
    }
    Eigen::FullPivLU<MatrixXd> lu(Mx);
    if (!lu.isInvertible()) continue;  // non-unique multipliers on this set
    const VectorXd sol = lu.solve(rhs);
    const double theta = sol(0);

    bool ok = true;
    for (int j = 0; j < k && ok; ++j)
      if (sol(1 + j) < -kActiveTol) ok = false;
    if (!ok) continue;
    for (int r = 0; r < pb.m && ok; ++r)
      if (p_flat(r) * theta + q_flat(r) > kActiveTol) ok = false;
    if (!ok) continue;

    VectorXd lambda = VectorXd::Zero(pb.m);
    for (int j = 0; j < k; ++j) lambda(act[j]) = std::max(0.0, sol(1 + j));
    bool dup = false;
    for (const auto& c : survivors)
      if (std::abs(c.theta - theta) <= kActiveTol &&
          (pb.m == 0 || (c.lambda - lambda).cwiseAbs().maxCoeff() <= kActiveTol)) {
        dup = true;
        break;
      }
    if (!dup) survivors.push_back({theta, std::move(lambda)});
  }

  if (survivors.empty())
    throw DegenerateError(
        "feasible instance with no invertible optimality system");
  if (survivors.size() > 1)
    throw DegenerateError("optimality system has " +
                          std::to_string(survivors.size()) +
                          " distinct solutions");

  KktPoint kkt;
  kkt.theta_star = survivors[0].theta;
  kkt.lambda_star = std::move(survivors[0].lambda);
  const KktResidual res = kkt_residual(pb, kkt.theta_star, kkt.lambda_star);
  if (res.max() > kActiveTol)
    throw ConsistencyError("oracle output fails its own optimality check");
  const Classification cls = classify_constraints(pb, kkt, kActiveTol);
  kkt.active_set = cls.active_set;
  kkt.inactive_set = cls.inactive_set;
  kkt.m_a = cls.m_a;
  kkt.h = cls.h;
  kkt.h_convention = cls.h_convention;
  return kkt;
}

std::pair<double, VectorXd> solve_kkt_grid(const ConstrainedProblem& pb) {
  if (!pb.family)
    throw DomainError("grid oracle needs the quadratic/affine family");
  const auto& fam = *pb.family;
  const Interval iv = feasible_interval(fam);

  const auto dF = [&](double t) {
    double s = 0;
    for (const auto& ag : pb.agents) s += ag.cost_grad(t);
    return s;
  };
  const auto F = [&](double t) {
    double s = 0;
    for (const auto& ag : pb.agents) s += ag.cost_eval(t);
    return s;
  };

  // Unconstrained minimizer by derivative bisection on an expanding bracket.
  double lo = -1, hi = 1;
  for (int k = 0; k < 2000 && dF(lo) > 0; ++k) lo *= 2;
  for (int k = 0; k < 2000 && dF(hi) < 0; ++k) hi *= 2;
  for (int k = 0; k < 200; ++k) {
    const double mid = 0.5 * (lo + hi);
    (dF(mid) < 0 ? lo : hi) = mid;
  }
  const double theta_u = 0.5 * (lo + hi);

  double bound_mag = 0;
  for (const auto& ag : fam)
    for (int j = 0; j < ag.p.size(); ++j)
      if (ag.p(j) != 0)
        bound_mag = std::max(bound_mag, std::abs(-ag.q(j) / ag.p(j)));
  const double R = 10.0 * (1.0 + std::abs(theta_u) + bound_mag);
  const double glo = std::max(iv.lo, theta_u - R);
  const double ghi = std::min(iv.hi, theta_u + R);

  // Coarse grid localization, then derivative bisection between neighbors.
  const int N = 65537;
  int best = 0;
  double best_val = std::numeric_limits<double>::infinity();
  const double step = (ghi - glo) / (N - 1);
  for (int k = 0; k < N; ++k) {
    const double v = F(glo + k * step);
    if (v < best_val) {
      best_val = v;
      best = k;
    }
  }
  double a = std::max(glo, glo + (best - 1) * step);
  double b = std::min(ghi, glo + (best + 1) * step);
  double theta;
  if (dF(a) >= 0)
    theta = a;
  else if (dF(b) <= 0)
    theta = b;
  else {
    for (int k = 0; k < 300 && (b - a) > 1e-15 * (1 + std::abs(a)); ++k) {
      const double mid = 0.5 * (a + b);
      (dF(mid) < 0 ? a : b) = mid;
    }
    theta = 0.5 * (a + b);
  }

  VectorXd lambda = VectorXd::Zero(pb.m);
  const double edge_tol = 1e-7;
  const bool at_hi = std::isfinite(iv.hi) && (iv.hi - theta) <= edge_tol;
  const bool at_lo = std::isfinite(iv.lo) && (theta - iv.lo) <= edge_tol;
  if (at_hi || at_lo) {
    const double slack = std::abs(dF(theta));
    if (slack > 0) {
      for (int i = 0, r = 0; i < pb.n; ++i)
        for (int j = 0; j < fam[i].p.size(); ++j, ++r) {
          const double p = fam[i].p(j);
          if (p == 0) continue;
          const double bound = -fam[i].q(j) / p;
          const bool binding = (at_hi && p > 0 && std::abs(bound - theta) <= edge_tol) ||
                               (at_lo && p < 0 && std::abs(bound - theta) <= edge_tol);
          if (binding) {
            lambda(r) = std::max(0.0, -dF(theta) / p);
            return {theta, lambda};
          }
        }
    }
  }
  return {theta, lambda};
}

Classification classify_constraints(const ConstrainedProblem& pb,
                                    const KktPoint& kkt, double tol) {
  Classification cls;
  const VectorXd g = constraint_values_consensual(pb, kkt.theta_star);
  double h = std::numeric_limits<double>::infinity();
  for (int i = 0, r = 0; i < pb.n; ++i)
    for (int j = 0; j < pb.agents[i].m_i; ++j, ++r) {
      if (std::abs(g(r)) <= tol) {
        cls.active_set.emplace_back(i, j);
      } else {
        cls.inactive_set.emplace_back(i, j);
        h = std::min(h, std::abs(g(r)));
        if (kkt.lambda_star.size() == pb.m && kkt.lambda_star(r) > tol)
          throw ConsistencyError(
              "complementarity violation: positive multiplier on inactive "
              "constraint (agent " + std::to_string(i) + ", row " +
              std::to_string(j) + ")");
      }
    }
  cls.m_a = static_cast<int>(cls.active_set.size());
  if (cls.inactive_set.empty()) {
    cls.h = 1.0;  // unused by the dynamics; documented convention value
    cls.h_convention = true;
  } else {
    cls.h = h;
    cls.h_convention = false;
  }
  return cls;
}

}  // namespace consensuspd
