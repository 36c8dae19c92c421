#include "consensuspd/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "consensuspd/errors.hpp"

namespace consensuspd {

namespace {

constexpr double kKappa0Floor = 1e-6;
constexpr double kMonitorSlack = 1e-12;
constexpr double kInf = std::numeric_limits<double>::infinity();

double spectral_norm(const MatrixXd& M) {
  if (M.size() == 0) return 0.0;
  return Eigen::JacobiSVD<MatrixXd>(M).singularValues()(0);
}

void check_box_faces(const VectorXd& lo, const VectorXd& hi, int want,
                     const char* what) {
  if (lo.size() != want || hi.size() != want)
    throw ShapeError(std::string(what) + " box faces have wrong dimension");
  for (int i = 0; i < want; ++i)
    if (lo(i) > hi(i))
      throw DomainError(std::string(what) + " box has lo > hi at coordinate " +
                        std::to_string(i));
}

// Max of a convex quadratic over a box, by vertex enumeration on one
// coordinate block (the blocks are additively separable in the distance).
template <typename F>
double vertex_max(const VectorXd& lo, const VectorXd& hi, F&& value) {
  const int d = static_cast<int>(lo.size());
  if (d > 24) throw DomainError("box dimension too large for enumeration");
  double best = 0;
  VectorXd v(d);
  for (unsigned long mask = 0; mask < (1ul << d); ++mask) {
    for (int i = 0; i < d; ++i) v(i) = (mask & (1ul << i)) ? hi(i) : lo(i);
    best = std::max(best, value(v));
  }
  return best;
}

void require_positive(double v, const char* name) {
  if (!(v > 0) || !std::isfinite(v))
    throw LedgerError(std::string(name) +
                      " is not strictly positive and finite (" +
                      std::to_string(v) + ")");
}

}  // namespace

double compute_kappa0(const Network& net, const OptimalEquilibrium& eq,
                      const InitBox& box) {
  const int n = net.n;
  const int m = static_cast<int>(eq.lambda_star.size());
  check_box_faces(box.x_lo, box.x_hi, n, "x");
  check_box_faces(box.z_lo, box.z_hi, n, "z");
  check_box_faces(box.lam_lo, box.lam_hi, m, "lambda");
  if (m > 0 && box.lam_lo.minCoeff() < 0)
    throw DomainError("lambda box must lie in the nonnegative orthant");

  // Squared distance splits into independent x / z / lambda parts, each
  // convex, so each block maximum sits at a block vertex.
  const double x_part = vertex_max(box.x_lo, box.x_hi, [&](const VectorXd& x) {
    const auto [x_m, x_perp] = decompose(net.S, x);
    const double dm = x_m - eq.theta_star;
    return dm * dm + x_perp.squaredNorm();
  });
  const double z_part = vertex_max(box.z_lo, box.z_hi, [&](const VectorXd& z) {
    return (net.S.transpose() * z - eq.z_perp_star).squaredNorm();
  });
  double lam_part = 0;
  for (int j = 0; j < m; ++j) {
    const double a = box.lam_lo(j) - eq.lambda_star(j);
    const double b = box.lam_hi(j) - eq.lambda_star(j);
    lam_part += std::max(a * a, b * b);
  }
  return std::max(std::sqrt(x_part + z_part + lam_part), kKappa0Floor);
}

namespace {

ProblemConstants family_constants(const ConstrainedProblem& pb,
                                  const Network& net, double kappa,
                                  const KktPoint& kkt) {
  const auto& fam = *pb.family;
  const int n = pb.n, m = pb.m;
  ProblemConstants c;

  double amax = 0, asum = 0, a_sq = 0;
  VectorXd a(n);
  for (int i = 0; i < n; ++i) {
    a(i) = fam[i].a;
    amax = std::max(amax, fam[i].a);
    asum += fam[i].a;
    a_sq += fam[i].a * fam[i].a;
  }
  VectorXd p_flat(m);
  double pmax_agent = 0;
  for (int i = 0, r = 0; i < n; ++i) {
    pmax_agent = std::max(pmax_agent, fam[i].p.norm());
    for (int j = 0; j < fam[i].p.size(); ++j, ++r) p_flat(r) = fam[i].p(j);
  }
  const double pall = p_flat.norm();

  c.mu_f = asum;
  c.k0 = std::max(std::sqrt(double(n)) * amax, pmax_agent);
  c.k1 = pall;        // dominates both the stacked and the consensual bound
  c.k2 = std::max(asum, pall);
  c.k3 = asum;        // >= sqrt(sum a^2), covers the stacked variant too
  c.k4 = 0;           // constraint gradients are constant
  // Exact supremum of the linear functional over the kappa-ball.
  const VectorXd Sa = net.S.transpose() * a;
  c.k5 = kappa * std::sqrt(asum * asum + pall * pall + Sa.squaredNorm());
  c.k6 = pall;
  // |g(x)| <= |g(1 theta*)| + sigma_max([J1, JS]) |(x_m - theta*, x_perp)|.
  MatrixXd J = MatrixXd::Zero(m, n);
  for (int i = 0, r = 0; i < n; ++i)
    for (int j = 0; j < fam[i].p.size(); ++j, ++r) J(r, i) = fam[i].p(j);
  MatrixXd embed(n, n);
  embed.col(0) = VectorXd::Ones(n);
  if (n > 1) embed.rightCols(n - 1) = net.S;
  const double g_star =
      constraint_values_consensual(pb, kkt.theta_star).norm();
  c.k7 = g_star + kappa * spectral_norm(J * embed);

  c.h = kkt.h;
  c.h_convention = kkt.h_convention;

  // Gram matrix of the active constraint gradients; rows on the same agent
  // share a coordinate direction, so collisions make it singular.
  const int m_a = kkt.m_a;
  if (m_a == 0) {
    c.q0 = 1.0;  // no active multipliers to control; documented convention
    c.q0_convention = true;
  } else {
    MatrixXd gram(m_a, m_a);
    for (int r = 0; r < m_a; ++r)
      for (int s = 0; s < m_a; ++s) {
        const auto [ir, jr] = kkt.active_set[r];
        const auto [is, js] = kkt.active_set[s];
        gram(r, s) = (ir == is) ? fam[ir].p(jr) * fam[is].p(js) : 0.0;
      }
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(gram);
    c.q0 = es.eigenvalues()(0);
    if (c.q0 <= 1e-12 * std::max(1.0, gram.diagonal().maxCoeff()))
      throw AssumptionViolation(
          2, "active constraint gradients are degenerate (smallest Gram "
             "eigenvalue " + std::to_string(c.q0) + ")");
  }

  if (c.k1 > 0) {
    c.eps_bar1 = c.h / (2 * c.k1);
  } else {
    throw LedgerError("k1 is zero: all constraint gradients vanish");
  }
  return c;
}

// Sampled constants for problems without closed forms: axis scan lines
// through the kappa-ball, difference quotients for Lipschitz constants,
// direct sups for the bound constants, all inflated by 1.1 and flagged.
ProblemConstants sampled_constants(const ConstrainedProblem& pb,
                                   const Network& net, double kappa,
                                   const KktPoint& kkt, int grid_n) {
  const int n = pb.n, m = pb.m;
  ProblemConstants c;
  c.sampled = true;
  c.mu_f = pb.mu_f;
  c.h = kkt.h;
  c.h_convention = kkt.h_convention;

  const double theta_star = kkt.theta_star;
  const VectorXd& lambda_star = kkt.lambda_star;

  const auto phi = [&](const VectorXd& x, const VectorXd& lam) {
    return lagrangian_gradient(pb, x, lam);
  };
  const auto sum_grad_f = [&](const VectorXd& x) {
    double s = 0;
    for (int i = 0; i < n; ++i) s += pb.agents[i].cost_grad(x(i));
    return s;
  };
  const auto grad_g = [&](const VectorXd& x) {
    VectorXd out(m);
    for (int i = 0; i < n; ++i)
      if (pb.agents[i].m_i > 0)
        out.segment(pb.offsets[i], pb.agents[i].m_i) =
            pb.agents[i].constraint_grad(x(i));
    return out;
  };

  // Scan directions: x_m axis; each lambda axis plus the lambda diagonal;
  // each x_perp axis plus its diagonal.
  struct Probe {
    VectorXd x;
    VectorXd lam;
    double dxm, dxp, dlam;  // displacement split of one grid step
  };
  std::vector<std::vector<Probe>> lines;

  const double step = 2 * kappa / (grid_n - 1);
  const auto consensual = [&](double t) { return VectorXd::Constant(n, t); };

  {  // x_m line
    std::vector<Probe> line;
    for (int k = 0; k < grid_n; ++k) {
      const double t = theta_star - kappa + k * step;
      line.push_back({consensual(t), lambda_star, step, 0, 0});
    }
    lines.push_back(std::move(line));
  }
  std::vector<VectorXd> lam_dirs;
  for (int j = 0; j < m; ++j) lam_dirs.push_back(VectorXd::Unit(m, j));
  if (m > 0) lam_dirs.push_back(VectorXd::Constant(m, 1.0 / std::sqrt(m)));
  for (const VectorXd& u : lam_dirs) {
    std::vector<Probe> line;
    for (int k = 0; k < grid_n; ++k) {
      const double s = -kappa + k * step;
      line.push_back({consensual(theta_star), lambda_star + s * u, 0, 0, step});
    }
    lines.push_back(std::move(line));
  }
  std::vector<VectorXd> perp_dirs;
  for (int j = 0; j + 1 < n; ++j) perp_dirs.push_back(VectorXd::Unit(n - 1, j));
  if (n > 2)
    perp_dirs.push_back(VectorXd::Constant(n - 1, 1.0 / std::sqrt(n - 1.0)));
  for (const VectorXd& u : perp_dirs) {
    std::vector<Probe> line;
    for (int k = 0; k < grid_n; ++k) {
      const double s = -kappa + k * step;
      line.push_back(
          {consensual(theta_star) + net.S * (s * u), lambda_star, 0, step, 0});
    }
    lines.push_back(std::move(line));
  }

  for (const auto& line : lines) {
    for (std::size_t k = 0; k < line.size(); ++k) {
      const Probe& P = line[k];
      const auto [x_m, x_perp] = decompose(net.S, P.x);
      const VectorXd phix = phi(P.x, P.lam);
      const VectorXd phic = phi(consensual(x_m), P.lam);
      c.k5 = std::max({c.k5, std::abs(phix.sum()), std::abs(phic.sum())});
      if (m > 0) {
        c.k6 = std::max({c.k6, grad_g(P.x).norm(),
                         grad_g(consensual(x_m)).norm()});
        c.k7 = std::max({c.k7, constraint_values(pb, P.x).norm(),
                         constraint_values_consensual(pb, x_m).norm()});
        const double dev =
            std::abs(x_m - theta_star) + (P.lam - lambda_star).norm();
        if (dev > 1e-9)
          c.k2 = std::max(c.k2, std::abs(phic.sum()) / dev);
      }
      if (k > 0) {
        const Probe& Q = line[k - 1];
        const double den = Q.dxm + Q.dxp + Q.dlam;
        const VectorXd qx = phi(Q.x, Q.lam);
        c.k0 = std::max(c.k0, (phix - qx).norm() / den);
        if (m > 0) {
          const double dx = (P.x - Q.x).norm();
          if (dx > 0) {
            c.k1 = std::max(
                c.k1, (constraint_values(pb, P.x) - constraint_values(pb, Q.x))
                              .norm() / dx);
            c.k4 = std::max(c.k4, (grad_g(P.x) - grad_g(Q.x)).norm() / dx);
            c.k3 = std::max(
                c.k3, std::abs(sum_grad_f(P.x) - sum_grad_f(Q.x)) / dx);
          }
          const double dxm = std::abs(x_m - decompose(net.S, Q.x).first);
          if (dxm > 0) {
            c.k1 = std::max(c.k1,
                            (constraint_values_consensual(pb, x_m) -
                             constraint_values_consensual(
                                 pb, decompose(net.S, Q.x).first)).norm() /
                                dxm);
          }
        }
      }
    }
  }
  const double inflate = 1.1;
  c.k0 *= inflate;
  c.k1 *= inflate;
  c.k2 *= inflate;
  c.k3 *= inflate;
  c.k4 *= inflate;
  c.k5 *= inflate;
  c.k6 *= inflate;
  c.k7 *= inflate;
  if (c.k4 < 1e-12) c.k4 = 0;  // numerically affine constraints

  const int m_a = kkt.m_a;
  if (m_a == 0) {
    c.q0 = 1.0;
    c.q0_convention = true;
  } else {
    MatrixXd grads(n, m_a);  // active gradients as columns at 1 theta*
    const VectorXd gg = grad_g(consensual(theta_star));
    for (int r = 0; r < m_a; ++r) {
      const auto [i, j] = kkt.active_set[r];
      grads.col(r) = VectorXd::Unit(n, i) * gg(pb.offsets[i] + j);
    }
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(grads.transpose() * grads);
    c.q0 = es.eigenvalues()(0);
    if (c.q0 <= 1e-12)
      throw AssumptionViolation(
          2, "active constraint gradients are degenerate at the optimum");
  }
  if (!(c.k1 > 0))
    throw LedgerError("k1 is zero: all constraint gradients vanish");
  c.eps_bar1 = c.h / (2 * c.k1);
  return c;
}

}  // namespace

ProblemConstants estimate_problem_constants(const ConstrainedProblem& pb,
                                            const Network& net, double kappa,
                                            const KktPoint& kkt, int grid_n) {
  if (!(kappa > 0)) throw DomainError("kappa must be positive");
  if (pb.m == 0)
    throw LedgerError("certificate machinery needs at least one constraint");
  if (pb.family) return family_constants(pb, net, kappa, kkt);
  return sampled_constants(pb, net, kappa, kkt, grid_n);
}

ConstantsLedger assemble_ledger(const ConstrainedProblem& pb,
                                const Network& net, const KktPoint& kkt,
                                const InitBox& box, double gamma_center) {
  ConstantsLedger L;
  L.n = pb.n;
  L.m = pb.m;
  L.m_a = kkt.m_a;
  if (pb.m == 0)
    throw LedgerError("certificate machinery needs at least one constraint");
  L.c_l = net.c_l;
  L.c_u = net.c_u;
  L.lyapunov_convention = net.lyapunov_convention;
  L.theta_star = kkt.theta_star;
  L.lambda_star = kkt.lambda_star;
  L.gamma_center = gamma_center;

  OptimalEquilibrium eq;
  if (gamma_center > 0) {
    eq = compute_optimal_equilibrium(pb, net, kkt, gamma_center);
  } else {
    // gamma -> 0 limit: the tracking offset vanishes; used to seed the
    // stepsize fixed point before any gamma is known.
    eq.theta_star = kkt.theta_star;
    eq.lambda_star = kkt.lambda_star;
    eq.z_perp_star = VectorXd::Zero(std::max(0, pb.n - 1));
    eq.gamma = 0;
  }
  L.z_perp_star = eq.z_perp_star;

  L.kappa0 = compute_kappa0(net, eq, box);
  const double ratio = L.c_u / L.c_l;
  L.kappa1 = L.kappa0 * std::sqrt(std::max(3.0, ratio));
  L.kappa = std::max(2 * L.kappa0 + 1, std::sqrt(ratio) * (L.kappa1 + 1));

  const ProblemConstants pc =
      estimate_problem_constants(pb, net, L.kappa, kkt);
  L.k0 = pc.k0; L.k1 = pc.k1; L.k2 = pc.k2; L.k3 = pc.k3;
  L.k4 = pc.k4; L.k5 = pc.k5; L.k6 = pc.k6; L.k7 = pc.k7;
  L.q0 = pc.q0;
  L.mu_f = pc.mu_f;
  L.h = pc.h;
  L.eps_bar1 = pc.eps_bar1;
  L.h_convention = pc.h_convention;
  L.q0_convention = pc.q0_convention;
  L.sampled_constants = pc.sampled;

  L.norm_AtPB = spectral_norm(net.A.transpose() * net.P * net.B);
  L.norm_BtPB = spectral_norm(net.B.transpose() * net.P * net.B);

  const double n = L.n, m = L.m;
  const double k0 = L.k0, k1 = L.k1, k2 = L.k2, k3 = L.k3, k4 = L.k4,
               k5 = L.k5, k6 = L.k6, k7 = L.k7;
  const double lam_norm = L.lambda_star.norm();

  L.M = std::max(
      (8 / (k2 * k2)) *
          ((32.0 / 3.0) * L.c_u * m * m * (2 * k1 + 1) * (2 * k1 + 1) +
           (9 / (2 * L.c_u)) * k0 * k0 * n * n *
               (2 * L.norm_AtPB * L.norm_AtPB + L.norm_BtPB)),
      1.0);
  L.beta = 2 * (2 + L.M) * k2 * k2 / L.q0;
  const double beta = L.beta;

  const double a1den = k4 * k5 + k6 * (k3 + k4 * lam_norm);
  if (!(a1den > 0)) throw LedgerError("alpha1 denominator is not positive");
  L.alpha1 = L.q0 / a1den;
  L.alpha2 = a1den / (2 * L.alpha1) + k1 * k6;
  L.alpha3 = (3 * k1 * k2 * k6 + k2 * k4 * k5) / 2;
  L.alpha4 = (k1 * k2 * k6 + 3 * k2 * k4 * k5) / 2;
  L.alpha7 = k2 * k6 + (beta / 2) * (L.kappa * k4 * k6 + k4 * k5 + k2 * k6);
  L.alpha8 = (beta / 2) * (k1 * k1 * k6 * k6 + L.kappa * k4 * k6 * k2 * k2);
  L.alpha9 = beta * (k2 * k6 / 2 + k6 * k6) + k2 * k6;
  L.alpha10 = beta * L.kappa * k4 * k6 * k2 * k2 / 2;
  L.delta1 = L.M * k2 * k2 / (8 * L.alpha9);
  L.delta2_zero_branch = (L.m == L.m_a);
  L.delta2 = L.delta2_zero_branch
                 ? 0.0
                 : L.mu_f / (2 * (m - L.m_a) * (1 + beta) * k1);
  const double d1 = L.delta1;
  L.alpha11 = (beta / 2) * (k4 * k5 + k2 * k6 * (1 + d1 + d1 * d1) / d1) +
              k2 * k6 * (1 + d1) / d1 + k6 * k6 +
              beta * k6 * k6 * (1 + 2 * d1) / (4 * d1) +
              beta * L.kappa * k4 * k6;

  L.eps_bar = std::min(L.eps_bar1, L.h / (4 * k1 * (1 + 2 * beta)));
  L.eps = L.eps_bar / 2;
  const double eps = L.eps;

  auto& g = L.gammabar;
  g[0] = 1 / (16 * L.kappa0 * k5);
  g[1] = 1 / (2 * k5);
  g[2] = 1 / (16 * L.kappa0 * k7);
  g[3] = 1 / (2 * k7);
  g[4] = 1 / (beta * k6);
  g[5] = L.mu_f * eps * eps /
         (beta * (4 * L.kappa0 * L.kappa0 * k4 * k5 +
                  2 * L.kappa0 * k6 * k7 + k5 * k6 * L.kappa) +
          k7 * k7 + k5 * k5);
  g[6] = std::min(L.mu_f / (2 * (k1 * k1 + 2 * k2 * k2 + beta * L.alpha2)),
                  std::sqrt(L.mu_f / (2 * beta * L.alpha3)));
  g[7] = L.M * k2 * k2 / (2 * beta * L.alpha4);
  g[8] = 1 / (2 * std::sqrt(L.alpha11));
  if (!L.delta2_zero_branch)
    g[8] = std::min(g[8], L.delta2 / (4 * (1 + beta) * k1));
  g[9] = L.h / (4 * L.alpha11 * L.kappa);
  g[10] = std::min({L.mu_f / (8 * L.alpha7),
                    0.5 * std::cbrt(L.mu_f / L.alpha8),
                    std::sqrt(L.M * k2 * k2 / (8 * L.alpha10))});
  g[11] = 2 * L.h / (L.kappa * k2 * k2);
  g[12] = std::min({1 / (12 * L.kappa1 * k5), 1 / (std::sqrt(6.0) * k5),
                    1 / (12 * L.kappa1 * k7), 1 / (std::sqrt(6.0) * k7)});
  g[13] = std::min(std::sqrt(L.c_l / 3), 0.5) /
          (n * k0 * L.kappa *
           std::sqrt(6 * L.norm_AtPB * L.norm_AtPB + 3 * L.norm_BtPB));
  g[14] = std::min(
      1 / (2 * beta * k0 * (n * L.kappa1 * k4 + std::sqrt(n) * k6)),
      1 / std::sqrt(2 * beta * n * k0 * k4 * k5));
  g[15] = std::min({1 / (2 * k2),
                    std::sqrt(n) * k0 /
                        (beta * k1 * k6 + m * k1 * (2 * k1 + 1)),
                    std::sqrt(2 * std::sqrt(n) * k0 / (beta * k1 * k2 * k6)),
                    m * (2 * k1 + 1) / (4 * std::sqrt(n) * k0 * k2),
                    std::sqrt(m * (2 * k1 + 1) / (2 * beta * k1 * k2 * k6))});
  g[16] = std::min(L.mu_f / (768 * n * k0 * k0 * (2 * L.c_u + 3)),
                   std::sqrt(3 / (64 * L.c_u * (n * k0 * k0 + k1 * k1 + k1))));
  g[17] = L.mu_f * L.c_u /
          (12 * (2 * L.c_u + 3) * k0 * k0 * n * n *
           (2 * L.norm_AtPB * L.norm_AtPB + L.norm_BtPB));
  g[18] = 6 * L.mu_f * eps * eps / (L.M * k2 * k2 * L.kappa1 * L.kappa1);
  g[19] = std::min(std::sqrt(2 / (L.M * k2 * k2)),
                   2 * L.h / (L.M * k2 * k2 * L.kappa1));

  L.gammabar0 = *std::min_element(g.begin(), g.end());

  require_positive(L.kappa0, "kappa0");
  require_positive(L.kappa1, "kappa1");
  require_positive(L.kappa, "kappa");
  require_positive(k0, "k0");
  require_positive(k1, "k1");
  require_positive(k2, "k2");
  require_positive(k3, "k3");
  require_positive(k5, "k5");
  require_positive(k6, "k6");
  require_positive(k7, "k7");
  require_positive(L.q0, "q0");
  require_positive(L.mu_f, "mu_f");
  require_positive(L.h, "h");
  require_positive(L.eps_bar1, "eps_bar1");
  require_positive(L.eps_bar, "eps_bar");
  require_positive(L.eps, "eps");
  require_positive(L.M, "M");
  require_positive(L.beta, "beta");
  require_positive(L.alpha1, "alpha1");
  require_positive(L.alpha2, "alpha2");
  require_positive(L.alpha3, "alpha3");
  require_positive(L.alpha7, "alpha7");
  require_positive(L.alpha8, "alpha8");
  require_positive(L.alpha9, "alpha9");
  require_positive(L.alpha11, "alpha11");
  require_positive(L.delta1, "delta1");
  if (!L.delta2_zero_branch) require_positive(L.delta2, "delta2");
  if (!(k4 >= 0) || !std::isfinite(k4)) throw LedgerError("k4 is invalid");
  for (int i = 0; i < 20; ++i) {
    const bool n1_exempt = (L.n == 1) && (i == 13 || i == 17);
    if (!(g[i] > 0))
      throw LedgerError("gammabar" + std::to_string(i + 1) +
                        " is not strictly positive");
    if (!n1_exempt && !std::isfinite(g[i]))
      throw LedgerError("gammabar" + std::to_string(i + 1) + " is not finite");
  }
  require_positive(L.gammabar0, "gammabar0");
  return L;
}

std::pair<double, ConstantsLedger> auto_gamma(const ConstrainedProblem& pb,
                                              const Network& net,
                                              const KktPoint& kkt,
                                              const InitBox& box) {
  // kappa0 depends on the ball center z_perp_star(gamma), which depends on
  // gamma; iterate the gamma = gammabar0(gamma)/2 map from the gamma -> 0
  // seed. The dependence is weak (z_perp_star is gamma-linear and tiny), so
  // this converges in a few rounds.
  double gamma = 0;
  ConstantsLedger ledger = assemble_ledger(pb, net, kkt, box, gamma);
  for (int it = 0; it < 100; ++it) {
    const double next = ledger.gammabar0 / 2;
    if (std::abs(next - gamma) <= 1e-15 * next) {
      ledger = assemble_ledger(pb, net, kkt, box, next);
      if (!(next < ledger.gammabar0))
        throw LedgerError("automatic stepsize failed to stabilize below its "
                          "own bound");
      return {next, ledger};
    }
    gamma = next;
    ledger = assemble_ledger(pb, net, kkt, box, gamma);
  }
  throw LedgerError("automatic stepsize fixed point did not converge");
}

RateCertificate rate_certificate(const ConstantsLedger& ledger, double gamma) {
  if (!(gamma > 0) || !(gamma < ledger.gammabar0))
    throw CertificateRefused(
        "stepsize " + std::to_string(gamma) +
        " is outside the certified range (0, " +
        std::to_string(ledger.gammabar0) + ")");
  RateCertificate cert;
  cert.gamma = gamma;
  cert.omega = std::min({gamma * ledger.mu_f / 12,
                         gamma * gamma * ledger.k2 * ledger.k2 / 12,
                         gamma * ledger.h / (6 * ledger.kappa1), 1.0 / 6,
                         1 / (8 * ledger.c_u)});
  if (!(cert.omega > 0) || !(cert.omega < 1))
    throw ConsistencyError("contraction coefficient out of range");
  cert.eta2 = gamma * ledger.mu_f * ledger.eps * ledger.eps / (4 * cert.omega);
  const double eps2 = ledger.eps * ledger.eps;
  const double minsq = std::min(eps2, cert.eta2);
  // T = q / omega with q = (3 kappa0^2 - minsq) / minsq; q alone can reach
  // ~1e13 and T ~1e50+, so c = exp(log_c) may overflow. log_c and log_mu
  // stay finite and drive the envelope monitor.
  const double q = (3 * ledger.kappa0 * ledger.kappa0 - minsq) / minsq;
  cert.T = q / cert.omega;
  cert.log_mu = 0.5 * std::log1p(-cert.omega);
  cert.mu = std::sqrt(1 - cert.omega);
  const double lead =
      std::log(ledger.n * std::max(3.0, ledger.c_u / ledger.c_l));
  cert.log_c = 0.5 * (lead - q * (std::log1p(-cert.omega) / cert.omega));
  cert.c = std::exp(cert.log_c);  // may overflow to +inf; log_c is exact
  return cert;
}

double V_opt_value(const ConstrainedProblem& pb, double gamma, double beta,
                   double x_m, const VectorXd& lambda, double theta_star,
                   const VectorXd& lambda_star) {
  const double dm = x_m - theta_star;
  const VectorXd dl = lambda - lambda_star;
  double cross = 0;
  if (pb.m > 0)
    cross = constraint_gradient_consensual(pb, x_m).dot(dl);
  return dm * dm + dl.squaredNorm() + gamma * beta * dm * cross;
}

VBreakdown V_total(const ConstrainedProblem& pb, const Network& net,
                   const ConstantsLedger& ledger, double gamma,
                   const CoreState& core, const OptimalEquilibrium& eq) {
  VBreakdown out;
  out.V_opt = V_opt_value(pb, gamma, ledger.beta, core.x_m, core.lambda,
                          eq.theta_star, eq.lambda_star);
  if (net.n > 1) {
    VectorXd xi(2 * (net.n - 1));
    xi.head(net.n - 1) = core.x_perp;
    xi.tail(net.n - 1) = core.z_perp - eq.z_perp_star;
    out.V_net = xi.dot(net.P * xi);
  }
  out.V = out.V_opt + (3 / (2 * ledger.c_u)) * out.V_net;
  return out;
}

DescentReport monitor_descent(const TrajectoryRecord& record,
                              const ConstantsLedger& ledger,
                              const RateCertificate& cert) {
  DescentReport rep;
  const double gamma = cert.gamma;
  const double floor_step =
      gamma * ledger.mu_f * ledger.eps * ledger.eps / 8;
  const double level = 1.5 * ledger.kappa0 * ledger.kappa0;
  const auto& rows = record.rows;

  for (std::size_t k = 0; k + 1 < rows.size(); ++k) {
    if (!rows[k].V || !rows[k + 1].V) continue;
    ++rep.steps_checked;
    const double V = *rows[k].V;
    const bool in_omega = V <= level + kMonitorSlack &&
                          (!std::isfinite(rows[k].dist) ||
                           rows[k].dist <= ledger.kappa);
    if (!in_omega) continue;
    ++rep.in_level_set;
    const double bound = V - std::min(floor_step, cert.omega * V);
    if (*rows[k + 1].V > bound + kMonitorSlack) {
      ++rep.descent_violations;
      if (rep.first_descent_violation < 0)
        rep.first_descent_violation = rows[k].t;
    }
  }

  if (!rows.empty() && std::isfinite(rows.front().dist)) {
    const double d0 = rows.front().dist;
    for (const auto& row : rows) {
      if (!std::isfinite(row.dist)) continue;
      ++rep.envelope_checked;
      bool ok;
      if (row.dist == 0) {
        ok = true;
      } else if (d0 == 0) {
        ok = row.dist <= kMonitorSlack;
      } else {
        ok = std::log(row.dist) <=
             cert.log_c + row.t * cert.log_mu + std::log(d0) + kMonitorSlack;
      }
      if (!ok) {
        ++rep.envelope_violations;
        if (rep.first_envelope_violation < 0)
          rep.first_envelope_violation = row.t;
      }
    }
  }
  rep.pass = rep.descent_violations == 0 && rep.envelope_violations == 0;
  return rep;
}

}  // namespace consensuspd
