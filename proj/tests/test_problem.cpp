#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "consensuspd/errors.hpp"
#include "consensuspd/problem.hpp"

using namespace consensuspd;

namespace {

VectorXd vec(std::initializer_list<double> v) {
  VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

// min x1^2 + (x2^2 - 2 x2) + (x3^2 - 4 x3)  s.t.  theta - 0.5 <= 0.
// Summed cost 3 theta^2 - 6 theta has unconstrained minimizer 1, so the
// constraint binds: theta* = 1/2 and stationarity 6*0.5 - 6 + lambda = 0
// gives lambda* = 3. Worked by hand; frozen here as the expected values.
ConstrainedProblem desk_problem() {
  std::vector<QuadraticAgent> agents(3);
  agents[0].a = 2;
  agents[0].b = 0;
  agents[0].p = vec({1.0});
  agents[0].q = vec({-0.5});
  agents[1].a = 2;
  agents[1].b = -2;
  agents[2].a = 2;
  agents[2].b = -4;
  return make_quadratic_problem(agents);
}

// Same costs, constraint theta - 5 <= 0: inactive at the unconstrained
// minimizer theta* = 1, so lambda* = 0 and the margin is |1 - 5| = 4.
ConstrainedProblem desk_inactive() {
  std::vector<QuadraticAgent> agents(3);
  agents[0].a = 2;
  agents[0].b = 0;
  agents[0].p = vec({1.0});
  agents[0].q = vec({-5.0});
  agents[1].a = 2;
  agents[1].b = -2;
  agents[2].a = 2;
  agents[2].b = -4;
  return make_quadratic_problem(agents);
}

}  // namespace

TEST_CASE("quadratic problem layout and strong convexity modulus") {
  const ConstrainedProblem pb = desk_problem();
  CHECK(pb.n == 3);
  CHECK(pb.m == 1);
  CHECK(pb.mu_f == doctest::Approx(6.0).epsilon(1e-15));
  REQUIRE(pb.offsets.size() == 4);
  CHECK(pb.offsets[0] == 0);
  CHECK(pb.offsets[1] == 1);
  CHECK(pb.offsets[2] == 1);
  CHECK(pb.offsets[3] == 1);
  CHECK(pb.family.has_value());
}

TEST_CASE("construction rejects malformed families") {
  std::vector<QuadraticAgent> bad(1);
  bad[0].p = vec({1.0});
  bad[0].q = vec({1.0, 2.0});
  CHECK_THROWS_AS(make_quadratic_problem(bad), ShapeError);

  std::vector<QuadraticAgent> flat(1);
  flat[0].a = 0.0;
  CHECK_THROWS_AS(make_quadratic_problem(flat), AssumptionViolation);
  try {
    make_quadratic_problem(flat);
  } catch (const AssumptionViolation& e) {
    CHECK(e.assumption == 1);
  }

  CHECK_THROWS_AS(make_quadratic_problem({}), AssumptionViolation);
}

TEST_CASE("lagrangian gradient on the desk instance") {
  const ConstrainedProblem pb = desk_problem();
  const VectorXd x = VectorXd::Constant(3, 0.5);
  const VectorXd lam = vec({3.0});
  const VectorXd phi = lagrangian_gradient(pb, x, lam);
  // f1' + lambda = 1 + 3, f2' = -1, f3' = -3; the sum vanishes exactly at
  // the optimum.
  CHECK(phi(0) == doctest::Approx(4.0).epsilon(1e-15));
  CHECK(phi(1) == doctest::Approx(-1.0).epsilon(1e-15));
  CHECK(phi(2) == doctest::Approx(-3.0).epsilon(1e-15));
  CHECK(std::abs(phi.sum()) <= 1e-15);

  CHECK_THROWS_AS(lagrangian_gradient(pb, x, vec({1.0, 2.0})), ShapeError);
  CHECK_THROWS_AS(lagrangian_gradient(pb, vec({1.0}), lam), ShapeError);
}

TEST_CASE("constraint evaluations, consensual variants") {
  const ConstrainedProblem pb = desk_problem();
  CHECK(constraint_values(pb, vec({0.0, 7.0, -7.0}))(0) ==
        doctest::Approx(-0.5).epsilon(1e-15));
  CHECK(constraint_values_consensual(pb, 0.0)(0) ==
        doctest::Approx(-0.5).epsilon(1e-15));
  CHECK(constraint_values_consensual(pb, 2.0)(0) ==
        doctest::Approx(1.5).epsilon(1e-15));
  CHECK(constraint_gradient_consensual(pb, 2.0)(0) ==
        doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("exact oracle solves the desk instance") {
  const ConstrainedProblem pb = desk_problem();
  const KktPoint kkt = solve_kkt_oracle(pb);
  CHECK(kkt.theta_star == doctest::Approx(0.5).epsilon(1e-12));
  REQUIRE(kkt.lambda_star.size() == 1);
  CHECK(kkt.lambda_star(0) == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(kkt.m_a == 1);
  REQUIRE(kkt.active_set.size() == 1);
  CHECK(kkt.active_set[0].first == 0);
  CHECK(kkt.active_set[0].second == 0);
  CHECK(kkt.inactive_set.empty());
  // Every constraint active: no inactive margin exists, convention value.
  CHECK(kkt.h == doctest::Approx(1.0));
  CHECK(kkt.h_convention);

  const KktResidual res = kkt_residual(pb, kkt.theta_star, kkt.lambda_star);
  CHECK(res.max() <= 1e-9);
}

TEST_CASE("exact oracle classifies the inactive instance") {
  const ConstrainedProblem pb = desk_inactive();
  const KktPoint kkt = solve_kkt_oracle(pb);
  CHECK(kkt.theta_star == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(kkt.lambda_star(0) == doctest::Approx(0.0));
  CHECK(kkt.m_a == 0);
  CHECK(kkt.active_set.empty());
  REQUIRE(kkt.inactive_set.size() == 1);
  CHECK(kkt.h == doctest::Approx(4.0).epsilon(1e-12));
  CHECK_FALSE(kkt.h_convention);
}

TEST_CASE("kkt residual separates the four defect kinds") {
  const ConstrainedProblem pb = desk_problem();
  // theta = 0.7, lambda = 2: stationarity 6*0.7-6+2 = 0.2, primal violation
  // 0.7-0.5 = 0.2, complementarity |2 * 0.2| = 0.4.
  const KktResidual res = kkt_residual(pb, 0.7, vec({2.0}));
  CHECK(res.stationarity == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(res.primal == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(res.dual == doctest::Approx(0.0));
  CHECK(res.complementarity == doctest::Approx(0.4).epsilon(1e-12));
  CHECK(res.max() == doctest::Approx(0.4).epsilon(1e-12));

  const KktResidual neg = kkt_residual(pb, 0.0, vec({-1.0}));
  CHECK(neg.dual == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("infeasible constraint systems are rejected") {
  std::vector<QuadraticAgent> agents(1);
  agents[0].a = 2;
  agents[0].p = vec({1.0, -1.0});  // theta <= -1 and theta >= 1
  agents[0].q = vec({1.0, 1.0});
  const ConstrainedProblem pb = make_quadratic_problem(agents);
  CHECK_THROWS_AS(solve_kkt_oracle(pb), InfeasibleError);
  CHECK_THROWS_AS(solve_kkt_grid(pb), InfeasibleError);

  std::vector<QuadraticAgent> constant_bad(1);
  constant_bad[0].a = 1;
  constant_bad[0].p = vec({0.0});  // 0*theta + 1 <= 0 never holds
  constant_bad[0].q = vec({1.0});
  CHECK_THROWS_AS(solve_kkt_oracle(make_quadratic_problem(constant_bad)),
                  InfeasibleError);
}

TEST_CASE("duplicated active constraints are degenerate") {
  std::vector<QuadraticAgent> agents(3);
  agents[0].a = 2;
  agents[0].p = vec({1.0, 1.0});  // the same binding row twice
  agents[0].q = vec({-0.5, -0.5});
  agents[1].a = 2;
  agents[1].b = -2;
  agents[2].a = 2;
  agents[2].b = -4;
  const ConstrainedProblem pb = make_quadratic_problem(agents);
  CHECK_THROWS_AS(solve_kkt_oracle(pb), AssumptionViolation);
  try {
    solve_kkt_oracle(pb);
  } catch (const AssumptionViolation& e) {
    CHECK(e.assumption == 2);
  }
}

TEST_CASE("grid localization agrees with the exact oracle") {
  std::mt19937_64 rng(20240817);
  std::uniform_real_distribution<double> ua(0.5, 3.0);
  std::uniform_real_distribution<double> ub(-3.0, 3.0);
  std::uniform_real_distribution<double> up(0.3, 2.0);
  std::uniform_real_distribution<double> uslack(0.0, 3.0);
  std::uniform_int_distribution<int> un(1, 5);
  std::uniform_int_distribution<int> um(1, 3);
  std::uniform_int_distribution<int> usign(0, 1);

  for (int inst = 0; inst < 20; ++inst) {
    const int n = un(rng);
    const int m = um(rng);
    const double anchor = ub(rng) / 3.0;  // guaranteed-feasible point
    std::vector<QuadraticAgent> agents(n);
    for (auto& a : agents) {
      a.a = ua(rng);
      a.b = ub(rng);
    }
    for (int j = 0; j < m; ++j) {
      auto& a = agents[static_cast<std::size_t>(j) % agents.size()];
      const double p = (usign(rng) ? 1.0 : -1.0) * up(rng);
      const double q = -p * anchor - uslack(rng);
      VectorXd np(a.p.size() + 1), nq(a.q.size() + 1);
      np << a.p, p;
      nq << a.q, q;
      a.p = np;
      a.q = nq;
    }
    const ConstrainedProblem pb = make_quadratic_problem(agents);
    const KktPoint kkt = solve_kkt_oracle(pb);
    const auto [theta_g, lambda_g] = solve_kkt_grid(pb);
    CHECK(std::abs(theta_g - kkt.theta_star) <= 1e-5);
    REQUIRE(lambda_g.size() == kkt.lambda_star.size());
    CHECK((lambda_g - kkt.lambda_star).cwiseAbs().maxCoeff() <= 1e-4);
  }
}

TEST_CASE("classification tolerance splits rows as documented") {
  std::vector<QuadraticAgent> agents(2);
  agents[0].a = 2;
  agents[0].b = 0;
  agents[0].p = vec({1.0});
  agents[0].q = vec({-0.5});  // binds at theta* = 0.5
  agents[1].a = 2;
  agents[1].b = -4;
  agents[1].p = vec({1.0});
  agents[1].q = vec({-2.0});  // slack 1.5 at theta* = 0.5
  const ConstrainedProblem pb = make_quadratic_problem(agents);
  const KktPoint kkt = solve_kkt_oracle(pb);
  CHECK(kkt.theta_star == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(kkt.m_a == 1);
  REQUIRE(kkt.inactive_set.size() == 1);
  CHECK(kkt.h == doctest::Approx(1.5).epsilon(1e-12));
  CHECK_FALSE(kkt.h_convention);

  // A huge tolerance reclassifies the slack row as active.
  const Classification wide = classify_constraints(pb, kkt, 2.0);
  CHECK(wide.m_a == 2);
  CHECK(wide.h_convention);
}

TEST_CASE("generic construction wraps closures and checks mu_f") {
  AgentProblem a;
  a.cost_eval = [](double t) { return 0.5 * t * t; };
  a.cost_grad = [](double t) { return t; };
  a.constraint_eval = [](double t) { return VectorXd::Constant(1, t - 1.0); };
  a.constraint_grad = [](double) { return VectorXd::Constant(1, 1.0); };
  a.m_i = 1;
  const ConstrainedProblem pb = make_generic_problem({a}, 1.0);
  CHECK(pb.n == 1);
  CHECK(pb.m == 1);
  CHECK_FALSE(pb.family.has_value());
  CHECK(lagrangian_gradient(pb, vec({2.0}), vec({3.0}))(0) ==
        doctest::Approx(5.0).epsilon(1e-15));
  CHECK_THROWS_AS(solve_kkt_oracle(pb), DomainError);
  CHECK_THROWS_AS(make_generic_problem({a}, 0.0), DomainError);
}
