#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "consensuspd/errors.hpp"
#include "consensuspd/network.hpp"

using namespace consensuspd;

TEST_CASE("path weight matrix, stencil and spectrum") {
  const Network net = make_network_preset(3, "path", 0.2, false);
  MatrixXd want(3, 3);
  want << 0.2, -0.2, 0.0, -0.2, 0.4, -0.2, 0.0, -0.2, 0.2;
  CHECK((net.K - want).cwiseAbs().maxCoeff() <= 1e-15);

  // Path Laplacian spectrum {0, 1, 3} scaled by the weight.
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(net.K);
  CHECK(es.eigenvalues()(0) == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(es.eigenvalues()(1) == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(es.eigenvalues()(2) == doctest::Approx(0.6).epsilon(1e-12));

  CHECK((net.K * VectorXd::Ones(3)).cwiseAbs().maxCoeff() <= 1e-15);
  CHECK((net.K - net.K.transpose()).cwiseAbs().maxCoeff() == 0.0);
  CHECK(net.validation.zero_eigenvalues == 1);
  CHECK_FALSE(net.validation.normalized);
}

TEST_CASE("spectrum at or above one is rejected unless normalization is on") {
  // Complete graph on 3 nodes, weight 0.5: eigenvalues {0, 1.5, 1.5}.
  CHECK_THROWS_AS(make_network_preset(3, "complete", 0.5, false),
                  AssumptionViolation);
  const Network net = make_network_preset(3, "complete", 0.5, true);
  CHECK(net.validation.normalized);
  CHECK(net.validation.lambda_max_raw == doctest::Approx(1.5).epsilon(1e-12));
  CHECK(net.validation.scale == doctest::Approx(0.99 / 1.5).epsilon(1e-12));
  CHECK(net.validation.lambda_max == doctest::Approx(0.99).epsilon(1e-12));
  // Effective edge weights carry the rescale.
  for (const auto& e : net.edges)
    CHECK(e.w == doctest::Approx(0.5 * 0.99 / 1.5).epsilon(1e-12));
}

TEST_CASE("edge-list construction rejects malformed graphs") {
  CHECK_THROWS_AS(build_weight_matrix(0, {}, false), DomainError);
  CHECK_THROWS_AS(build_weight_matrix(3, {{0, 3, 0.2}}, false), ShapeError);
  CHECK_THROWS_AS(build_weight_matrix(3, {{1, 1, 0.2}}, false), DomainError);
  CHECK_THROWS_AS(build_weight_matrix(3, {{0, 1, 0.0}, {1, 2, 0.2}}, false),
                  DomainError);
  CHECK_THROWS_AS(build_weight_matrix(3, {{0, 1, -0.1}, {1, 2, 0.2}}, false),
                  DomainError);
  // The same pair listed twice with different weights has no symmetric
  // reading.
  CHECK_THROWS_AS(
      build_weight_matrix(3, {{0, 1, 0.2}, {1, 0, 0.3}, {1, 2, 0.2}}, false),
      DomainError);
  // Duplicates that agree collapse to one edge.
  const MatrixXd K = build_weight_matrix(
      3, {{0, 1, 0.2}, {1, 0, 0.2}, {1, 2, 0.2}}, false);
  CHECK(K(0, 1) == doctest::Approx(-0.2));

  // 4 nodes, one isolated pair: kernel dimension 2.
  CHECK_THROWS_AS(build_weight_matrix(4, {{0, 1, 0.2}, {2, 3, 0.2}}, false),
                  ConnectivityError);
  try {
    build_weight_matrix(4, {{0, 1, 0.2}, {2, 3, 0.2}}, false);
  } catch (const AssumptionViolation& e) {
    CHECK(e.assumption == 3);
  }
}

TEST_CASE("preset edge lists") {
  CHECK(preset_edges(4, "path", 0.1).size() == 3);
  CHECK(preset_edges(4, "cycle", 0.1).size() == 4);
  CHECK(preset_edges(4, "complete", 0.1).size() == 6);
  CHECK(preset_edges(1, "path", 0.1).empty());
  CHECK(preset_edges(1, "cycle", 0.1).empty());
  CHECK_THROWS_AS(preset_edges(2, "cycle", 0.1), DomainError);
  CHECK_THROWS_AS(preset_edges(3, "star", 0.1), ConfigError);
  // The preset and the equivalent explicit edge list build the same matrix.
  const Network a = make_network_preset(3, "path", 0.2, false);
  const Network b = make_network(3, {{0, 1, 0.2}, {1, 2, 0.2}}, false);
  CHECK((a.K - b.K).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("dispersion basis is the documented Householder block") {
  const MatrixXd s1 = build_dispersion_basis(1);
  CHECK(s1.rows() == 1);
  CHECK(s1.cols() == 0);

  const MatrixXd s2 = build_dispersion_basis(2);
  REQUIRE(s2.rows() == 2);
  REQUIRE(s2.cols() == 1);
  CHECK(s2(0, 0) == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-15));
  CHECK(s2(1, 0) == doctest::Approx(-1.0 / std::sqrt(2.0)).epsilon(1e-15));

  for (int n : {2, 3, 4, 7}) {
    const MatrixXd S = build_dispersion_basis(n);
    CHECK((S.transpose() * S - MatrixXd::Identity(n - 1, n - 1))
              .cwiseAbs()
              .maxCoeff() <= 1e-14);
    CHECK((S.transpose() * VectorXd::Ones(n)).cwiseAbs().maxCoeff() <= 1e-14);
  }
}

TEST_CASE("decompose and recompose are mutually inverse") {
  const MatrixXd S = build_dispersion_basis(3);
  VectorXd chi(3);
  chi << 1, 2, 3;
  const auto [m, perp] = decompose(S, chi);
  CHECK(m == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(perp.squaredNorm() == doctest::Approx(2.0).epsilon(1e-14));
  CHECK((recompose(S, m, perp) - chi).cwiseAbs().maxCoeff() <= 1e-14);

  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  for (int k = 0; k < 100; ++k) {
    VectorXd v = VectorXd::NullaryExpr(5, [&](Eigen::Index) { return u(rng); });
    const MatrixXd S5 = build_dispersion_basis(5);
    const auto [vm, vp] = decompose(S5, v);
    CHECK((recompose(S5, vm, vp) - v).cwiseAbs().maxCoeff() <= 1e-13);
    // Norm split: |v|^2 = n*mean^2 + |perp|^2.
    CHECK(v.squaredNorm() ==
          doctest::Approx(5 * vm * vm + vp.squaredNorm()).epsilon(1e-12));
  }

  CHECK_THROWS_AS(decompose(S, VectorXd::Zero(4)), ShapeError);
}

TEST_CASE("scalar discrete-time Lyapunov equation solved exactly") {
  // A = 0.5: P - 0.25 P = 1 so P = 4/3.
  MatrixXd A(1, 1);
  A << 0.5;
  const LyapunovSolution sol = solve_discrete_lyapunov(A);
  CHECK(sol.P(0, 0) == doctest::Approx(4.0 / 3.0).epsilon(1e-14));
  CHECK(sol.c_l == doctest::Approx(4.0 / 3.0).epsilon(1e-14));
  CHECK(sol.c_u == doctest::Approx(4.0 / 3.0).epsilon(1e-14));
  CHECK(sol.residual <= 1e-14);

  MatrixXd bad(1, 1);
  bad << 1.0;  // not Schur; the equation has no solution
  CHECK_THROWS_AS(solve_discrete_lyapunov(bad), AssumptionViolation);
}

TEST_CASE("consensus-error matrices and the Lyapunov certificate") {
  const Network net = make_network_preset(3, "path", 0.2, false);
  REQUIRE(net.A.rows() == 4);
  REQUIRE(net.B.rows() == 4);
  REQUIRE(net.B.cols() == 3);
  CHECK(net.rho_A < 1.0);

  // Block structure: [[I - L, -L], [L, I]] with L = S'KS.
  const MatrixXd L = net.S.transpose() * net.K * net.S;
  CHECK((net.A.topLeftCorner(2, 2) - (MatrixXd::Identity(2, 2) - L))
            .cwiseAbs()
            .maxCoeff() <= 1e-15);
  CHECK((net.A.topRightCorner(2, 2) + L).cwiseAbs().maxCoeff() <= 1e-15);
  CHECK((net.A.bottomLeftCorner(2, 2) - L).cwiseAbs().maxCoeff() <= 1e-15);
  CHECK((net.A.bottomRightCorner(2, 2) - MatrixXd::Identity(2, 2))
            .cwiseAbs()
            .maxCoeff() <= 1e-15);
  CHECK((net.B.topRows(2) - net.S.transpose()).cwiseAbs().maxCoeff() == 0.0);
  CHECK(net.B.bottomRows(2).cwiseAbs().maxCoeff() == 0.0);

  // Defining equation, exactly as validated on construction.
  const MatrixXd resid = net.A.transpose() * net.P * net.A - net.P +
                         MatrixXd::Identity(4, 4);
  CHECK(resid.cwiseAbs().maxCoeff() <= 1e-10);

  // Independent series oracle: P = sum_k (A')^k A^k.
  MatrixXd series = MatrixXd::Zero(4, 4);
  MatrixXd term = MatrixXd::Identity(4, 4);
  for (int k = 0; k < 100000; ++k) {
    series += term.transpose() * term;
    term = net.A * term;
    if (term.cwiseAbs().maxCoeff() < 1e-13) break;
  }
  CHECK((series - net.P).cwiseAbs().maxCoeff() <= 1e-9);

  // Eigenvalue sandwich on random vectors.
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int k = 0; k < 100; ++k) {
    const VectorXd xi =
        VectorXd::NullaryExpr(4, [&](Eigen::Index) { return u(rng); });
    const double q = xi.dot(net.P * xi);
    CHECK(q >= net.c_l * xi.squaredNorm() - 1e-10);
    CHECK(q <= net.c_u * xi.squaredNorm() + 1e-10);
  }
  CHECK(net.c_l > 0.0);
  CHECK(net.c_l <= net.c_u);
  CHECK_FALSE(net.lyapunov_convention);
}

TEST_CASE("single agent network is the documented degenerate shape") {
  const Network net = make_network_preset(1, "path", 0.2, false);
  CHECK(net.n == 1);
  CHECK(net.K.rows() == 1);
  CHECK(net.K(0, 0) == 0.0);
  CHECK(net.S.cols() == 0);
  CHECK(net.A.rows() == 0);
  CHECK(net.B.rows() == 0);
  CHECK(net.P.rows() == 0);
  CHECK(net.c_l == 1.0);
  CHECK(net.c_u == 1.0);
  CHECK(net.lyapunov_convention);
  CHECK(net.rho_A == 0.0);
}

TEST_CASE("larger presets keep the certificate machinery consistent") {
  for (int n : {2, 4, 6}) {
    for (const char* preset : {"path", "complete"}) {
      const Network net = make_network_preset(n, preset, 0.15, false);
      const int d = 2 * (n - 1);
      const MatrixXd resid = net.A.transpose() * net.P * net.A - net.P +
                             MatrixXd::Identity(d, d);
      CHECK(resid.cwiseAbs().maxCoeff() <= 1e-10);
      CHECK(net.rho_A < 1.0);
      CHECK(net.c_l > 0.0);
    }
  }
}
