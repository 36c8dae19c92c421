#include "consensuspd/network.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <utility>

#include "consensuspd/errors.hpp"

namespace consensuspd {

namespace {

constexpr double kZeroEigTol = 1e-10;

double spectral_radius(const MatrixXd& A) {
  if (A.rows() == 0) return 0.0;
  return Eigen::EigenSolver<MatrixXd>(A, /*computeEigenvectors=*/false)
      .eigenvalues()
      .cwiseAbs()
      .maxCoeff();
}

MatrixXd kron(const MatrixXd& X, const MatrixXd& Y) {
  MatrixXd out(X.rows() * Y.rows(), X.cols() * Y.cols());
  for (int i = 0; i < X.rows(); ++i)
    for (int j = 0; j < X.cols(); ++j)
      out.block(i * Y.rows(), j * Y.cols(), Y.rows(), Y.cols()) = X(i, j) * Y;
  return out;
}

}  // namespace

MatrixXd build_weight_matrix(int n, const std::vector<WeightedEdge>& edges,
                             bool normalize, NetworkValidation* report,
                             std::vector<WeightedEdge>* effective_edges) {
  if (n < 1) throw DomainError("agent count must be at least 1");

  // Collapse to undirected edges; a pair listed twice must carry the same
  // weight (bitwise), otherwise the input is asymmetric.
  std::map<std::pair<int, int>, double> uniq;
  for (const auto& e : edges) {
    if (e.i < 0 || e.i >= n || e.j < 0 || e.j >= n)
      throw ShapeError("edge (" + std::to_string(e.i) + ", " +
                       std::to_string(e.j) + ") out of range for n = " +
                       std::to_string(n));
    if (e.i == e.j)
      throw DomainError("self-loop at agent " + std::to_string(e.i));
    if (!(e.w > 0))
      throw DomainError("nonpositive weight on edge (" + std::to_string(e.i) +
                        ", " + std::to_string(e.j) + ")");
    const auto key = std::minmax(e.i, e.j);
    const auto [it, inserted] = uniq.emplace(key, e.w);
    if (!inserted && it->second != e.w)
      throw DomainError("asymmetric weights on edge (" +
                        std::to_string(key.first) + ", " +
                        std::to_string(key.second) + ")");
  }

  MatrixXd K = MatrixXd::Zero(n, n);
  for (const auto& [key, w] : uniq) {
    const auto [i, j] = key;
    K(i, i) += w;
    K(j, j) += w;
    K(i, j) -= w;
    K(j, i) -= w;
  }

  Eigen::SelfAdjointEigenSolver<MatrixXd> es(K);
  const VectorXd ev = es.eigenvalues();  // ascending
  int zeros = 0;
  for (int i = 0; i < n; ++i)
    if (ev(i) < kZeroEigTol) ++zeros;
  const double lambda_max_raw = ev(n - 1);

  NetworkValidation val;
  val.lambda_max_raw = lambda_max_raw;
  val.lambda_max = lambda_max_raw;
  val.zero_eigenvalues = zeros;
  if (zeros != 1)
    throw ConnectivityError("graph is disconnected: eigenvalue 0 of K has "
                            "multiplicity " + std::to_string(zeros));
  if (lambda_max_raw >= 1.0) {
    if (!normalize)
      throw AssumptionViolation(
          3, "largest eigenvalue of K is " + std::to_string(lambda_max_raw) +
                 " >= 1; enable normalization or reduce weights");
    val.scale = 0.99 / lambda_max_raw;
    val.normalized = true;
    K *= val.scale;
    val.lambda_max = lambda_max_raw * val.scale;
  }

  if (report) *report = val;
  if (effective_edges) {
    effective_edges->clear();
    for (const auto& [key, w] : uniq)
      effective_edges->push_back({key.first, key.second, w * val.scale});
  }
  return K;
}

MatrixXd build_dispersion_basis(int n) {
  if (n < 1) throw DomainError("agent count must be at least 1");
  if (n == 1) return MatrixXd(1, 0);
  VectorXd v = -VectorXd::Constant(n, 1.0 / std::sqrt(double(n)));
  v(0) += 1.0;
  const MatrixXd H =
      MatrixXd::Identity(n, n) - (2.0 / v.squaredNorm()) * (v * v.transpose());
  return H.rightCols(n - 1);
}

std::pair<double, VectorXd> decompose(const MatrixXd& S, const VectorXd& chi) {
  const int n = static_cast<int>(S.rows());
  if (chi.size() != n)
    throw ShapeError("vector has " + std::to_string(chi.size()) +
                     " entries, expected " + std::to_string(n));
  return {chi.mean(), S.transpose() * chi};
}

VectorXd recompose(const MatrixXd& S, double chi_m, const VectorXd& chi_perp) {
  const int n = static_cast<int>(S.rows());
  if (chi_perp.size() != S.cols())
    throw ShapeError("dispersion part has " + std::to_string(chi_perp.size()) +
                     " entries, expected " + std::to_string(S.cols()));
  return VectorXd::Constant(n, chi_m) + S * chi_perp;
}

std::pair<MatrixXd, MatrixXd> consensus_matrices(const MatrixXd& K,
                                                 const MatrixXd& S) {
  const int n = static_cast<int>(K.rows());
  if (K.cols() != n || S.rows() != n || S.cols() != n - 1)
    throw ShapeError("weight matrix / dispersion basis shapes disagree");
  const int d = n - 1;
  const MatrixXd L = S.transpose() * K * S;
  MatrixXd A(2 * d, 2 * d);
  A.topLeftCorner(d, d) = MatrixXd::Identity(d, d) - L;
  A.topRightCorner(d, d) = -L;
  A.bottomLeftCorner(d, d) = L;
  A.bottomRightCorner(d, d) = MatrixXd::Identity(d, d);
  MatrixXd B = MatrixXd::Zero(2 * d, n);
  B.topRows(d) = S.transpose();
  const double rho = spectral_radius(A);
  if (d > 0 && !(rho < 1.0))
    throw AssumptionViolation(
        3, "consensus error dynamics are not Schur (spectral radius " +
               std::to_string(rho) + ")");
  return {std::move(A), std::move(B)};
}

LyapunovSolution solve_discrete_lyapunov(const MatrixXd& A) {
  LyapunovSolution sol;
  const int d = static_cast<int>(A.rows());
  if (A.cols() != d) throw ShapeError("matrix must be square");
  if (d == 0) {
    sol.P = MatrixXd(0, 0);
    return sol;
  }
  // vec(A' P A) = (A' (x) A') vec(P); solve (A'(x)A' - I) vec(P) = -vec(I).
  const MatrixXd At = A.transpose();
  MatrixXd M = kron(At, At) - MatrixXd::Identity(d * d, d * d);
  Eigen::FullPivLU<MatrixXd> lu(M);
  if (!lu.isInvertible())
    throw AssumptionViolation(
        3, "discrete Lyapunov system is singular (matrix is not Schur)");
  const MatrixXd I = MatrixXd::Identity(d, d);
  const VectorXd vecP = lu.solve(-VectorXd(I.reshaped()));
  MatrixXd P = vecP.reshaped(d, d);
  P = 0.5 * (P + P.transpose().eval());
  sol.residual = (At * P * A - P + I).cwiseAbs().maxCoeff();
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(P);
  sol.c_l = es.eigenvalues()(0);
  sol.c_u = es.eigenvalues()(d - 1);
  if (!(sol.c_l > 0))
    throw ConsistencyError("Lyapunov solution is not positive definite");
  sol.P = std::move(P);
  return sol;
}

Network make_network(int n, const std::vector<WeightedEdge>& edges,
                     bool normalize) {
  Network net;
  net.n = n;
  net.K = build_weight_matrix(n, edges, normalize, &net.validation, &net.edges);
  net.S = build_dispersion_basis(n);
  if (n > 1) {
    const double ortho =
        std::max((net.S.transpose() * net.S -
                  MatrixXd::Identity(n - 1, n - 1)).cwiseAbs().maxCoeff(),
                 (net.S.transpose() * VectorXd::Ones(n)).cwiseAbs().maxCoeff());
    if (ortho > 1e-12)
      throw ConsistencyError("dispersion basis fails orthonormality check");
  }
  std::tie(net.A, net.B) = consensus_matrices(net.K, net.S);
  net.rho_A = spectral_radius(net.A);
  if (n == 1) {
    net.P = MatrixXd(0, 0);
    net.c_l = 1.0;
    net.c_u = 1.0;
    net.lyapunov_convention = true;
  } else {
    LyapunovSolution sol = solve_discrete_lyapunov(net.A);
    if (sol.residual > 1e-10)
      throw ConsistencyError("Lyapunov residual " +
                             std::to_string(sol.residual) + " exceeds 1e-10");
    net.P = std::move(sol.P);
    net.c_l = sol.c_l;
    net.c_u = sol.c_u;
  }
  return net;
}

std::vector<WeightedEdge> preset_edges(int n, const std::string& preset,
                                       double w) {
  if (n < 1) throw DomainError("agent count must be at least 1");
  std::vector<WeightedEdge> edges;
  if (preset == "path") {
    for (int i = 0; i + 1 < n; ++i) edges.push_back({i, i + 1, w});
  } else if (preset == "cycle") {
    if (n == 2) throw DomainError("cycle preset needs n = 1 or n >= 3");
    for (int i = 0; i + 1 < n; ++i) edges.push_back({i, i + 1, w});
    if (n > 1) edges.push_back({n - 1, 0, w});
  } else if (preset == "complete") {
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) edges.push_back({i, j, w});
  } else {
    throw ConfigError("unknown network preset '" + preset + "'");
  }
  return edges;
}

Network make_network_preset(int n, const std::string& preset, double w,
                            bool normalize) {
  return make_network(n, preset_edges(n, preset, w), normalize);
}

}  // namespace consensuspd
