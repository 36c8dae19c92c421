#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace consensuspd {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct WeightedEdge {
  int i = 0;
  int j = 0;
  double w = 0;
};

// What the weight-matrix validation saw; attached to the Network.
struct NetworkValidation {
  double lambda_max_raw = 0;  // largest eigenvalue before any rescale
  double lambda_max = 0;      // after rescale
  bool normalized = false;    // a 0.99/lambda_max rescale was applied
  double scale = 1.0;
  int zero_eigenvalues = 1;   // multiplicity of eigenvalue 0 (must be 1)
};

// Immutable communication structure: weight matrix K, dispersion basis S,
// the consensus-error state matrices A and B, and the Lyapunov certificate
// P with its extreme eigenvalues.
struct Network {
  int n = 0;
  MatrixXd K;  // n x n, symmetric, K*1 = 0, spectrum in [0,1)
  MatrixXd S;  // n x (n-1), S'1 = 0, S'S = I
  MatrixXd A;  // 2(n-1) square, Schur
  MatrixXd B;  // 2(n-1) x n
  MatrixXd P;  // solves A'PA - P = -I, symmetric positive definite
  double c_l = 1.0;  // smallest eigenvalue of P
  double c_u = 1.0;  // largest eigenvalue of P
  // n = 1 has an empty network part (A, B, P are 0-dimensional); c_l and c_u
  // are then set to the documented convention value 1.0.
  bool lyapunov_convention = false;
  double rho_A = 0;  // spectral radius of A
  std::vector<WeightedEdge> edges;  // effective (possibly rescaled) weights
  NetworkValidation validation;
};

// Assembles K from a symmetric edge list: K_ii = sum of incident weights,
// K_ij = -w for each edge. Rejects nonpositive weights, self-loops,
// conflicting duplicates, and disconnected graphs. If normalize is set and
// the largest eigenvalue is >= 1, all weights are rescaled by
// 0.99/lambda_max; otherwise such a spectrum is an error.
MatrixXd build_weight_matrix(int n, const std::vector<WeightedEdge>& edges,
                             bool normalize,
                             NetworkValidation* report = nullptr,
                             std::vector<WeightedEdge>* effective_edges = nullptr);

// Deterministic orthonormal basis of the consensus-orthogonal subspace via a
// Householder reflector mapping e1 to 1/sqrt(n); n = 1 yields the empty
// n x 0 matrix.
MatrixXd build_dispersion_basis(int n);

// chi = 1*chi_m + S*chi_perp with chi_m the mean and chi_perp = S' chi.
std::pair<double, VectorXd> decompose(const MatrixXd& S, const VectorXd& chi);
VectorXd recompose(const MatrixXd& S, double chi_m, const VectorXd& chi_perp);

// A = [[I - S'KS, -S'KS], [S'KS, I]], B = [S'; 0]; errors if the spectral
// radius of A is not < 1.
std::pair<MatrixXd, MatrixXd> consensus_matrices(const MatrixXd& K,
                                                 const MatrixXd& S);

struct LyapunovSolution {
  MatrixXd P;
  double c_l = 0;
  double c_u = 0;
  double residual = 0;  // max-abs entry of A'PA - P + I
};

// Direct Kronecker-vectorized solve of A'PA - P = -I (the state dimension is
// small, so a dense LU is exact and cheap).
LyapunovSolution solve_discrete_lyapunov(const MatrixXd& A);

Network make_network(int n, const std::vector<WeightedEdge>& edges,
                     bool normalize);
// preset is one of "path", "cycle", "complete"; every edge gets the uniform
// weight w.
Network make_network_preset(int n, const std::string& preset, double w,
                            bool normalize);
std::vector<WeightedEdge> preset_edges(int n, const std::string& preset,
                                       double w);

}  // namespace consensuspd
