#pragma once

#include <stdexcept>
#include <string>

namespace consensuspd {

// Error taxonomy. Each failure mode the library promises to detect maps to a
// distinct type so the CLI can translate them into exit codes and messages.

// Inconsistent dimensions (vectors, per-agent blocks, config arrays).
struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Invalid values in otherwise well-shaped input (nonpositive weight, box with
// negative multiplier faces, gamma <= 0, ...).
struct DomainError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// One of the three standing assumptions fails: 1 = strong convexity /
// smoothness of the costs, 2 = regularity of the optimum (independent active
// constraint gradients), 3 = network weight structure (symmetric, connected,
// spectrum in [0,1)).
struct AssumptionViolation : std::runtime_error {
  AssumptionViolation(int which_assumption, const std::string& what)
      : std::runtime_error("assumption " + std::to_string(which_assumption) +
                           " violated: " + what),
        assumption(which_assumption) {}
  int assumption;
};

// Graph not connected (kernel of the weight matrix larger than the consensus
// line). A special case of AssumptionViolation(3).
struct ConnectivityError : AssumptionViolation {
  explicit ConnectivityError(const std::string& what)
      : AssumptionViolation(3, what) {}
};

// No feasible point exists for the constraint system.
struct InfeasibleError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// KKT solution not unique at tolerance (degenerate instance); a special case
// of AssumptionViolation(2).
struct DegenerateError : AssumptionViolation {
  explicit DegenerateError(const std::string& what)
      : AssumptionViolation(2, what) {}
};

// NaN/Inf produced by the iteration; carries the first bad iteration index.
struct NumericOverflowError : std::runtime_error {
  NumericOverflowError(long at_iteration, const std::string& what)
      : std::runtime_error("numeric overflow at iteration " +
                           std::to_string(at_iteration) + ": " + what),
        iteration(at_iteration) {}
  long iteration;
};

// An internal cross-check failed (e.g. constructed equilibrium not fixed).
struct ConsistencyError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Constants-ledger assembly hit a nonpositive or non-finite intermediate;
// the message names the constant.
struct LedgerError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Rate certificate requested outside the proven stepsize range.
struct CertificateRefused : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Config file missing/invalid; the message carries key diagnostics.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace consensuspd
