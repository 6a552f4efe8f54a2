#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include <cstddef>
#include <string>
#include <vector>

namespace tapkit {

using SparseMatrix = Eigen::SparseMatrix<double>;

/// minimize 1/2 z'Qz + q'z  subject to  A_eq z = b_eq,  A_in z >= b_in,
/// lower <= z <= upper. Empty bound vectors mean unbounded; individual
/// bounds may be +-infinity.
struct QuadProgram {
  SparseMatrix Q;
  Eigen::VectorXd q;
  SparseMatrix A_eq;
  Eigen::VectorXd b_eq;
  SparseMatrix A_in;
  Eigen::VectorXd b_in;
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;

  /// Empty program in n variables (Q = 0, q = 0, no constraints).
  static QuadProgram unconstrained(std::size_t n);
  std::size_t variable_count() const { return static_cast<std::size_t>(q.size()); }
  double objective(const Eigen::VectorXd& z) const;
};

enum class QpStatus { Optimal, Infeasible, Unbounded, MaxIterations };

std::string to_string(QpStatus status);

/// Residuals of the KKT system at the returned point, in the units of the
/// original (unscaled) program.
struct KktResiduals {
  double stationarity = 0.0;     // ||Qz + q - A_eq'y - A_in'l - mu_lo + mu_up||_inf
  double primal_equality = 0.0;  // ||A_eq z - b_eq||_inf
  double primal_inequality = 0.0;  // largest violation of A_in z >= b_in and bounds
  double dual_feasibility = 0.0;   // largest negative inequality or bound multiplier
  double complementarity = 0.0;    // max_i |multiplier_i * slack_i|
  double duality_gap = 0.0;        // sum_i |multiplier_i * slack_i|; not part of max()

  double max() const;
};

struct QpOptions {
  /// KKT residuals must fall below tolerance * (1 + ||q||_inf) and the
  /// duality gap below tolerance * (1 + |objective|).
  double tolerance = 1e-9;
  std::size_t max_iterations = 200;
};

struct QpResult {
  QpStatus status = QpStatus::MaxIterations;
  Eigen::VectorXd z;
  Eigen::VectorXd y_eq;      // multipliers of A_eq z = b_eq
  Eigen::VectorXd y_in;      // multipliers of A_in z >= b_in, nonnegative
  Eigen::VectorXd y_lower;   // multipliers of z >= lower, nonnegative (0 where unbounded)
  Eigen::VectorXd y_upper;   // multipliers of z <= upper, nonnegative
  double objective = 0.0;
  std::size_t iterations = 0;
  KktResiduals residuals;
  std::vector<std::string> warnings;

  bool optimal() const { return status == QpStatus::Optimal; }
};

/// Primal-dual interior-point method with Mehrotra predictor-corrector steps.
/// Each Newton system is the regularized quasidefinite augmented system
/// [Q + G'WG + rho I, A'; A, -delta I], factored with a sparse LDL'.
/// Throws DataError on inconsistent dimensions or a Q that is not
/// positive semidefinite.
QpResult solve_qp(const QuadProgram& program, const QpOptions& options = {});

/// KKT residuals of an arbitrary primal-dual point.
KktResiduals kkt_residuals(const QuadProgram& program, const QpResult& point);

/// Throws SolverError unless the result is optimal.
void require_optimal(const QpResult& result, const std::string& context);

}  // namespace tapkit
