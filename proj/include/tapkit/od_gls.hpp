#pragma once

#include "tapkit/network.hpp"
#include "tapkit/paths.hpp"
#include "tapkit/qp.hpp"

#include <cstddef>
#include <vector>

namespace tapkit {

struct SampleCovariance {
  Matrix S;
  /// lambda added to the diagonal; 0 when the raw matrix was positive definite.
  double regularization = 0.0;
};

/// S = 1/(K-1) sum_k (x_k - xbar)(x_k - xbar)'. When the smallest
/// eigenvalue is not positive, S + lambda I is returned with
/// lambda = 1e-6 trace(S) / |A| (1e-6 if the trace is zero).
/// Throws DataError for K < 2 or mismatched lengths.
SampleCovariance sample_covariance(const std::vector<Vector>& observations);

struct P1Result {
  Vector xi;  // route flows, stacked in RouteSet order
  QpResult qp;
};

/// min_{xi >= 0} K/2 xi'Q xi - b'xi with Q = A'S^-1 A and
/// b = sum_k A'S^-1 x_k, A the link-route incidence of `routes`.
/// Throws SolverError when the QP does not reach optimality.
P1Result solve_p1(const Matrix& S, const RouteSet& routes, const std::vector<Vector>& observations,
                  const QpOptions& options = {});

struct P2Options {
  /// Route probabilities start at a logit of the supplied route costs with
  /// this scale.
  double logit_scale = 1.0;
  std::size_t max_rounds = 100;
  /// Stop once a round lowers the residual by less than this fraction.
  double min_improvement = 1e-8;
  /// Final ||P'g - xi|| must be below tolerance * (1 + ||xi||).
  double tolerance = 1e-6;
};

struct P2Result {
  /// probabilities[i][j] = p_ir for the j-th route of OD pair i.
  std::vector<Vector> probabilities;
  Vector demand;
  double residual = 0.0;  // ||P'g - xi||
  std::size_t rounds = 0;
};

/// Factorizes xi = P'g with P row-stochastic on the enumerated routes and
/// g >= 0, taking h(P, g) = ||g||^2. Alternates a nonnegative least-squares
/// step in g with a row-wise simplex-constrained least-squares step in P.
/// `route_costs` (stacked like xi) seed the logit start. Throws DataError for
/// a negative or mis-sized xi and SolverError when the residual stays above
/// tolerance.
P2Result solve_p2(const Vector& xi, const RouteSet& routes, const Vector& route_costs, const P2Options& options = {});

/// Euclidean projection onto {p >= 0, sum p = total}.
Vector project_simplex(const Vector& v, double total = 1.0);

struct GlsEstimate {
  RouteSet routes;
  SampleCovariance covariance;
  P1Result p1;
  P2Result p2;
  DemandVector demand;
};

/// Routes are the k shortest simple routes at free-flow times; then
/// covariance, (P1) and (P2) in sequence. The network is treated as
/// uncongested.
GlsEstimate estimate_initial_demand(const Network& network, const std::vector<Vector>& observations,
                                    std::size_t k_routes, const QpOptions& qp = {}, const P2Options& p2 = {});

}  // namespace tapkit
