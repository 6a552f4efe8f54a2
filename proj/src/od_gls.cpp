#include "tapkit/od_gls.hpp"

#include "tapkit/error.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

namespace tapkit {

SampleCovariance sample_covariance(const std::vector<Vector>& observations) {
  if (observations.size() < 2) throw DataError("sample covariance needs at least 2 observations");
  const Eigen::Index m = observations[0].size();
  Matrix X(m, static_cast<Eigen::Index>(observations.size()));
  for (std::size_t k = 0; k < observations.size(); ++k) {
    if (observations[k].size() != m) throw DataError("observation " + std::to_string(k + 1) + " has the wrong length");
    X.col(static_cast<Eigen::Index>(k)) = observations[k];
  }
  const Vector mean = X.rowwise().mean();
  X.colwise() -= mean;
  SampleCovariance out;
  out.S = X * X.transpose() / static_cast<double>(observations.size() - 1);
  out.S = 0.5 * (out.S + out.S.transpose());

  const double min_eig = Eigen::SelfAdjointEigenSolver<Matrix>(out.S, Eigen::EigenvaluesOnly).eigenvalues()[0];
  if (min_eig <= 0.0) {
    const double trace = out.S.trace();
    out.regularization = trace > 0.0 ? 1e-6 * trace / static_cast<double>(m) : 1e-6;
    out.S.diagonal().array() += out.regularization;
  }
  return out;
}

P1Result solve_p1(const Matrix& S, const RouteSet& routes, const std::vector<Vector>& observations,
                  const QpOptions& options) {
  const Eigen::Index m = S.rows();
  if (S.cols() != m) throw DataError("covariance matrix is not square");
  const Matrix A = routes.incidence(static_cast<std::size_t>(m));
  const Eigen::Index r = A.cols();

  const Eigen::LLT<Matrix> llt(S);
  if (llt.info() != Eigen::Success) throw DataError("covariance matrix is not positive definite");
  // Q = A'S^-1 A = (L^-1 A)'(L^-1 A)
  const Matrix LA = llt.matrixL().solve(A);
  const Matrix Q = LA.transpose() * LA;

  Vector xsum = Vector::Zero(m);
  for (std::size_t k = 0; k < observations.size(); ++k) {
    if (observations[k].size() != m) throw DataError("observation " + std::to_string(k + 1) + " has the wrong length");
    xsum += observations[k];
  }
  const Vector b = A.transpose() * llt.solve(xsum);

  QuadProgram p = QuadProgram::unconstrained(static_cast<std::size_t>(r));
  p.Q = (static_cast<double>(observations.size()) * Q).sparseView();
  p.q = -b;
  p.lower = Vector::Zero(r);

  P1Result out;
  out.qp = solve_qp(p, options);
  require_optimal(out.qp, "route-flow least squares");
  out.xi = out.qp.z.cwiseMax(0.0);
  return out;
}

Vector project_simplex(const Vector& v, double total) {
  std::vector<double> u(v.data(), v.data() + v.size());
  std::sort(u.begin(), u.end(), std::greater<>());
  double cum = 0.0;
  double tau = 0.0;
  for (std::size_t j = 0; j < u.size(); ++j) {
    cum += u[j];
    const double t = (cum - total) / static_cast<double>(j + 1);
    if (u[j] - t > 0.0) tau = t;
  }
  return (v.array() - tau).cwiseMax(0.0);
}

P2Result solve_p2(const Vector& xi, const RouteSet& routes, const Vector& route_costs, const P2Options& options) {
  const auto n_routes = static_cast<Eigen::Index>(routes.route_count());
  if (xi.size() != n_routes) throw DataError("route flow vector has the wrong length");
  if (route_costs.size() != n_routes) throw DataError("route cost vector has the wrong length");
  if ((xi.array() < 0.0).any()) throw DataError("route flows must be nonnegative");
  for (std::size_t i = 0; i < routes.routes.size(); ++i) {
    if (routes.routes[i].empty()) throw DataError("OD pair " + std::to_string(i + 1) + " has no routes");
  }

  const std::size_t n = routes.routes.size();
  std::vector<Eigen::Index> first(n + 1, 0);
  for (std::size_t i = 0; i < n; ++i) first[i + 1] = first[i] + static_cast<Eigen::Index>(routes.routes[i].size());
  auto block = [&](const Vector& v, std::size_t i) { return v.segment(first[i], first[i + 1] - first[i]); };

  P2Result out;
  out.probabilities.resize(n);
  out.demand = Vector::Zero(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const Vector c = block(route_costs, i);
    Vector p = (-options.logit_scale * (c.array() - c.minCoeff())).exp();
    out.probabilities[i] = p / p.sum();
  }

  auto residual = [&] {
    double sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) sq += (out.probabilities[i] * out.demand[i] - block(xi, i)).squaredNorm();
    return std::sqrt(sq);
  };

  // Each route belongs to one OD pair, so the rows of P have disjoint
  // supports: both least-squares steps split into one small problem per OD.
  const double scale = 1.0 + xi.norm();
  double prev = std::numeric_limits<double>::infinity();
  for (out.rounds = 1; out.rounds <= options.max_rounds; ++out.rounds) {
    for (std::size_t i = 0; i < n; ++i) {
      const Vector& p = out.probabilities[i];
      out.demand[i] = std::max(0.0, p.dot(block(xi, i)) / p.squaredNorm());
    }
    for (std::size_t i = 0; i < n; ++i) {
      // With g_i = 0 any row is feasible; keep the current one.
      if (out.demand[i] > 0.0) out.probabilities[i] = project_simplex(block(xi, i) / out.demand[i]);
    }
    out.residual = residual();
    if (out.residual <= 1e-14 * scale || prev - out.residual < options.min_improvement * prev) break;
    prev = out.residual;
  }
  out.rounds = std::min(out.rounds, options.max_rounds);
  if (out.residual > options.tolerance * scale) {
    double worst = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      worst = std::max(worst, (out.probabilities[i] * out.demand[i] - block(xi, i)).cwiseAbs().maxCoeff());
    }
    throw SolverError("route-choice factorization did not converge: residual " + format_double(out.residual) +
                      ", max route residual " + format_double(worst));
  }
  return out;
}

GlsEstimate estimate_initial_demand(const Network& network, const std::vector<Vector>& observations,
                                    std::size_t k_routes, const QpOptions& qp, const P2Options& p2) {
  if (k_routes == 0) throw DataError("k_routes must be at least 1");
  for (std::size_t k = 0; k < observations.size(); ++k) {
    if (observations[k].size() != static_cast<Eigen::Index>(network.link_count())) {
      throw DataError("observation " + std::to_string(k + 1) + " has " + std::to_string(observations[k].size()) +
                      " links, network has " + std::to_string(network.link_count()));
    }
  }
  GlsEstimate out;
  const Vector t0 = network.free_flow_times();
  out.routes = enumerate_routes(network, k_routes, t0);
  out.covariance = sample_covariance(observations);
  out.p1 = solve_p1(out.covariance.S, out.routes, observations, qp);

  Vector costs(static_cast<Eigen::Index>(out.routes.route_count()));
  Eigen::Index col = 0;
  for (const auto& od_routes : out.routes.routes) {
    for (const Route& r : od_routes) costs[col++] = route_cost(r, t0);
  }
  out.p2 = solve_p2(out.p1.xi, out.routes, costs, p2);
  out.demand = DemandVector(out.p2.demand);
  return out;
}

}  // namespace tapkit
