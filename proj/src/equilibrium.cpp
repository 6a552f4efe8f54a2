#include "tapkit/equilibrium.hpp"

#include "tapkit/error.hpp"
#include "tapkit/paths.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

namespace tapkit {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

// Link cost model shared by the user-equilibrium and social-optimum runs:
// costs are the gradient of the objective being minimized.
class CostModel {
 public:
  CostModel(const Network& network, const CongestionFactor& cf, bool social)
      : network_(network), cf_(cf), social_(social) {}

  double cost(LinkIndex a, double x) const {
    const Link& l = network_.link(a);
    return social_ ? marginal_cost(cf_, l.free_flow_time, l.capacity, x)
                   : travel_time(cf_, l.free_flow_time, l.capacity, x);
  }

  Vector costs(const Vector& x) const {
    return social_ ? link_marginal_costs(network_, cf_, x) : link_travel_times(network_, cf_, x);
  }

  double objective(const Vector& x) const {
    double v = 0.0;
    for (Eigen::Index a = 0; a < x.size(); ++a) {
      const Link& l = network_.link(static_cast<LinkIndex>(a));
      v += social_ ? x[a] * travel_time(cf_, l.free_flow_time, l.capacity, x[a])
                   : beckmann_term(cf_, l.free_flow_time, l.capacity, x[a]);
    }
    return v;
  }

  // d cost / dx; for the social optimum, t0/m [2 f'(s) + s f''(s)].
  double cost_derivative(LinkIndex a, double x) const {
    const Link& l = network_.link(a);
    const double s = x / l.capacity;
    if (!social_) return l.free_flow_time / l.capacity * cf_.derivative(s);
    const auto& beta = cf_.beta();
    double second = 0.0;
    for (std::size_t i = beta.size(); i-- > 2;) second = second * s + static_cast<double>(i * (i - 1)) * beta[i];
    return l.free_flow_time / l.capacity * (2.0 * cf_.derivative(s) + s * second);
  }

  // Directional derivative of the objective at x + alpha d.
  double slope(const Vector& x, const Vector& d, double alpha) const {
    double g = 0.0;
    for (Eigen::Index a = 0; a < x.size(); ++a) {
      if (d[a] == 0.0) continue;
      g += cost(static_cast<LinkIndex>(a), std::max(0.0, x[a] + alpha * d[a])) * d[a];
    }
    return g;
  }

  // Exact minimizer of the objective over [0, 1] along d, by bisection on the
  // (monotone) slope down to a 1e-12 bracket.
  double line_search(const Vector& x, const Vector& d) const {
    if (slope(x, d, 0.0) >= 0.0) return 0.0;
    if (slope(x, d, 1.0) <= 0.0) return 1.0;
    double lo = 0.0;
    double hi = 1.0;
    while (hi - lo > 1e-12) {
      const double mid = 0.5 * (lo + hi);
      if (slope(x, d, mid) > 0.0) {
        hi = mid;
      } else {
        lo = mid;
      }
    }
    return 0.5 * (lo + hi);
  }

  bool social() const { return social_; }

 private:
  const Network& network_;
  const CongestionFactor& cf_;
  bool social_;
};

Vector flows_from_routes(const std::vector<OdRouteFlows>& decomposition, std::size_t link_count) {
  Vector x = Vector::Zero(static_cast<Eigen::Index>(link_count));
  for (const OdRouteFlows& od : decomposition) {
    for (std::size_t r = 0; r < od.routes.size(); ++r) {
      for (LinkIndex a : od.routes[r]) x[static_cast<Eigen::Index>(a)] += od.flows[r];
    }
  }
  return x;
}

double total_latency_of(const Network& network, const CongestionFactor& cf, const Vector& x) {
  const Vector t = link_travel_times(network, cf, x);
  return x.dot(t);
}

void check_inputs(const Network& network, const DemandVector& demand, double tolerance) {
  if (demand.size() != network.od_count()) throw DataError("demand vector does not match OD pairs");
  if (!(tolerance > 0.0)) throw DataError("solver tolerance must be positive");
}

// One Gauss-Seidel sweep of pairwise route swaps: for every OD pair and
// every used route dearer than the current shortest one, shift flow to the
// shortest route until the two costs meet (exact 1-D minimization, link
// flows updated in place). Emptied routes are dropped.
void pairwise_sweep(const Network& network, const CostModel& model, std::vector<OdRouteFlows>& routes,
                    Vector& x) {
  std::vector<std::vector<std::size_t>> by_dest(network.node_count());
  for (std::size_t w = 0; w < network.od_count(); ++w) by_dest[network.od_pair(w).destination].push_back(w);
  std::vector<int> mark(network.link_count(), 0);
  Route plus;
  Route minus;

  for (NodeIndex dest = 0; dest < network.node_count(); ++dest) {
    if (by_dest[dest].empty()) continue;
    const DestinationTree tree = destination_tree(network, model.costs(x), dest);
    for (std::size_t w : by_dest[dest]) {
      OdRouteFlows& od = routes[w];
      const Route shortest = route_from(network, tree, network.od_pair(w).origin).links;
      for (std::size_t r = 0; r < od.routes.size(); ++r) {
        if (od.flows[r] <= 0.0 || od.routes[r] == shortest) continue;
        // Symmetric difference of the two routes; shared links cancel.
        for (LinkIndex a : shortest) mark[a] += 1;
        for (LinkIndex a : od.routes[r]) mark[a] -= 1;
        plus.clear();
        minus.clear();
        for (LinkIndex a : shortest) {
          if (mark[a] > 0) plus.push_back(a);
        }
        for (LinkIndex a : od.routes[r]) {
          if (mark[a] < 0) minus.push_back(a);
        }
        for (LinkIndex a : shortest) mark[a] = 0;
        for (LinkIndex a : od.routes[r]) mark[a] = 0;

        // g(delta) = cost(shortest) - cost(route r) after moving delta; increasing.
        auto g = [&](double delta) {
          double v = 0.0;
          for (LinkIndex a : plus) v += model.cost(a, x[static_cast<Eigen::Index>(a)] + delta);
          for (LinkIndex a : minus) v -= model.cost(a, std::max(0.0, x[static_cast<Eigen::Index>(a)] - delta));
          return v;
        };
        auto dg = [&](double delta) {
          double v = 0.0;
          for (LinkIndex a : plus) v += model.cost_derivative(a, x[static_cast<Eigen::Index>(a)] + delta);
          for (LinkIndex a : minus) {
            v += model.cost_derivative(a, std::max(0.0, x[static_cast<Eigen::Index>(a)] - delta));
          }
          return v;
        };
        const double f = od.flows[r];
        if (g(0.0) >= 0.0) continue;
        double delta = f;
        if (g(f) > 0.0) {
          // Safeguarded Newton on [lo, hi] with g(lo) < 0 < g(hi).
          double lo = 0.0;
          double hi = f;
          delta = 0.0;
          for (int k = 0; k < 100 && hi - lo > 1e-15 * f; ++k) {
            const double gv = g(delta);
            if (gv == 0.0) break;
            if (gv < 0.0) {
              lo = delta;
            } else {
              hi = delta;
            }
            const double slope = dg(delta);
            double next = slope > 0.0 ? delta - gv / slope : 0.5 * (lo + hi);
            if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
            if (next == delta) break;
            delta = next;
          }
        }
        if (delta <= 0.0) continue;
        for (LinkIndex a : plus) x[static_cast<Eigen::Index>(a)] += delta;
        for (LinkIndex a : minus) {
          double& xa = x[static_cast<Eigen::Index>(a)];
          xa = std::max(0.0, xa - delta);
        }
        od.flows[r] = (delta == f) ? 0.0 : f - delta;
        od.add(shortest, delta);
      }
      OdRouteFlows kept;
      for (std::size_t r = 0; r < od.routes.size(); ++r) {
        if (od.flows[r] > 0.0) {
          kept.routes.push_back(std::move(od.routes[r]));
          kept.flows.push_back(od.flows[r]);
        }
      }
      od = std::move(kept);
    }
  }
  // Re-aggregate so x and the decomposition agree to rounding.
  x = flows_from_routes(routes, network.link_count());
}

SolverReport frank_wolfe(const Network& network, const DemandVector& demand, const CongestionFactor& cf,
                         const FrankWolfeOptions& options, bool social) {
  check_inputs(network, demand, options.tolerance);
  const auto start = Clock::now();
  const CostModel model(network, cf, social);
  SolverReport rep;
  rep.algorithm = social ? "so-fw" : "fw";
  const auto m = static_cast<Eigen::Index>(network.link_count());

  if (demand.values().size() == 0 || demand.values().maxCoeff() == 0.0) {
    rep.flow.x = Vector::Zero(m);
    rep.flow.decomposition.emplace(network.od_count());
    rep.converged = true;
    rep.wall_seconds = seconds_since(start);
    return rep;
  }

  // x^0: all-or-nothing at zero-flow costs.
  FlowState state = all_or_nothing(network, demand, model.costs(Vector::Zero(m)), true);
  std::vector<OdRouteFlows> routes = std::move(*state.decomposition);
  Vector x = std::move(state.x);

  for (std::size_t it = 0;; ++it) {
    const Vector c = model.costs(x);
    FlowState target = all_or_nothing(network, demand, c, true);
    const double cx = c.dot(x);
    const double gap = cx - c.dot(target.x);
    rep.final_gap = cx > 0.0 ? std::max(gap, 0.0) / cx : 0.0;
    rep.gap_trace.push_back(rep.final_gap);
    rep.objective_trace.push_back(model.objective(x));
    rep.iterations = it;
    if (rep.final_gap < options.tolerance) {
      rep.converged = true;
      break;
    }
    if (it == options.max_iterations) {
      rep.iteration_cap_hit = true;
      break;
    }

    const Vector d = target.x - x;
    const double alpha = model.line_search(x, d);
    if (alpha > 0.0) {
      for (std::size_t w = 0; w < routes.size(); ++w) {
        for (double& f : routes[w].flows) f *= (1.0 - alpha);
        const OdRouteFlows& aon = (*target.decomposition)[w];
        for (std::size_t r = 0; r < aon.routes.size(); ++r) routes[w].add(aon.routes[r], alpha * aon.flows[r]);
      }
      x = flows_from_routes(routes, network.link_count());
    }
    if (options.pairwise_steps) pairwise_sweep(network, model, routes, x);
  }

  rep.flow.x = x;
  rep.flow.decomposition = std::move(routes);
  rep.objective = rep.objective_trace.back();
  rep.total_latency = total_latency_of(network, cf, x);
  rep.wall_seconds = seconds_since(start);
  return rep;
}

}  // namespace

SolverReport solve_ue_msa(const Network& network, const DemandVector& demand, const CongestionFactor& cf,
                          const MsaOptions& options) {
  check_inputs(network, demand, options.tolerance);
  const auto start = Clock::now();
  SolverReport rep;
  rep.algorithm = "msa";
  const auto m = static_cast<Eigen::Index>(network.link_count());
  Vector x = Vector::Zero(m);
  std::vector<OdRouteFlows> routes(options.track_decomposition ? network.od_count() : 0);

  if (demand.values().size() == 0 || demand.values().maxCoeff() == 0.0) {
    rep.flow.x = x;
    if (options.track_decomposition) rep.flow.decomposition = std::move(routes);
    rep.converged = true;
    rep.wall_seconds = seconds_since(start);
    return rep;
  }

  for (std::size_t l = 1; l <= options.max_iterations; ++l) {
    const Vector t = (l == 1 && options.initial_costs.size() == m) ? options.initial_costs
                                                                    : link_travel_times(network, cf, x);
    FlowState y = all_or_nothing(network, demand, t, options.track_decomposition);
    const double lambda = 1.0 / static_cast<double>(l);
    const Vector step = lambda * (y.x - x);
    x += step;
    if (options.track_decomposition) {
      for (std::size_t w = 0; w < routes.size(); ++w) {
        for (double& f : routes[w].flows) f *= (1.0 - lambda);
        const OdRouteFlows& aon = (*y.decomposition)[w];
        for (std::size_t r = 0; r < aon.routes.size(); ++r) routes[w].add(aon.routes[r], lambda * aon.flows[r]);
      }
    }
    const double norm = x.norm();
    rep.final_gap = norm > 0.0 ? step.norm() / norm : 0.0;
    rep.gap_trace.push_back(rep.final_gap);
    rep.objective_trace.push_back(beckmann_objective(network, cf, x));
    rep.iterations = l;
    if (rep.final_gap < options.tolerance) {
      rep.converged = true;
      break;
    }
  }
  rep.iteration_cap_hit = !rep.converged;
  rep.flow.x = x;
  if (options.track_decomposition) rep.flow.decomposition = std::move(routes);
  rep.objective = rep.objective_trace.back();
  rep.total_latency = total_latency_of(network, cf, x);
  rep.wall_seconds = seconds_since(start);
  return rep;
}

SolverReport solve_ue_fw(const Network& network, const DemandVector& demand, const CongestionFactor& cf,
                         const FrankWolfeOptions& options) {
  return frank_wolfe(network, demand, cf, options, false);
}

SolverReport solve_so(const Network& network, const DemandVector& demand, const CongestionFactor& cf,
                      const FrankWolfeOptions& options) {
  return frank_wolfe(network, demand, cf, options, true);
}

WardropReport wardrop_check(const Network& network, const DemandVector& demand, const CongestionFactor& cf,
                            const FlowState& flow, double tol) {
  if (!flow.decomposition) throw DataError("wardrop_check needs a per-OD route decomposition");
  if (flow.decomposition->size() != network.od_count() || demand.size() != network.od_count()) {
    throw DataError("decomposition does not match the OD pair list");
  }
  const Vector t = link_travel_times(network, cf, flow.x);
  const auto shortest = shortest_routes(network, t);
  WardropReport rep;
  rep.per_od.resize(network.od_count());
  for (std::size_t w = 0; w < network.od_count(); ++w) {
    WardropOdResult& r = rep.per_od[w];
    r.min_cost = shortest[w].cost;
    r.max_used_cost = r.min_cost;
    const OdRouteFlows& od = (*flow.decomposition)[w];
    for (std::size_t k = 0; k < od.routes.size(); ++k) {
      if (od.flows[k] > tol) r.max_used_cost = std::max(r.max_used_cost, route_cost(od.routes[k], t));
    }
    const double excess = r.max_used_cost - r.min_cost;
    r.pass = excess <= tol * r.min_cost;
    rep.max_relative_excess = std::max(rep.max_relative_excess, excess / r.min_cost);
    rep.pass = rep.pass && r.pass;
  }
  return rep;
}

}  // namespace tapkit
