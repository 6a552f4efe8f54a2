#include "tapkit/bilev.hpp"

#include "tapkit/error.hpp"
#include "tapkit/paths.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>
#include <random>

namespace tapkit {

namespace {

void check_options(const BilevOptions& o) {
  if (o.rho < 2) throw DataError("rho must be an integer >= 2");
  if (o.T < 1) throw DataError("T must be >= 1");
  if (!(o.epsilon1 >= 0.0)) throw DataError("epsilon1 must be >= 0");
  if (!(o.epsilon2 > 0.0)) throw DataError("epsilon2 must be > 0");
}

void check_sizes(const Network& network, const DemandVector& g, const Vector& observed) {
  if (g.size() != network.od_count()) throw DataError("demand vector does not match OD pairs");
  if (observed.size() != static_cast<Eigen::Index>(network.link_count())) {
    throw DataError("observed flow vector does not match links");
  }
  if (g.size() && g.values().minCoeff() < 0.0) throw DataError("demand must be nonnegative");
}

}  // namespace

BilevPoint bilev_evaluate(const Network& network, const CongestionFactor& cf, const DemandVector& g,
                          const Vector& observed, const BilevOptions& options) {
  check_sizes(network, g, observed);
  BilevPoint p;
  if (options.inner == InnerSolver::Msa) {
    MsaOptions msa = options.msa;
    msa.track_decomposition = false;
    p.flow = solve_ue_msa(network, g, cf, msa).flow.x;
  } else {
    p.flow = solve_ue_fw(network, g, cf, options.fw).flow.x;
  }
  p.objective = (p.flow - observed).squaredNorm();
  return p;
}

double bilev_objective(const Network& network, const CongestionFactor& cf, const DemandVector& g,
                       const Vector& observed, const BilevOptions& options) {
  return bilev_evaluate(network, cf, g, observed, options).objective;
}

Vector bilev_gradient(const Network& network, const Vector& flow, const Vector& observed, const Vector& link_costs) {
  const Vector r = 2.0 * (flow - observed);
  const auto routes = shortest_routes(network, link_costs);
  Vector grad = Vector::Zero(static_cast<Eigen::Index>(network.od_count()));
  for (std::size_t i = 0; i < routes.size(); ++i) {
    for (LinkIndex a : routes[i].links) grad[static_cast<Eigen::Index>(i)] += r[static_cast<Eigen::Index>(a)];
  }
  return grad;
}

const char* to_string(BilevRun::Stop stop) {
  switch (stop) {
    case BilevRun::Stop::ZeroObjective:
      return "zero-objective";
    case BilevRun::Stop::RelativeDecrease:
      return "relative-decrease";
    case BilevRun::Stop::IterationCap:
      return "iteration-cap";
  }
  return "?";
}

BilevRun adjust_demand(const Network& network, const CongestionFactor& cf, const DemandVector& g0,
                       const Vector& observed, const BilevOptions& options) {
  check_options(options);
  check_sizes(network, g0, observed);
  BilevRun run;
  run.options = options;
  run.observed = observed;
  run.demand_trace.push_back(g0.values());

  BilevPoint cur = bilev_evaluate(network, cf, g0, observed, options);
  run.objective_trace.push_back(cur.objective);
  const double f0 = cur.objective;
  if (f0 == 0.0) {
    run.stop = BilevRun::Stop::ZeroObjective;
    return run;
  }
  const double g0_max = g0.size() ? g0.values().maxCoeff() : 0.0;
  const Vector t0 = network.free_flow_times();

  for (std::size_t l = 0; l < options.max_iterations; ++l) {
    const Vector& g = run.demand_trace.back();
    const Vector costs = options.congested_routes ? link_travel_times(network, cf, cur.flow) : t0;
    const Vector h = -bilev_gradient(network, cur.flow, observed, costs);

    Vector hbar = h;
    for (Eigen::Index i = 0; i < h.size(); ++i) {
      if (!(g[i] > options.epsilon1 || h[i] > 0.0)) hbar[i] = 0.0;
    }

    double theta_max = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < h.size(); ++i) {
      if (hbar[i] < 0.0) theta_max = std::min(theta_max, -g[i] / hbar[i]);
    }
    const bool fallback = !std::isfinite(theta_max);
    if (fallback) theta_max = g0_max / (1.0 + (hbar.size() ? hbar.cwiseAbs().maxCoeff() : 0.0));
    run.theta_max_trace.push_back(theta_max);
    run.theta_max_fallback.push_back(fallback);

    // Candidates in decreasing order; 0 is the current point.
    std::vector<double> thetas;
    for (int j = 0; j <= options.T; ++j) thetas.push_back(theta_max / std::pow(static_cast<double>(options.rho), j));
    std::vector<Vector> points;
    std::vector<std::future<BilevPoint>> jobs;
    for (double theta : thetas) {
      points.push_back((g + theta * hbar).cwiseMax(0.0));
      jobs.push_back(std::async(std::launch::async, [&network, &cf, &observed, &options, p = points.back()] {
        return bilev_evaluate(network, cf, DemandVector(p), observed, options);
      }));
    }
    std::vector<BilevPoint> evaluated;
    for (auto& job : jobs) evaluated.push_back(job.get());
    // Walk up from theta = 0 so ties go to the largest step.
    double best_theta = 0.0;
    Vector best_g = g;
    BilevPoint best = cur;
    for (std::size_t j = thetas.size(); j-- > 0;) {
      if (evaluated[j].objective <= best.objective) {
        best = evaluated[j];
        best_theta = thetas[j];
        best_g = points[j];
      }
    }

    const double decrease = (cur.objective - best.objective) / f0;
    run.step_trace.push_back(best_theta);
    run.demand_trace.push_back(best_g);
    run.objective_trace.push_back(best.objective);
    cur = std::move(best);
    if (cur.objective == 0.0) {
      run.stop = BilevRun::Stop::ZeroObjective;
      return run;
    }
    if (decrease < options.epsilon2) {
      run.stop = BilevRun::Stop::RelativeDecrease;
      return run;
    }
  }
  run.stop = BilevRun::Stop::IterationCap;
  return run;
}

std::vector<double> demand_distance_trace(const BilevRun& run, const DemandVector& truth) {
  const double norm = truth.values().norm();
  if (norm == 0.0) throw DataError("reference demand is zero");
  std::vector<double> out;
  for (const Vector& g : run.demand_trace) {
    if (g.size() != truth.values().size()) throw DataError("reference demand has the wrong length");
    out.push_back((g - truth.values()).norm() / norm);
  }
  return out;
}

DemandVector perturb_demand(const DemandVector& g, double lo, double hi, std::uint64_t seed) {
  if (!(lo >= 0.0 && lo <= hi)) throw DataError("perturbation range must satisfy 0 <= lo <= hi");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  Vector out = g.values();
  for (Eigen::Index i = 0; i < out.size(); ++i) out[i] *= u(rng);
  return DemandVector(out);
}

DemandVector embed_demand(const Network& sub, const DemandVector& g_sub, const Network& full) {
  if (g_sub.size() != sub.od_count()) throw DataError("subnetwork demand does not match its OD pairs");
  Vector out = Vector::Zero(static_cast<Eigen::Index>(full.od_count()));
  for (std::size_t w = 0; w < sub.od_count(); ++w) {
    const long o = sub.node_id(sub.od_pair(w).origin);
    const long d = sub.node_id(sub.od_pair(w).destination);
    const auto match = full.find_od(full.node_index(o), full.node_index(d));
    if (!match) {
      throw DataError("OD pair (" + std::to_string(o) + ", " + std::to_string(d) + ") is not in the full network");
    }
    out[static_cast<Eigen::Index>(*match)] = g_sub[w];
  }
  return DemandVector(out);
}

DemandVector average_demands(const std::vector<DemandVector>& demands) {
  if (demands.empty()) throw DataError("no demand vectors to average");
  Vector sum = Vector::Zero(static_cast<Eigen::Index>(demands[0].size()));
  for (const auto& d : demands) {
    if (d.size() != demands[0].size()) throw DataError("demand vectors differ in length");
    sum += d.values();
  }
  return DemandVector(sum / static_cast<double>(demands.size()));
}

}  // namespace tapkit
