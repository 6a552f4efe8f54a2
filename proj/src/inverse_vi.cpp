#include "tapkit/inverse_vi.hpp"

#include "tapkit/error.hpp"
#include "tapkit/paths.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>
#include <numeric>

namespace tapkit {

namespace {

using Triplet = Eigen::Triplet<double>;

double binomial(int n, int k) {
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

// s^0..s^n
std::vector<double> powers(double s, int n) {
  std::vector<double> p(static_cast<std::size_t>(n) + 1, 1.0);
  for (int i = 1; i <= n; ++i) p[i] = p[i - 1] * s;
  return p;
}

void validate(const std::vector<Observation>& scenarios, const InverseVIOptions& options) {
  if (scenarios.empty()) throw DataError("inverse VI needs at least one observation");
  if (options.degree < 0) throw DataError("polynomial degree must be nonnegative");
  if (!(options.scale_c > 0.0)) throw DataError("kernel scale c must be positive");
  if (!(options.gamma > 0.0)) throw DataError("regularization weight gamma must be positive");
  for (std::size_t k = 0; k < scenarios.size(); ++k) {
    const Observation& o = scenarios[k];
    const std::string tag = "scenario " + std::to_string(k + 1);
    if (static_cast<std::size_t>(o.flow.size()) != o.network.link_count()) {
      throw DataError(tag + ": flow vector has " + std::to_string(o.flow.size()) + " entries for " +
                      std::to_string(o.network.link_count()) + " links");
    }
    if (o.demand.size() != o.network.od_count()) throw DataError(tag + ": demand does not match OD pairs");
    if (o.flow.size() && o.flow.minCoeff() < 0.0) throw DataError(tag + ": negative observed flow");
    if (o.demand.size() == 0 || o.demand.values().maxCoeff() <= 0.0) {
      throw DataError(tag + ": zero demand (degenerate scenario)");
    }
    // Slater: the free-flow all-or-nothing decomposition must exist.
    all_or_nothing(o.network, o.demand, o.network.free_flow_times(), false);
  }
}

// Groups of OD pairs sharing one potential vector, with the group origin.
struct Group {
  NodeIndex origin;
  std::vector<std::size_t> od;
};

std::vector<Group> make_groups(const Observation& o, DualGrouping grouping) {
  std::vector<Group> groups;
  const Network& net = o.network;
  if (grouping == DualGrouping::PerOdPair) {
    for (std::size_t w = 0; w < net.od_count(); ++w) groups.push_back({net.od_pair(w).origin, {w}});
    return groups;
  }
  std::vector<long> slot(net.node_count(), -1);
  for (std::size_t w = 0; w < net.od_count(); ++w) {
    const NodeIndex origin = net.od_pair(w).origin;
    if (slot[origin] < 0) {
      slot[origin] = static_cast<long>(groups.size());
      groups.push_back({origin, {}});
    }
    groups[static_cast<std::size_t>(slot[origin])].od.push_back(w);
  }
  return groups;
}

}  // namespace

InverseQp build_inverse_qp(const std::vector<Observation>& scenarios, const InverseVIOptions& options) {
  validate(scenarios, options);
  const int n = options.degree;
  const auto nb = static_cast<std::size_t>(n) + 1;
  const std::size_t K = scenarios.size();

  InverseQp out;
  out.beta_offset = 0;
  out.y_offset = nb;

  // Variable layout for the potentials.
  std::vector<std::vector<Group>> groups(K);
  std::size_t next = out.y_offset;
  out.y_index.resize(K);
  for (std::size_t k = 0; k < K; ++k) {
    groups[k] = make_groups(scenarios[k], options.grouping);
    const std::size_t nodes = scenarios[k].network.node_count();
    for (const Group& g : groups[k]) {
      std::vector<long> idx(nodes, -1);
      for (NodeIndex v = 0; v < nodes; ++v) {
        if (v != g.origin) idx[v] = static_cast<long>(next++);
      }
      out.y_index[k].push_back(std::move(idx));
    }
  }
  out.epsilon_offset = next;
  const std::size_t nvar = next + K;

  std::vector<Triplet> rows;
  std::size_t row = 0;

  // Dual feasibility: t0_a sum_i beta_i s_a^i - y_head + y_tail >= 0.
  for (std::size_t k = 0; k < K; ++k) {
    const Observation& o = scenarios[k];
    for (std::size_t g = 0; g < groups[k].size(); ++g) {
      const auto& idx = out.y_index[k][g];
      for (LinkIndex a = 0; a < o.network.link_count(); ++a) {
        const Link& l = o.network.link(a);
        const auto p = powers(o.flow[static_cast<Eigen::Index>(a)] / l.capacity, n);
        for (std::size_t i = 0; i < nb; ++i) rows.emplace_back(row, out.beta_offset + i, l.free_flow_time * p[i]);
        if (idx[l.head] >= 0) rows.emplace_back(row, idx[l.head], -1.0);
        if (idx[l.tail] >= 0) rows.emplace_back(row, idx[l.tail], 1.0);
        ++row;
      }
    }
  }
  out.dual_rows = row;

  // Monotonicity between rank-adjacent distinct normalized flows of all scenarios.
  std::vector<double> levels;
  for (const Observation& o : scenarios) {
    for (LinkIndex a = 0; a < o.network.link_count(); ++a) {
      levels.push_back(o.flow[static_cast<Eigen::Index>(a)] / o.network.link(a).capacity);
    }
  }
  std::sort(levels.begin(), levels.end());
  levels.erase(std::unique(levels.begin(), levels.end(),
                           [](double a, double b) { return b - a <= 1e-12 * std::max(1.0, std::abs(b)); }),
               levels.end());
  out.max_normalized_flow = levels.empty() ? 0.0 : levels.back();
  for (std::size_t j = 0; j + 1 < levels.size(); ++j) {
    const auto lo = powers(levels[j], n);
    const auto hi = powers(levels[j + 1], n);
    for (std::size_t i = 1; i < nb; ++i) rows.emplace_back(row, out.beta_offset + i, hi[i] - lo[i]);
    ++row;
  }
  out.monotonicity_rows = levels.empty() ? 0 : levels.size() - 1;

  // Gap: epsilon_k - [sum_a t0_a x_a f(s_a) - sum_w g_w y^w_dest] / Z_k >= 0.
  for (std::size_t k = 0; k < K; ++k) {
    const Observation& o = scenarios[k];
    std::vector<double> coef(nb, 0.0);
    double z = 0.0;
    for (LinkIndex a = 0; a < o.network.link_count(); ++a) {
      const Link& l = o.network.link(a);
      const double x = o.flow[static_cast<Eigen::Index>(a)];
      const auto p = powers(x / l.capacity, n);
      for (std::size_t i = 0; i < nb; ++i) coef[i] += l.free_flow_time * x * p[i];
      z += l.free_flow_time * x;
    }
    if (!(z > 0.0)) throw DataError("scenario " + std::to_string(k + 1) + ": observed flows are all zero");
    out.gap_normalizer.push_back(z);
    for (std::size_t i = 0; i < nb; ++i) rows.emplace_back(row, out.beta_offset + i, -coef[i] / z);
    for (std::size_t g = 0; g < groups[k].size(); ++g) {
      for (std::size_t w : groups[k][g].od) {
        const long idx = out.y_index[k][g][o.network.od_pair(w).destination];
        rows.emplace_back(row, idx, o.demand[w] / z);
      }
    }
    rows.emplace_back(row, out.epsilon_offset + k, 1.0 / std::sqrt(options.gamma));
    ++row;
  }
  out.gap_rows = K;

  QuadProgram& p = out.program;
  p = QuadProgram::unconstrained(nvar);
  p.A_in.resize(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(nvar));
  p.A_in.setFromTriplets(rows.begin(), rows.end());
  p.b_in = Vector::Zero(static_cast<Eigen::Index>(row));

  std::vector<Triplet> q;
  for (std::size_t i = 0; i < nb; ++i) {
    const double weight = binomial(n, static_cast<int>(i)) * std::pow(options.scale_c, n - static_cast<int>(i));
    q.emplace_back(out.beta_offset + i, out.beta_offset + i, 2.0 / weight);
  }
  // gamma ||eps||^2 = ||e||^2 with e = sqrt(gamma) eps.
  for (std::size_t k = 0; k < K; ++k) q.emplace_back(out.epsilon_offset + k, out.epsilon_offset + k, 2.0);
  p.Q.setFromTriplets(q.begin(), q.end());

  // beta_0 = 1.
  p.A_eq.resize(1, static_cast<Eigen::Index>(nvar));
  p.A_eq.insert(0, static_cast<Eigen::Index>(out.beta_offset)) = 1.0;
  p.b_eq = Vector::Ones(1);

  p.lower = Vector::Constant(static_cast<Eigen::Index>(nvar), -std::numeric_limits<double>::infinity());
  p.lower.tail(static_cast<Eigen::Index>(K)).setZero();
  return out;
}

CostEstimate estimate_cost(const std::vector<Observation>& scenarios, const InverseVIOptions& options) {
  const InverseQp iqp = build_inverse_qp(scenarios, options);
  CostEstimate est;
  est.qp = solve_qp(iqp.program, options.qp);
  require_optimal(est.qp, "inverse VI");
  est.dual_rows = iqp.dual_rows;
  est.monotonicity_rows = iqp.monotonicity_rows;
  est.warnings = est.qp.warnings;
  const Vector& z = est.qp.z;

  std::vector<double> beta(static_cast<std::size_t>(options.degree) + 1);
  for (std::size_t i = 0; i < beta.size(); ++i) beta[i] = z[static_cast<Eigen::Index>(iqp.beta_offset + i)];
  beta[0] = 1.0;  // enforced by the equality row; remove rounding
  est.factor = CongestionFactor(beta);
  est.max_normalized_flow = iqp.max_normalized_flow;
  est.min_derivative = est.factor.min_derivative(iqp.max_normalized_flow);
  if (est.min_derivative < 0.0) {
    est.warnings.push_back("estimated factor decreases between observed points (min sampled derivative " +
                           format_double(est.min_derivative) + ")");
  }

  for (std::size_t k = 0; k < scenarios.size(); ++k) {
    const Observation& o = scenarios[k];
    est.epsilon.push_back(z[static_cast<Eigen::Index>(iqp.epsilon_offset + k)] / std::sqrt(options.gamma));
    const Vector t = link_travel_times(o.network, est.factor, o.flow);
    std::vector<Vector> pots;
    const auto groups = make_groups(o, options.grouping);
    double dual_value = 0.0;
    for (std::size_t g = 0; g < groups.size(); ++g) {
      const auto& idx = iqp.y_index[k][g];
      Vector y = Vector::Zero(static_cast<Eigen::Index>(idx.size()));
      for (std::size_t v = 0; v < idx.size(); ++v) {
        if (idx[v] >= 0) y[static_cast<Eigen::Index>(v)] = z[idx[v]];
      }
      for (LinkIndex a = 0; a < o.network.link_count(); ++a) {
        const Link& l = o.network.link(a);
        const double viol = y[static_cast<Eigen::Index>(l.head)] - y[static_cast<Eigen::Index>(l.tail)] -
                            t[static_cast<Eigen::Index>(a)];
        est.max_dual_violation = std::max(est.max_dual_violation, viol);
      }
      for (std::size_t w : groups[g].od) dual_value += o.demand[w] * y[static_cast<Eigen::Index>(o.network.od_pair(w).destination)];
      pots.push_back(std::move(y));
    }
    est.raw_gap.push_back(o.flow.dot(t) - dual_value);
    est.potentials.push_back(std::move(pots));
  }
  return est;
}

double flow_reproduction_error(const Observation& scenario, const CongestionFactor& factor,
                               const FrankWolfeOptions& solver) {
  const auto rep = solve_ue_fw(scenario.network, scenario.demand, factor, solver);
  return (rep.flow.x - scenario.flow).norm() / scenario.flow.norm();
}

CvResult cross_validate(const std::vector<Observation>& scenarios, const std::vector<CvCandidate>& grid,
                        std::size_t folds, const InverseVIOptions& base, const FrankWolfeOptions& solver) {
  if (grid.empty()) throw DataError("cross-validation grid is empty");
  if (folds < 2) throw DataError("cross-validation needs at least 2 folds");
  if (scenarios.size() < folds) {
    throw DataError("cross-validation with " + std::to_string(folds) + " folds needs at least that many scenarios");
  }
  CvResult out;
  for (std::size_t k = 0; k < scenarios.size(); ++k) out.fold_of.push_back(k % folds);

  std::size_t best = 0;
  for (std::size_t c = 0; c < grid.size(); ++c) {
    CvScore s;
    s.candidate = grid[c];
    InverseVIOptions opt = base;
    opt.scale_c = grid[c].scale_c;
    opt.degree = grid[c].degree;
    opt.gamma = grid[c].gamma;
    // Each fold builds and solves its own program.
    std::vector<std::future<double>> jobs;
    for (std::size_t f = 0; f < folds; ++f) {
      jobs.push_back(std::async(std::launch::async, [&scenarios, &out, &opt, &solver, f] {
        std::vector<Observation> train;
        std::vector<const Observation*> held;
        for (std::size_t k = 0; k < scenarios.size(); ++k) {
          if (out.fold_of[k] == f) {
            held.push_back(&scenarios[k]);
          } else {
            train.push_back(scenarios[k]);
          }
        }
        const CostEstimate fit = estimate_cost(train, opt);
        double err = 0.0;
        for (const Observation* h : held) err += flow_reproduction_error(*h, fit.factor, solver);
        return err / static_cast<double>(held.size());
      }));
    }
    for (std::size_t f = 0; f < folds; ++f) {
      try {
        s.fold_scores.push_back(jobs[f].get());
      } catch (const Error& e) {
        if (s.failure.empty()) s.failure = "fold " + std::to_string(f + 1) + ": " + e.what();
      }
    }
    s.score = s.failure.empty()
                  ? std::accumulate(s.fold_scores.begin(), s.fold_scores.end(), 0.0) /
                        static_cast<double>(s.fold_scores.size())
                  : std::numeric_limits<double>::infinity();
    out.scores.push_back(s);
    if (s.score < out.scores[best].score) best = c;
  }
  if (!std::isfinite(out.scores[best].score)) {
    throw SolverError("cross-validation: every grid point failed (first: " + out.scores[0].failure + ")");
  }
  out.best = grid[best];
  InverseVIOptions opt = base;
  opt.scale_c = out.best.scale_c;
  opt.degree = out.best.degree;
  opt.gamma = out.best.gamma;
  out.fit = estimate_cost(scenarios, opt);
  return out;
}

}  // namespace tapkit
