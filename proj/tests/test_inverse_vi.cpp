#include "doctest.h"
#include "fixtures.hpp"

#include "tapkit/error.hpp"
#include "tapkit/inverse_vi.hpp"

#include <algorithm>
#include <cmath>
#include <set>

using namespace tapkit;

namespace {

const std::vector<Observation>& sioux_bpr() {
  static const auto obs = fixtures::equilibrium_scenarios(fixtures::sioux_falls(), CongestionFactor::bpr(), {0.8, 1.0, 1.2});
  return obs;
}

double sup_error(const CongestionFactor& fit, const CongestionFactor& truth, double smax) {
  double err = 0.0;
  double top = 0.0;
  for (int i = 0; i <= 2000; ++i) {
    const double s = smax * i / 2000.0;
    err = std::max(err, std::abs(fit.value(s) - truth.value(s)));
    top = std::max(top, std::abs(truth.value(s)));
  }
  return err / top;
}

std::vector<double> sorted_levels(const std::vector<Observation>& obs) {
  std::vector<double> v;
  for (const auto& o : obs) {
    for (LinkIndex a = 0; a < o.network.link_count(); ++a) v.push_back(o.flow[static_cast<Eigen::Index>(a)] / o.network.link(a).capacity);
  }
  std::sort(v.begin(), v.end());
  return v;
}

// Bellman-Ford labels from one origin.
Vector distances(const Network& net, const Vector& t, NodeIndex origin) {
  Vector d = Vector::Constant(static_cast<Eigen::Index>(net.node_count()), 1e300);
  d[static_cast<Eigen::Index>(origin)] = 0.0;
  for (std::size_t pass = 0; pass < net.node_count(); ++pass) {
    for (LinkIndex a = 0; a < net.link_count(); ++a) {
      const Link& l = net.link(a);
      d[static_cast<Eigen::Index>(l.head)] =
          std::min(d[static_cast<Eigen::Index>(l.head)], d[static_cast<Eigen::Index>(l.tail)] + t[static_cast<Eigen::Index>(a)]);
    }
  }
  return d;
}

Network scale_times(const Network& net, double s) {
  std::vector<Link> links(net.links().begin(), net.links().end());
  for (auto& l : links) l.free_flow_time *= s;
  return Network(std::vector<long>(net.node_ids().begin(), net.node_ids().end()), links,
                 std::vector<OdPair>(net.od_pairs().begin(), net.od_pairs().end()));
}

Observation single_link() {
  Link go;
  go.tail = 0;
  go.head = 1;
  go.free_flow_time = 2.0;
  go.capacity = 10.0;
  Link back = go;
  back.tail = 1;
  back.head = 0;
  back.free_flow_time = 1.0;
  Network net({1, 2}, {go, back}, {OdPair{0, 1}});
  Vector x(2);
  x << 5.0, 0.0;
  return {net, DemandVector(Vector::Constant(1, 5.0)), x};
}

}  // namespace

TEST_CASE("single link, K = 1, n = 1: the route cost equals the dual price") {
  // By hand: beta_1 = 0 is feasible with y_2 = t0 = 2 and a zero gap, and it
  // minimizes beta_1^2, so the optimum is (beta_1, y_2, eps) = (0, 2, 0).
  InverseVIOptions opt;
  opt.degree = 1;
  const auto iqp = build_inverse_qp({single_link()}, opt);
  CHECK(iqp.program.variable_count() == 4);  // beta_0, beta_1, y_2, e_1
  CHECK(iqp.dual_rows == 2);
  CHECK(iqp.monotonicity_rows == 1);
  CHECK(iqp.gap_rows == 1);

  const auto est = estimate_cost({single_link()}, opt);
  CHECK(est.factor.beta()[0] == 1.0);
  CHECK(std::abs(est.factor.beta()[1]) < 1e-8);
  CHECK(est.epsilon[0] < 1e-8);
  CHECK(est.potentials[0][0][1] == doctest::Approx(2.0).epsilon(1e-8));
  CHECK(std::abs(est.raw_gap[0]) < 1e-7);
}

TEST_CASE("constraint counts") {
  const auto& obs = sioux_bpr();
  const std::vector<Observation> one{obs[1]};
  InverseVIOptions opt;
  opt.grouping = DualGrouping::PerOdPair;
  const auto iqp = build_inverse_qp(one, opt);
  CHECK(iqp.dual_rows == 528 * 76);

  // Distinct normalized flows, merged at the builder's 1e-12 relative tolerance.
  auto levels = sorted_levels(one);
  levels.erase(std::unique(levels.begin(), levels.end(),
                           [](double a, double b) { return b - a <= 1e-12 * std::max(1.0, std::abs(b)); }),
               levels.end());
  CHECK(iqp.monotonicity_rows == levels.size() - 1);
  CHECK(iqp.gap_rows == 1);

  opt.grouping = DualGrouping::PerOrigin;
  const auto grouped = build_inverse_qp(one, opt);
  CHECK(grouped.dual_rows == 24 * 76);
  CHECK(grouped.monotonicity_rows == iqp.monotonicity_rows);

  const auto three = build_inverse_qp(obs, opt);
  CHECK(three.dual_rows == 3 * 24 * 76);
  CHECK(three.gap_rows == 3);
}

TEST_CASE("recovers the BPR factor from three synthetic equilibria") {
  const auto& obs = sioux_bpr();
  const auto truth = CongestionFactor::bpr();
  const auto est = estimate_cost(obs);
  const double smax = est.max_normalized_flow;
  CHECK(smax > 2.0);
  CHECK(sup_error(est.factor, truth, smax) <= 0.05);
  CHECK(flow_reproduction_error(obs[1], est.factor) <= 0.02);

  SUBCASE("structural invariants") {
    CHECK(est.factor.value(0.0) == 1.0);
    const auto levels = sorted_levels(obs);
    for (std::size_t j = 1; j < levels.size(); ++j) {
      CHECK(est.factor.value(levels[j]) >= est.factor.value(levels[j - 1]) - 1e-9);
    }
    CHECK(est.max_dual_violation <= 1e-7);
    for (std::size_t k = 0; k < obs.size(); ++k) {
      CHECK(est.epsilon[k] >= 0.0);
      double z = 0.0;
      for (LinkIndex a = 0; a < obs[k].network.link_count(); ++a) {
        z += obs[k].network.link(a).free_flow_time * obs[k].flow[static_cast<Eigen::Index>(a)];
      }
      // Complementarity: with epsilon_k > 0 the gap row is binding.
      if (est.epsilon[k] > 1e-8) CHECK(std::abs(est.raw_gap[k] / z - est.epsilon[k]) <= 1e-7);
    }
  }
}

TEST_CASE("the optimum is no worse than the true coefficients") {
  // Oracle: the generating factor with exact shortest-distance potentials is
  // feasible, with epsilon equal to the forward solver's relative gap.
  const auto& obs = sioux_bpr();
  const auto truth = CongestionFactor::bpr();
  InverseVIOptions opt;
  const auto iqp = build_inverse_qp(obs, opt);
  const auto& p = iqp.program;
  Vector z = Vector::Zero(static_cast<Eigen::Index>(p.variable_count()));
  for (std::size_t i = 0; i < truth.beta().size(); ++i) z[static_cast<Eigen::Index>(i)] = truth.beta()[i];
  for (std::size_t k = 0; k < obs.size(); ++k) {
    const Vector t = link_travel_times(obs[k].network, truth, obs[k].flow);
    for (const auto& idx : iqp.y_index[k]) {
      const auto origin = static_cast<NodeIndex>(std::find(idx.begin(), idx.end(), -1) - idx.begin());
      const Vector d = distances(obs[k].network, t, origin);
      for (std::size_t v = 0; v < idx.size(); ++v) {
        if (idx[v] >= 0) z[idx[v]] = d[static_cast<Eigen::Index>(v)];
      }
    }
  }
  const std::size_t first_gap = iqp.dual_rows + iqp.monotonicity_rows;
  for (std::size_t k = 0; k < obs.size(); ++k) {
    const double need = -(p.A_in * z - p.b_in)[static_cast<Eigen::Index>(first_gap + k)];
    z[static_cast<Eigen::Index>(iqp.epsilon_offset + k)] = std::max(0.0, need) * std::sqrt(opt.gamma);
  }
  const Vector slack = p.A_in * z - p.b_in;
  CHECK(slack.minCoeff() >= -1e-9);
  for (std::size_t k = 0; k < obs.size(); ++k) CHECK(z[static_cast<Eigen::Index>(iqp.epsilon_offset + k)] < 1e-8);

  const auto result = solve_qp(p);
  REQUIRE(result.optimal());
  CHECK(result.objective <= p.objective(z) + 1e-9);
}

// Individual monomial coefficients are poorly determined (an interior point
// with duality gap g pins beta_i only to about sqrt(g / weight_i)), so fits
// are compared as functions on the observed range.
TEST_CASE("constant latencies give f = 1 and zero gaps") {
  const auto obs = fixtures::equilibrium_scenarios(fixtures::sioux_falls(), CongestionFactor::constant(), {0.5, 1.0});
  const auto est = estimate_cost(obs);
  CHECK(sup_error(est.factor, CongestionFactor::constant(), est.max_normalized_flow) < 1e-3);
  for (double e : est.epsilon) CHECK(e < 1e-4);
}

TEST_CASE("shrinking gamma flattens the estimate") {
  const auto& obs = sioux_bpr();
  InverseVIOptions loose;
  loose.gamma = 0.01;
  const auto flat = estimate_cost(obs, loose);
  const auto fit = estimate_cost(obs);
  const double smax = fit.max_normalized_flow;
  CHECK(flat.factor.value(smax) < fit.factor.value(smax));
  for (std::size_t k = 0; k < obs.size(); ++k) CHECK(flat.epsilon[k] > fit.epsilon[k]);
  CHECK(sup_error(flat.factor, CongestionFactor::bpr(), smax) > sup_error(fit.factor, CongestionFactor::bpr(), smax));
}

TEST_CASE("both dual groupings reach the same optimum") {
  const auto ema = load_network(fixtures::data_path("ema8_net.tntp"), fixtures::data_path("ema8_trips.tntp"));
  const auto obs = fixtures::equilibrium_scenarios(ema, CongestionFactor::bpr(), {0.9, 1.1});
  InverseVIOptions opt;
  opt.grouping = DualGrouping::PerOdPair;
  const auto pairs = estimate_cost(obs, opt);
  opt.grouping = DualGrouping::PerOrigin;
  const auto origins = estimate_cost(obs, opt);
  CHECK(pairs.dual_rows == 56 * 24 * 2);
  CHECK(origins.dual_rows == 8 * 24 * 2);
  CHECK(sup_error(pairs.factor, origins.factor, origins.max_normalized_flow) < 5e-3);
  for (std::size_t k = 0; k < obs.size(); ++k) CHECK(std::abs(pairs.epsilon[k] - origins.epsilon[k]) < 1e-4);
}

TEST_CASE("scaling all free-flow times leaves beta unchanged and scales the potentials") {
  const auto& obs = sioux_bpr();
  std::vector<Observation> scaled;
  for (const auto& o : obs) scaled.push_back({scale_times(o.network, 3.0), o.demand, o.flow});
  const auto a = estimate_cost(obs);
  const auto b = estimate_cost(scaled);
  CHECK(sup_error(b.factor, a.factor, a.max_normalized_flow) < 5e-3);
  // Potentials are unique only at destinations that carry demand; compare
  // the demand-weighted dual value sum_w g_w y_dest = x't(x) - raw gap.
  for (std::size_t k = 0; k < obs.size(); ++k) {
    const double da = obs[k].flow.dot(link_travel_times(obs[k].network, a.factor, obs[k].flow)) - a.raw_gap[k];
    const double db = scaled[k].flow.dot(link_travel_times(scaled[k].network, b.factor, scaled[k].flow)) - b.raw_gap[k];
    CHECK(db == doctest::Approx(3.0 * da).epsilon(5e-3));
    CHECK(std::abs(b.epsilon[k] - a.epsilon[k]) < 1e-4);
  }
}

TEST_CASE("invalid observations are rejected") {
  auto o = single_link();
  CHECK_THROWS_AS(estimate_cost({}), DataError);

  auto neg = o;
  neg.flow[1] = -1.0;
  CHECK_THROWS_AS(estimate_cost({neg}), DataError);

  auto zero = o;
  zero.demand = DemandVector::zeros(1);
  CHECK_THROWS_AS(estimate_cost({zero}), DataError);

  auto short_flow = o;
  short_flow.flow = Vector::Zero(1);
  CHECK_THROWS_AS(estimate_cost({short_flow}), DataError);

  InverseVIOptions opt;
  opt.gamma = 0.0;
  CHECK_THROWS_AS(estimate_cost({o}, opt), DataError);
}

// Both demand extremes sit in two different folds, so every training set
// spans the full range. A degree-8 fit trained on a narrower range turns
// negative just past it and the held-out forward solve is rejected.
const std::vector<Observation>& sioux_cv() {
  static const auto obs =
      fixtures::equilibrium_scenarios(fixtures::sioux_falls(), CongestionFactor::bpr(), {0.7, 0.7, 1.3, 1.3, 1.0, 0.85});
  return obs;
}

TEST_CASE("cross-validation") {
  SUBCASE("K = 3: each scenario is held out exactly once") {
    const auto cv = cross_validate(sioux_bpr(), {{1.5, 4, 1.0}}, 3);
    REQUIRE(cv.fold_of.size() == 3);
    CHECK(std::set<std::size_t>(cv.fold_of.begin(), cv.fold_of.end()).size() == 3);
    CHECK(cv.scores[0].fold_scores.size() == 3);
    CHECK(std::isfinite(cv.scores[0].score));
  }

  SUBCASE("a one-point grid returns that point") {
    const auto cv = cross_validate(sioux_cv(), {{2.0, 4, 0.5}}, 3);
    CHECK(cv.best.scale_c == 2.0);
    CHECK(cv.best.degree == 4);
    CHECK(cv.best.gamma == 0.5);
    CHECK(cv.fit.factor.degree() == 4);
  }

  SUBCASE("the selected point beats the worst one") {
    const std::vector<CvCandidate> grid{{1.5, 8, 0.01}, {1.5, 8, 0.1}, {1.5, 8, 1.0}};
    const auto cv = cross_validate(sioux_cv(), grid, 3);
    double worst = 0.0;
    for (const auto& s : cv.scores) worst = std::max(worst, s.score);
    double chosen = 0.0;
    for (const auto& s : cv.scores) {
      if (s.candidate.gamma == cv.best.gamma) chosen = s.score;
    }
    CHECK(chosen < worst);
    CHECK(cv.best.gamma == 1.0);
    // Small gamma lets the fit bend down past the data; those folds fail.
    CHECK(std::isinf(cv.scores[0].score));
    CHECK_FALSE(cv.scores[0].failure.empty());
  }

  CHECK_THROWS_AS(cross_validate({sioux_bpr()[0], sioux_bpr()[1]}, {{1.5, 8, 1.0}}, 3), DataError);
  CHECK_THROWS_AS(cross_validate(sioux_bpr(), {}, 3), DataError);
}
