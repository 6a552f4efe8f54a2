#include "doctest.h"
#include "fixtures.hpp"

#include "tapkit/analytics.hpp"
#include "tapkit/error.hpp"
#include "tapkit/paths.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

using namespace tapkit;

namespace {

// Composite Simpson on [0, x].
template <class F>
double simpson(F f, double x, int n = 2000) {
  const double h = x / n;
  double acc = f(0.0) + f(x);
  for (int i = 1; i < n; ++i) acc += (i % 2 ? 4.0 : 2.0) * f(i * h);
  return acc * h / 3.0;
}

std::vector<std::size_t> top_links(const Vector& v, std::size_t k) {
  std::vector<std::size_t> idx(static_cast<std::size_t>(v.size()));
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return std::abs(v[static_cast<Eigen::Index>(a)]) > std::abs(v[static_cast<Eigen::Index>(b)]);
  });
  idx.resize(k);
  return idx;
}

}  // namespace

TEST_CASE("total latency") {
  const auto ln = fixtures::pigou();
  const CongestionFactor f = fixtures::linear();
  CHECK(total_latency(ln.network, f, Vector::Zero(3)) == 0.0);
  Vector ue(3);
  ue << 0.0, 1.0, 0.0;
  CHECK(total_latency(ln.network, f, ue) == doctest::Approx(1.0).epsilon(1e-8));
  Vector so(3);
  so << 0.5, 0.5, 0.0;
  CHECK(total_latency(ln.network, f, so) == doctest::Approx(0.75).epsilon(1e-8));
  CHECK_THROWS_AS(total_latency(ln.network, f, Vector::Constant(3, -1.0)), DataError);
  CHECK_THROWS_AS(total_latency(ln.network, f, Vector::Zero(2)), DataError);
}

TEST_CASE("price of anarchy") {
  SUBCASE("pigou: 4/3") {
    const auto ln = fixtures::pigou();
    const auto r = price_of_anarchy(ln.network, ln.demand, fixtures::linear());
    CHECK(r.ne_latency == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(r.so_latency == doctest::Approx(0.75).epsilon(1e-6));
    REQUIRE(r.poa);
    CHECK(std::abs(*r.poa - 4.0 / 3.0) <= 1e-6);
    CHECK(std::abs(r.ne_contributions.sum() - r.ne_latency) <= 1e-12);
  }

  SUBCASE("constant latencies: 1") {
    const auto ln = fixtures::sioux_falls();
    const auto r = price_of_anarchy(ln.network, ln.demand, CongestionFactor::constant());
    REQUIRE(r.poa);
    CHECK(std::abs(*r.poa - 1.0) <= 1e-6);
  }

  SUBCASE("sioux-falls BPR") {
    const auto ln = fixtures::sioux_falls();
    const auto r = price_of_anarchy(ln.network, ln.demand, CongestionFactor::bpr());
    REQUIRE(r.poa);
    CHECK(*r.poa >= 1.0 - 1e-6);
    // Frozen from the first verified run; L(x^ne) = 7480225.3 matches the
    // published best-known equilibrium total travel time for this network.
    CHECK(*r.poa == doctest::Approx(1.0397496669).epsilon(1e-6));
    CHECK(r.ne_latency == doctest::Approx(7480225.3).epsilon(1e-7));
  }

  SUBCASE("supplied equilibrium flows are used as given") {
    const auto ln = fixtures::pigou();
    Vector x(3);
    x << 0.25, 0.75, 0.0;
    const auto r = price_of_anarchy(ln.network, ln.demand, fixtures::linear(), x);
    CHECK(r.ne_supplied);
    CHECK(r.ne_latency == doctest::Approx(total_latency(ln.network, fixtures::linear(), x)));
  }

  SUBCASE("zero demand leaves the ratio undefined") {
    const auto ln = fixtures::pigou(0.0);
    const auto r = price_of_anarchy(ln.network, ln.demand, fixtures::linear());
    CHECK_FALSE(r.poa);
  }
}

TEST_CASE("social optimum and equilibrium against sampled feasible flows") {
  // L(SO) <= L(y) and Beckmann(UE) <= Beckmann(y) for feasible y built as
  // random mixtures of all-or-nothing loads.
  const auto ln = fixtures::sioux_falls();
  const auto cf = CongestionFactor::bpr();
  const auto r = price_of_anarchy(ln.network, ln.demand, cf);
  CHECK(r.so_latency <= r.ne_latency * (1.0 + 1e-9));
  const double ue_potential = beckmann_objective(ln.network, cf, r.ne_flow);
  const Vector t0 = ln.network.free_flow_times();
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.5, 2.0);
  for (int trial = 0; trial < 20; ++trial) {
    Vector y = Vector::Zero(t0.size());
    double weight = 0.0;
    for (int j = 0; j < 4; ++j) {
      const Vector c = t0.unaryExpr([&](double t) { return t * u(rng); });
      const double w = u(rng);
      y += w * all_or_nothing(ln.network, ln.demand, c, false).x;
      weight += w;
    }
    y /= weight;
    CHECK(r.so_latency <= total_latency(ln.network, cf, y) * (1.0 + 1e-9));
    CHECK(ue_potential <= beckmann_objective(ln.network, cf, y) * (1.0 + 1e-9));
  }
}

TEST_CASE("sensitivity: closed forms") {
  const auto ln = fixtures::sioux_falls();
  const auto cf = CongestionFactor::bpr();

  SUBCASE("agree with quadrature of the defining integrals") {
    const auto r = sensitivity(ln.network, ln.demand, cf);
    for (LinkIndex a = 0; a < ln.network.link_count(); a += 7) {
      const Link& l = ln.network.link(a);
      const double x = r.flow[static_cast<Eigen::Index>(a)];
      const double it0 = simpson([&](double s) { return cf.value(s / l.capacity); }, x);
      const double im = simpson(
          [&](double s) { return l.free_flow_time * cf.derivative(s / l.capacity) * (-s / (l.capacity * l.capacity)); },
          x);
      CHECK(r.dV_dt0[static_cast<Eigen::Index>(a)] == doctest::Approx(it0).epsilon(1e-10));
      CHECK(r.dV_dm[static_cast<Eigen::Index>(a)] == doctest::Approx(im).epsilon(1e-10));
    }
  }

  SUBCASE("signs and scaling") {
    const auto r = sensitivity(ln.network, ln.demand, cf);
    CHECK(r.dV_dt0.minCoeff() >= 0.0);
    CHECK(r.dV_dm.maxCoeff() <= 0.0);
    CHECK(r.scaled_dV_dt0.maxCoeff() == doctest::Approx(1.0));
    CHECK(r.scaled_dV_dt0.minCoeff() >= 0.0);
    CHECK(r.scaled_dV_dm.minCoeff() == doctest::Approx(-1.0));
    CHECK(r.scaled_dV_dm.maxCoeff() <= 0.0);
    CHECK(r.value == doctest::Approx(beckmann_objective(ln.network, cf, r.flow)));
  }

  SUBCASE("unused links have zero partials") {
    Vector x = Vector::Zero(static_cast<Eigen::Index>(ln.network.link_count()));
    x[3] = 1000.0;
    const auto r = sensitivity_at(ln.network, cf, x);
    CHECK(r.dV_dt0[0] == 0.0);
    CHECK(r.dV_dm[0] == 0.0);
    CHECK(r.dV_dt0[3] > 0.0);
  }

  SUBCASE("constant f: dV/dt0 = x and dV/dm = 0") {
    const auto r = sensitivity(ln.network, ln.demand, CongestionFactor::constant());
    CHECK((r.dV_dt0 - r.flow).cwiseAbs().maxCoeff() <= 1e-9 * r.flow.maxCoeff());
    CHECK(r.dV_dm.cwiseAbs().maxCoeff() == 0.0);
  }

  SUBCASE("top links by capacity sensitivity survive rescaling all t0") {
    const auto r = sensitivity(ln.network, ln.demand, cf);
    const Network slow = ln.network.with_link_parameters(3.0 * ln.network.free_flow_times(), ln.network.capacities());
    const auto s = sensitivity(slow, ln.demand, cf);
    CHECK(top_links(r.scaled_dV_dm, 5) == top_links(s.scaled_dV_dm, 5));
  }
}

TEST_CASE("sensitivity: envelope theorem against finite differences") {
  const auto ln = fixtures::sioux_falls();
  const auto cf = CongestionFactor::bpr();
  const FrankWolfeOptions fw{1e-10};
  const auto r = sensitivity(ln.network, ln.demand, cf, fw);
  const Vector t0 = ln.network.free_flow_times();
  const Vector m = ln.network.capacities();
  auto V = [&](const Vector& t, const Vector& c) {
    return solve_ue_fw(ln.network.with_link_parameters(t, c), ln.demand, cf, fw).objective;
  };
  for (Eigen::Index a : {0, 3, 15, 26, 47, 70}) {
    REQUIRE(r.flow[a] > 0.0);
    const double dt = 1e-3 * t0[a];
    Vector tp = t0, tm = t0;
    tp[a] += dt;
    tm[a] -= dt;
    CHECK((V(tp, m) - V(tm, m)) / (2.0 * dt) == doctest::Approx(r.dV_dt0[a]).epsilon(1e-2));
    const double dm = 1e-3 * m[a];
    Vector mp = m, mm = m;
    mp[a] += dm;
    mm[a] -= dm;
    CHECK((V(t0, mp) - V(t0, mm)) / (2.0 * dm) == doctest::Approx(r.dV_dm[a]).epsilon(1e-2));
  }
}
