#include "doctest.h"
#include "fixtures.hpp"

#include "tapkit/equilibrium.hpp"
#include "tapkit/error.hpp"
#include "tapkit/paths.hpp"

#include <cmath>

using namespace tapkit;

namespace {

double latency(const LoadedNetwork& ln, const CongestionFactor& cf, const Vector& x) {
  return x.dot(link_travel_times(ln.network, cf, x));
}

}  // namespace

TEST_CASE("msa on a single route converges in one step") {
  const auto ln = fixtures::chain3(7.0);
  const auto rep = solve_ue_msa(ln.network, ln.demand, CongestionFactor::bpr());
  // Iteration 2 sees RG = 0 because the AON target cannot change.
  CHECK(rep.converged);
  CHECK(rep.flow.x[0] == 7.0);
  CHECK(rep.flow.x[1] == 7.0);
  CHECK(rep.flow.x[2] == 0.0);
}

TEST_CASE("pigou user equilibrium") {
  const auto ln = fixtures::pigou();
  const auto cf = fixtures::linear();
  const auto msa = solve_ue_msa(ln.network, ln.demand, cf);
  // MSA drains the constant link at rate 1/l, so its error is O(1/l) in x
  // while RG decays like 1/l^2.
  CHECK(msa.converged);
  CHECK(msa.flow.x[0] < 2e-3);
  CHECK(std::abs(latency(ln, cf, msa.flow.x) - 1.0) < 2e-3);

  FrankWolfeOptions opt;
  opt.tolerance = 1e-10;
  const auto fw = solve_ue_fw(ln.network, ln.demand, cf, opt);
  CHECK(fw.converged);
  CHECK(std::abs(fw.flow.x[1] - 1.0) < 1e-6);
  CHECK(std::abs(msa.flow.x[1] - fw.flow.x[1]) < 1e-3);
  CHECK(std::abs(fw.total_latency - 1.0) < 1e-6);
}

TEST_CASE("pigou social optimum") {
  const auto ln = fixtures::pigou();
  FrankWolfeOptions opt;
  opt.tolerance = 1e-10;
  const auto so = solve_so(ln.network, ln.demand, fixtures::linear(), opt);
  CHECK(std::abs(so.flow.x[0] - 0.5) < 1e-6);
  CHECK(std::abs(so.flow.x[1] - 0.5) < 1e-6);
  CHECK(std::abs(so.total_latency - 0.75) < 1e-6);
  CHECK(so.objective == doctest::Approx(so.total_latency));
}

TEST_CASE("braess paradox") {
  const auto cf = fixtures::linear();
  FrankWolfeOptions opt;
  opt.tolerance = 1e-10;
  const auto without = fixtures::braess(false);
  const auto with = fixtures::braess(true);
  const auto a = solve_ue_fw(without.network, without.demand, cf, opt);
  const auto b = solve_ue_fw(with.network, with.demand, cf, opt);
  CHECK(a.total_latency / 4000.0 == doctest::Approx(65.0).epsilon(1e-6));
  CHECK(b.total_latency / 4000.0 == doctest::Approx(80.0).epsilon(1e-6));
  CHECK(b.total_latency > a.total_latency);
}

TEST_CASE("zero demand") {
  const auto ln = fixtures::sioux_falls();
  const auto zero = DemandVector::zeros(ln.network.od_count());
  const auto fw = solve_ue_fw(ln.network, zero, CongestionFactor::bpr());
  CHECK(fw.iterations == 0);
  CHECK(fw.flow.x.isZero(0.0));
  const auto so = solve_so(ln.network, zero, CongestionFactor::bpr());
  CHECK(so.total_latency == 0.0);
  const auto msa = solve_ue_msa(ln.network, zero, CongestionFactor::bpr());
  CHECK(msa.flow.x.isZero(0.0));
}

TEST_CASE("wardrop check on pigou") {
  const auto ln = fixtures::pigou();
  const auto cf = fixtures::linear();
  // All demand on the variable link: both routes cost 1.
  FlowState ue = all_or_nothing(ln.network, ln.demand, link_travel_times(ln.network, cf, Vector::Zero(3)));
  CHECK(ue.x[1] == 1.0);
  CHECK(wardrop_check(ln.network, ln.demand, cf, ue, 1e-6).pass);

  // Forced onto the constant link: used cost 1 against 1e-9 on the other.
  FlowState forced;
  forced.x = Vector::Zero(3);
  forced.x[0] = 1.0;
  forced.decomposition.emplace(1);
  (*forced.decomposition)[0].add({0}, 1.0);
  CHECK_FALSE(wardrop_check(ln.network, ln.demand, cf, forced, 1e-3).pass);

  FrankWolfeOptions opt;
  opt.tolerance = 1e-10;
  const auto so = solve_so(ln.network, ln.demand, cf, opt);
  const auto rep = wardrop_check(ln.network, ln.demand, cf, so.flow, 1e-3);
  CHECK_FALSE(rep.pass);
  CHECK(rep.per_od[0].max_used_cost == doctest::Approx(1.0));
  CHECK(rep.per_od[0].min_cost == doctest::Approx(0.5).epsilon(1e-6));
}

TEST_CASE("wardrop check needs a decomposition") {
  const auto ln = fixtures::pigou();
  FlowState bare;
  bare.x = Vector::Zero(3);
  CHECK_THROWS_AS(wardrop_check(ln.network, ln.demand, fixtures::linear(), bare, 1e-3), DataError);
}

TEST_CASE("sioux falls: frank-wolfe and msa agree") {
  const auto ln = fixtures::sioux_falls();
  const auto cf = CongestionFactor::bpr();
  FrankWolfeOptions opt;
  opt.tolerance = 1e-8;
  const auto fw = solve_ue_fw(ln.network, ln.demand, cf, opt);
  MESSAGE("fw iterations " << fw.iterations << " gap " << fw.final_gap << " in " << fw.wall_seconds << " s");
  CHECK(fw.converged);
  CHECK(fw.final_gap < 1e-8);
  CHECK(fw.final_gap >= 0.0);
  for (std::size_t i = 1; i < fw.objective_trace.size(); ++i) {
    CHECK(fw.objective_trace[i] <= fw.objective_trace[i - 1] * (1 + 1e-14));
  }
  CHECK(check_feasible(ln.network, ln.demand, fw.flow).feasible);
  const auto wardrop = wardrop_check(ln.network, ln.demand, cf, fw.flow, 1e-3);
  MESSAGE("max relative excess " << wardrop.max_relative_excess);
  CHECK(wardrop.pass);

  const auto msa = solve_ue_msa(ln.network, ln.demand, cf);
  MESSAGE("msa iterations " << msa.iterations << " RG " << msa.final_gap << " in " << msa.wall_seconds << " s");
  CHECK(check_feasible(ln.network, ln.demand, msa.flow).feasible);
  CHECK(msa.objective == doctest::Approx(fw.objective).epsilon(1e-3));
  CHECK((msa.converged || msa.iteration_cap_hit));

  const auto so = solve_so(ln.network, ln.demand, cf, opt);
  CHECK(so.total_latency <= fw.total_latency);
}

TEST_CASE("constant latencies: user equilibrium equals social optimum") {
  const auto ln = fixtures::sioux_falls();
  const auto cf = CongestionFactor::constant();
  const auto ue = solve_ue_fw(ln.network, ln.demand, cf);
  const auto so = solve_so(ln.network, ln.demand, cf);
  CHECK(std::abs(ue.total_latency - so.total_latency) <= 1e-9 * ue.total_latency);
}

TEST_CASE("msa iterates stay feasible") {
  const auto ln = fixtures::sioux_falls();
  for (std::size_t cap : {1, 2, 7, 30}) {
    MsaOptions opt;
    opt.max_iterations = cap;
    const auto rep = solve_ue_msa(ln.network, ln.demand, CongestionFactor::bpr(), opt);
    CHECK(rep.iterations == cap);
    CHECK(rep.iteration_cap_hit);
    CHECK(check_feasible(ln.network, ln.demand, rep.flow).feasible);
  }
}
