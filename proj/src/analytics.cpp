#include "tapkit/analytics.hpp"

#include "tapkit/error.hpp"

#include <cmath>

namespace tapkit {

namespace {

void check_flow(const Network& network, const Vector& x) {
  if (x.size() != static_cast<Eigen::Index>(network.link_count())) throw DataError("flow vector does not match links");
  if (x.size() && x.minCoeff() < 0.0) throw DataError("flows must be nonnegative");
}

Vector contributions(const Network& network, const CongestionFactor& cf, const Vector& x) {
  return x.cwiseProduct(link_travel_times(network, cf, x));
}

Vector scaled(const Vector& v) {
  const double top = v.size() ? v.cwiseAbs().maxCoeff() : 0.0;
  return top > 0.0 ? Vector(v / top) : v;
}

}  // namespace

double total_latency(const Network& network, const CongestionFactor& cf, const Vector& x) {
  check_flow(network, x);
  return contributions(network, cf, x).sum();
}

PoaReport price_of_anarchy(const Network& network, const DemandVector& demand, const CongestionFactor& cf,
                           const std::optional<Vector>& ne_flow, const FrankWolfeOptions& fw) {
  PoaReport r;
  r.ne_supplied = ne_flow.has_value();
  if (ne_flow) {
    check_flow(network, *ne_flow);
    r.ne_flow = *ne_flow;
  } else {
    r.ne_flow = solve_ue_fw(network, demand, cf, fw).flow.x;
  }
  r.so_flow = solve_so(network, demand, cf, fw).flow.x;
  r.ne_contributions = contributions(network, cf, r.ne_flow);
  r.so_contributions = contributions(network, cf, r.so_flow);
  r.ne_latency = r.ne_contributions.sum();
  r.so_latency = r.so_contributions.sum();
  if (r.so_latency > 0.0) r.poa = r.ne_latency / r.so_latency;
  return r;
}

SensitivityReport sensitivity_at(const Network& network, const CongestionFactor& cf, const Vector& x) {
  check_flow(network, x);
  const auto m = static_cast<Eigen::Index>(network.link_count());
  const auto& beta = cf.beta();
  SensitivityReport r;
  r.flow = x;
  r.value = beckmann_objective(network, cf, x);
  r.dV_dt0 = Vector::Zero(m);
  r.dV_dm = Vector::Zero(m);
  for (Eigen::Index a = 0; a < m; ++a) {
    const Link& l = network.link(static_cast<LinkIndex>(a));
    const double xa = x[a];
    if (xa == 0.0) continue;
    const double s = xa / l.capacity;
    // sum_i beta_i x^(i+1) / ((i+1) m^i) = x sum_i beta_i s^i / (i+1)
    // -t0 sum_i i beta_i x^(i+1) / ((i+1) m^(i+1)) = -t0 s sum_i i beta_i s^i / (i+1)
    double dt0 = 0.0;
    double dm = 0.0;
    double si = 1.0;
    for (std::size_t i = 0; i < beta.size(); ++i) {
      const double term = beta[i] * si / static_cast<double>(i + 1);
      dt0 += term;
      dm += static_cast<double>(i) * term;
      si *= s;
    }
    r.dV_dt0[a] = xa * dt0;
    r.dV_dm[a] = -l.free_flow_time * s * dm;
  }
  r.scaled_dV_dt0 = scaled(r.dV_dt0);
  r.scaled_dV_dm = scaled(r.dV_dm);
  return r;
}

SensitivityReport sensitivity(const Network& network, const DemandVector& demand, const CongestionFactor& cf,
                              const FrankWolfeOptions& fw) {
  return sensitivity_at(network, cf, solve_ue_fw(network, demand, cf, fw).flow.x);
}

}  // namespace tapkit
