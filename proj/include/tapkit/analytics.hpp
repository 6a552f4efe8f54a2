#pragma once

#include "tapkit/equilibrium.hpp"
#include "tapkit/latency.hpp"
#include "tapkit/network.hpp"

#include <optional>

namespace tapkit {

/// L(x) = sum_a x_a t_a(x_a). Throws DataError for a negative or mis-sized x.
double total_latency(const Network& network, const CongestionFactor& cf, const Vector& x);

struct PoaReport {
  Vector ne_flow;
  Vector so_flow;
  Vector ne_contributions;  // x_a t_a(x_a) at the equilibrium
  Vector so_contributions;
  double ne_latency = 0.0;
  double so_latency = 0.0;
  /// L(x^ne) / L(x*); empty when L(x*) = 0 (zero demand).
  std::optional<double> poa;
  bool ne_supplied = false;
};

/// Equilibrium flows are taken from `ne_flow` when given (e.g. observed
/// flows), otherwise computed by Frank-Wolfe. The social optimum is always
/// computed.
PoaReport price_of_anarchy(const Network& network, const DemandVector& demand, const CongestionFactor& cf,
                           const std::optional<Vector>& ne_flow = std::nullopt, const FrankWolfeOptions& fw = {1e-10});

/// Partials of V = min Beckmann potential with respect to t0_a and m_a.
struct SensitivityReport {
  Vector flow;          // x*, the equilibrium they are evaluated at
  double value = 0.0;   // V
  Vector dV_dt0;        // integral_0^x f(s/m) ds
  Vector dV_dm;         // -t0 integral_0^x f'(s/m) s/m^2 ds
  Vector scaled_dV_dt0; // divided by max |dV_dt0|, in [0, 1]
  Vector scaled_dV_dm;  // divided by max |dV_dm|, in [-1, 0]
};

/// Closed-form partials at a given equilibrium x*.
SensitivityReport sensitivity_at(const Network& network, const CongestionFactor& cf, const Vector& x);

/// Solves the TAP with Frank-Wolfe (default relative gap 1e-10), then
/// sensitivity_at.
SensitivityReport sensitivity(const Network& network, const DemandVector& demand, const CongestionFactor& cf,
                              const FrankWolfeOptions& fw = {1e-10});

}  // namespace tapkit
