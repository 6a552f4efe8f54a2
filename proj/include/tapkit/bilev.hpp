#pragma once

#include "tapkit/equilibrium.hpp"
#include "tapkit/latency.hpp"
#include "tapkit/network.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

namespace tapkit {

enum class InnerSolver { Msa, FrankWolfe };

struct BilevOptions {
  int rho = 2;              // step sizes theta_max / rho^j
  int T = 10;               // j = 0..T
  double epsilon1 = 0.0;    // demands at or below this only move up
  double epsilon2 = 1e-20;  // stop when (F_l - F_{l+1}) / F_0 < epsilon2
  /// Outer iterations before giving up on the epsilon2 rule.
  std::size_t max_iterations = 100;
  InnerSolver inner = InnerSolver::Msa;
  MsaOptions msa;
  FrankWolfeOptions fw;
  /// Shortest routes for the Jacobian at congested times t(x(g)); false
  /// uses free-flow times.
  bool congested_routes = true;
};

/// x(g) and F(g) = sum_a (x_a(g) - xt_a)^2.
struct BilevPoint {
  Vector flow;
  double objective = 0.0;
};

BilevPoint bilev_evaluate(const Network& network, const CongestionFactor& cf, const DemandVector& g,
                          const Vector& observed, const BilevOptions& options = {});

double bilev_objective(const Network& network, const CongestionFactor& cf, const DemandVector& g,
                       const Vector& observed, const BilevOptions& options = {});

/// dF/dg_i = sum_{a in r_i} 2 (x_a - xt_a) with r_i the shortest route of OD
/// pair i at `link_costs`.
Vector bilev_gradient(const Network& network, const Vector& flow, const Vector& observed, const Vector& link_costs);

struct BilevRun {
  std::vector<Vector> demand_trace;      // g^0, g^1, ...
  std::vector<double> objective_trace;   // F(g^0), F(g^1), ...
  std::vector<double> step_trace;        // theta^l
  std::vector<double> theta_max_trace;   // theta_max^l
  std::vector<bool> theta_max_fallback;  // no negative search component at l
  BilevOptions options;
  Vector observed;
  std::optional<std::uint64_t> seed;     // of the perturbed start, when known
  enum class Stop { ZeroObjective, RelativeDecrease, IterationCap } stop = Stop::IterationCap;

  const Vector& demand() const { return demand_trace.back(); }
  std::size_t iterations() const { return step_trace.size(); }
};

const char* to_string(BilevRun::Stop stop);

/// Projected-gradient demand adjustment with a geometric step search over
/// {theta_max, theta_max / rho, ..., theta_max / rho^T, 0}. Candidate steps are
/// evaluated concurrently; ties go to the largest step. Throws DataError for
/// bad parameters or a negative g0.
BilevRun adjust_demand(const Network& network, const CongestionFactor& cf, const DemandVector& g0,
                       const Vector& observed, const BilevOptions& options = {});

/// ||g^l - g*|| / ||g*|| for every recorded iterate.
std::vector<double> demand_distance_trace(const BilevRun& run, const DemandVector& truth);

/// Each entry of g scaled by an independent U[lo, hi] draw.
DemandVector perturb_demand(const DemandVector& g, double lo, double hi, std::uint64_t seed);

/// Maps a subnetwork demand into the OD index space of `full` (matching node
/// ids); pairs of `full` absent from the subnetwork get zero. Throws
/// DataError when a subnetwork pair has no counterpart in `full`.
DemandVector embed_demand(const Network& sub, const DemandVector& g_sub, const Network& full);

/// Entrywise mean of demand vectors of equal length.
DemandVector average_demands(const std::vector<DemandVector>& demands);

}  // namespace tapkit
