#pragma once

#include "tapkit/latency.hpp"
#include "tapkit/network.hpp"

#include <cstddef>
#include <string>
#include <vector>

namespace tapkit {

struct SolverReport {
  std::string algorithm;  // "msa", "fw" or "so-fw"
  FlowState flow;
  std::size_t iterations = 0;
  /// RG = ||x^l - x^{l-1}|| / ||x^l|| for MSA; relative duality gap for FW.
  std::vector<double> gap_trace;
  /// Beckmann potential (user equilibrium) or total latency (social optimum).
  std::vector<double> objective_trace;
  double final_gap = 0.0;
  double objective = 0.0;
  double total_latency = 0.0;
  bool converged = false;
  bool iteration_cap_hit = false;
  double wall_seconds = 0.0;  // not serialized into reproducible outputs
};

struct MsaOptions {
  double tolerance = 1e-6;
  std::size_t max_iterations = 5000;
  bool track_decomposition = true;
  /// Cost vector for iteration 1; empty means t(x^0) = t(0).
  Vector initial_costs;
};

struct FrankWolfeOptions {
  double tolerance = 1e-6;
  std::size_t max_iterations = 2000;
  /// Interleave pairwise (away) steps over the carried route decomposition.
  bool pairwise_steps = true;
};

/// Method of successive averages: x^l = x^{l-1} + (1/l)(y^l - x^{l-1}) from x^0 = 0,
/// stopping once RG < tolerance.
SolverReport solve_ue_msa(const Network& network, const DemandVector& demand, const CongestionFactor& cf,
                          const MsaOptions& options = {});

/// Frank-Wolfe on the Beckmann potential with exact line search along (y - x),
/// stopping once the relative duality gap drops below the tolerance.
SolverReport solve_ue_fw(const Network& network, const DemandVector& demand, const CongestionFactor& cf,
                         const FrankWolfeOptions& options = {});

/// Social optimum: the Frank-Wolfe solver run on marginal costs, minimizing
/// total latency sum_a x_a t_a(x_a).
SolverReport solve_so(const Network& network, const DemandVector& demand, const CongestionFactor& cf,
                      const FrankWolfeOptions& options = {});

struct WardropOdResult {
  double min_cost = 0.0;       // shortest route cost at the current times
  double max_used_cost = 0.0;  // costliest route carrying more than tol flow
  bool pass = true;
};

struct WardropReport {
  std::vector<WardropOdResult> per_od;
  double max_relative_excess = 0.0;
  bool pass = true;
};

/// Checks that every route carrying more than `tol` flow costs at most
/// (1 + tol) times the cheapest route of its OD pair. Requires a decomposition.
WardropReport wardrop_check(const Network& network, const DemandVector& demand, const CongestionFactor& cf,
                            const FlowState& flow, double tol);

}  // namespace tapkit
