#pragma once

#include "tapkit/equilibrium.hpp"
#include "tapkit/latency.hpp"
#include "tapkit/network.hpp"
#include "tapkit/qp.hpp"

#include <cstddef>
#include <string>
#include <vector>

namespace tapkit {

/// One observed equilibrium: the network and demand it was observed under
/// and the measured link flows.
struct Observation {
  Network network;
  DemandVector demand;
  Vector flow;
};

/// How dual prices y are attached to the dual-feasibility rows. PerOdPair
/// keeps one potential vector per (scenario, OD pair). PerOrigin shares one
/// vector among all pairs with the same origin; both give the same optimum
/// because the shortest-distance labels of an origin are simultaneously
/// optimal for all of its destinations.
enum class DualGrouping { PerOdPair, PerOrigin };

struct InverseVIOptions {
  int degree = 8;           // n
  double scale_c = 1.5;     // c in the weight (n choose i) c^(n-i)
  double gamma = 1.0;       // weight on ||epsilon||^2
  DualGrouping grouping = DualGrouping::PerOrigin;
  QpOptions qp;
};

/// The assembled QP together with its variable layout:
/// z = (beta_0..beta_n, y blocks, e_1..e_K), where e_k = sqrt(gamma) epsilon_k
/// keeps the quadratic weights of order one for any gamma.
struct InverseQp {
  QuadProgram program;
  std::size_t beta_offset = 0;
  std::size_t y_offset = 0;
  std::size_t epsilon_offset = 0;
  /// Per scenario, per group: variable index of each node's potential, or
  /// -1 for the pinned origin.
  std::vector<std::vector<std::vector<long>>> y_index;
  std::size_t dual_rows = 0;
  std::size_t monotonicity_rows = 0;
  std::size_t gap_rows = 0;
  /// Sum_a t0_a x_a per scenario; gap rows are divided by it so epsilon_k is
  /// a relative gap and beta does not depend on the time unit.
  std::vector<double> gap_normalizer;
  /// Largest observed normalized flow x_a / m_a.
  double max_normalized_flow = 0.0;
};

/// Builds the polynomial inverse-VI program. Throws DataError for an empty
/// scenario list, mismatched dimensions, negative flows or a scenario with
/// zero demand.
InverseQp build_inverse_qp(const std::vector<Observation>& scenarios, const InverseVIOptions& options);

struct CostEstimate {
  CongestionFactor factor = CongestionFactor::constant();
  std::vector<double> epsilon;  // relative gap slack per scenario
  /// Raw gap sum_a x_a t_a(x_a) - sum_w (d^w)'y^w per scenario, in vehicle-minutes.
  std::vector<double> raw_gap;
  /// Potentials per scenario and group (node-indexed; pinned origins are 0).
  std::vector<std::vector<Vector>> potentials;
  /// Largest violation of y_head - y_tail <= t_a(x_a) over all rows.
  double max_dual_violation = 0.0;
  double max_normalized_flow = 0.0;
  /// Smallest sampled f' on [0, max_normalized_flow]; >= 0 when f is
  /// nondecreasing over the observed range.
  double min_derivative = 0.0;
  QpResult qp;
  std::size_t dual_rows = 0;
  std::size_t monotonicity_rows = 0;
  std::vector<std::string> warnings;
};

/// Solves the inverse program and returns f(s) = 1 + sum_{i>=1} beta_i s^i.
/// Throws SolverError when the QP is infeasible or does not converge.
CostEstimate estimate_cost(const std::vector<Observation>& scenarios, const InverseVIOptions& options = {});

struct CvCandidate {
  double scale_c = 1.5;
  int degree = 8;
  double gamma = 1.0;
};

struct CvScore {
  CvCandidate candidate;
  /// Mean held-out ||x(g) - x~|| / ||x~||; +inf when a fold failed.
  double score = 0.0;
  std::vector<double> fold_scores;
  std::string failure;
};

struct CvResult {
  CvCandidate best;
  CostEstimate fit;  // refit on all scenarios with the best candidate
  std::vector<CvScore> scores;
  /// fold[k] = fold holding out scenario k.
  std::vector<std::size_t> fold_of;
};

/// Relative flow reproduction error ||x(g) - x~|| / ||x~|| of a factor,
/// forward-solved with Frank-Wolfe.
double flow_reproduction_error(const Observation& scenario, const CongestionFactor& factor,
                               const FrankWolfeOptions& solver = {});

/// k-fold cross-validation over the grid. Scenario k is held out in fold
/// k mod folds. Ties keep the earlier grid entry. Throws DataError when
/// there are fewer scenarios than folds or the grid is empty.
CvResult cross_validate(const std::vector<Observation>& scenarios, const std::vector<CvCandidate>& grid,
                        std::size_t folds = 3, const InverseVIOptions& base = {},
                        const FrankWolfeOptions& solver = {});

}  // namespace tapkit
