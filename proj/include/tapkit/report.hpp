#pragma once

#include "tapkit/analytics.hpp"
#include "tapkit/bilev.hpp"
#include "tapkit/equilibrium.hpp"
#include "tapkit/inverse_vi.hpp"
#include "tapkit/od_gls.hpp"

#include "json.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace tapkit {

using Json = nlohmann::ordered_json;

/// Serializes with every float at 17 significant digits so reruns are
/// byte-identical; non-finite numbers become null.
std::string dump_json(const Json& value);

/// Writes text to a file, creating parent directories. Throws DataError on
/// failure.
void write_file(const std::filesystem::path& path, const std::string& text);

Json vector_json(const Vector& v);
Json to_json(const CongestionFactor& cf);
/// Reads {"degree": n, "beta": [...]}; the degree must match the coefficients.
CongestionFactor congestion_factor_from_json(const Json& j);

/// Omits the wall time and the route decomposition.
Json to_json(const SolverReport& report);
Json to_json(const WardropReport& report);
Json to_json(const KktResiduals& r);
Json to_json(const QpResult& result);
Json to_json(const CostEstimate& estimate);
Json to_json(const CvResult& result);
Json to_json(const Network& network, const RouteSet& routes);
Json to_json(const GlsEstimate& estimate);
Json to_json(const BilevRun& run);
Json to_json(const PoaReport& report);
Json to_json(const SensitivityReport& report);

/// iteration,gap,objective
std::string trace_csv(const SolverReport& report);
/// link_id,init_node,term_node,flow,travel_time
std::string link_flows_csv(const Network& network, const Vector& flow, const Vector& times);
/// link,dV_dt0,dV_dm,scaled_dV_dt0,scaled_dV_dm
std::string sensitivity_csv(const Network& network, const SensitivityReport& report);

struct PoaDay {
  std::size_t day = 0;
  double ne_latency = 0.0;
  double so_latency = 0.0;
  std::optional<double> poa;
};

/// day,L_ne,L_so,poa (empty poa when undefined)
std::string poa_csv(const std::vector<PoaDay>& days);
/// iteration,objective,normalized_objective,step,theta_max,theta_max_fallback[,demand_distance]
std::string bilev_trace_csv(const BilevRun& run, const std::vector<double>& distance = {});
/// scenario,epsilon,raw_gap
std::string cost_diagnostics_csv(const CostEstimate& estimate);

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

/// Polyline chart with linear axes, or a log10 y axis when `log_y` (points
/// with y <= 0 are then dropped).
std::string svg_line_chart(const std::string& title, const std::string& x_label, const std::string& y_label,
                           const std::vector<Series>& series, bool log_y = false);

}  // namespace tapkit
