#include "tapkit/report.hpp"

#include "tapkit/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

namespace tapkit {

namespace {

void dump(std::ostringstream& out, const Json& v, int depth) {
  const std::string pad(static_cast<std::size_t>(2 * (depth + 1)), ' ');
  const std::string close(static_cast<std::size_t>(2 * depth), ' ');
  switch (v.type()) {
    case Json::value_t::number_float: {
      const double d = v.get<double>();
      out << (std::isfinite(d) ? format_double(d) : "null");
      break;
    }
    case Json::value_t::array:
      if (v.empty()) {
        out << "[]";
        break;
      }
      out << "[\n";
      for (std::size_t i = 0; i < v.size(); ++i) {
        out << pad;
        dump(out, v[i], depth + 1);
        out << (i + 1 < v.size() ? ",\n" : "\n");
      }
      out << close << ']';
      break;
    case Json::value_t::object: {
      if (v.empty()) {
        out << "{}";
        break;
      }
      out << "{\n";
      std::size_t i = 0;
      for (auto it = v.begin(); it != v.end(); ++it, ++i) {
        out << pad << Json(it.key()).dump() << ": ";
        dump(out, it.value(), depth + 1);
        out << (i + 1 < v.size() ? ",\n" : "\n");
      }
      out << close << '}';
      break;
    }
    default:
      out << v.dump();
  }
}

Json optional_json(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

std::string coord(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

}  // namespace

std::string dump_json(const Json& value) {
  std::ostringstream out;
  dump(out, value, 0);
  out << '\n';
  return out.str();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
  if (!out) throw DataError("failed writing " + path.string());
}

Json vector_json(const Vector& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

Json to_json(const CongestionFactor& cf) { return Json{{"degree", cf.degree()}, {"beta", cf.beta()}}; }

CongestionFactor congestion_factor_from_json(const Json& j) {
  if (!j.is_object() || !j.contains("beta") || !j["beta"].is_array()) {
    throw DataError("cost function JSON needs a \"beta\" array");
  }
  std::vector<double> beta;
  for (const auto& b : j["beta"]) {
    if (!b.is_number()) throw DataError("cost function coefficients must be numbers");
    beta.push_back(b.get<double>());
  }
  if (j.contains("degree") && (!j["degree"].is_number_integer() ||
                               j["degree"].get<long>() != static_cast<long>(beta.size()) - 1)) {
    throw DataError("cost function degree does not match its coefficients");
  }
  return CongestionFactor(beta);
}

Json to_json(const SolverReport& r) {
  return Json{{"algorithm", r.algorithm},
              {"iterations", r.iterations},
              {"converged", r.converged},
              {"iteration_cap_hit", r.iteration_cap_hit},
              {"final_gap", r.final_gap},
              {"objective", r.objective},
              {"total_latency", r.total_latency},
              {"gap_trace", r.gap_trace},
              {"objective_trace", r.objective_trace},
              {"flow", vector_json(r.flow.x)}};
}

Json to_json(const WardropReport& r) {
  std::size_t failing = 0;
  for (const auto& od : r.per_od) failing += od.pass ? 0 : 1;
  return Json{{"pass", r.pass}, {"max_relative_excess", r.max_relative_excess}, {"failing_od_pairs", failing}};
}

Json to_json(const KktResiduals& r) {
  return Json{{"stationarity", r.stationarity},
              {"primal_equality", r.primal_equality},
              {"primal_inequality", r.primal_inequality},
              {"dual_feasibility", r.dual_feasibility},
              {"complementarity", r.complementarity},
              {"duality_gap", r.duality_gap}};
}

Json to_json(const QpResult& r) {
  return Json{{"status", to_string(r.status)},
              {"iterations", r.iterations},
              {"objective", r.objective},
              {"kkt", to_json(r.residuals)},
              {"warnings", r.warnings}};
}

Json to_json(const CostEstimate& e) {
  return Json{{"cost_function", to_json(e.factor)},
              {"epsilon", e.epsilon},
              {"raw_gap", e.raw_gap},
              {"max_dual_violation", e.max_dual_violation},
              {"max_normalized_flow", e.max_normalized_flow},
              {"min_derivative", e.min_derivative},
              {"dual_rows", e.dual_rows},
              {"monotonicity_rows", e.monotonicity_rows},
              {"qp", to_json(e.qp)},
              {"warnings", e.warnings}};
}

Json to_json(const CvResult& r) {
  Json scores = Json::array();
  for (const auto& s : r.scores) {
    scores.push_back(Json{{"scale_c", s.candidate.scale_c},
                          {"degree", s.candidate.degree},
                          {"gamma", s.candidate.gamma},
                          {"score", s.score},
                          {"fold_scores", s.fold_scores},
                          {"failure", s.failure}});
  }
  return Json{{"best", {{"scale_c", r.best.scale_c}, {"degree", r.best.degree}, {"gamma", r.best.gamma}}},
              {"fold_of", r.fold_of},
              {"scores", scores}};
}

Json to_json(const Network& network, const RouteSet& routes) {
  Json out = Json::array();
  for (std::size_t i = 0; i < routes.routes.size(); ++i) {
    Json list = Json::array();
    for (const Route& r : routes.routes[i]) {
      Json ids = Json::array();
      for (LinkIndex a : r) ids.push_back(a + 1);
      list.push_back(ids);
    }
    const OdPair& od = network.od_pair(i);
    out.push_back(Json{{"origin", network.node_id(od.origin)},
                       {"destination", network.node_id(od.destination)},
                       {"routes", list}});
  }
  return out;
}

Json to_json(const GlsEstimate& e) {
  Json p = Json::array();
  for (const Vector& row : e.p2.probabilities) p.push_back(vector_json(row));
  return Json{{"route_count", e.routes.route_count()},
              {"covariance_regularization", e.covariance.regularization},
              {"p1", to_json(e.p1.qp)},
              {"route_flows", vector_json(e.p1.xi)},
              {"p2", {{"rounds", e.p2.rounds}, {"residual", e.p2.residual}, {"probabilities", p}}},
              {"demand", vector_json(e.demand.values())}};
}

Json to_json(const BilevRun& run) {
  Json demands = Json::array();
  for (const Vector& g : run.demand_trace) demands.push_back(vector_json(g));
  std::vector<bool> fallback(run.theta_max_fallback.begin(), run.theta_max_fallback.end());
  const auto& o = run.options;
  Json inner = o.inner == InnerSolver::Msa
                   ? Json{{"algorithm", "msa"}, {"tolerance", o.msa.tolerance}, {"max_iterations", o.msa.max_iterations}}
                   : Json{{"algorithm", "fw"}, {"tolerance", o.fw.tolerance}, {"max_iterations", o.fw.max_iterations}};
  return Json{{"parameters",
               {{"rho", o.rho},
                {"T", o.T},
                {"epsilon1", o.epsilon1},
                {"epsilon2", o.epsilon2},
                {"max_iterations", o.max_iterations},
                {"congested_routes", o.congested_routes},
                {"inner", inner}}},
              {"seed", run.seed ? Json(*run.seed) : Json(nullptr)},
              {"iterations", run.iterations()},
              {"stop", to_string(run.stop)},
              {"objective_trace", run.objective_trace},
              {"step_trace", run.step_trace},
              {"theta_max_trace", run.theta_max_trace},
              {"theta_max_fallback", fallback},
              {"demand_trace", demands},
              {"observed", vector_json(run.observed)}};
}

Json to_json(const PoaReport& r) {
  return Json{{"ne_latency", r.ne_latency},
              {"so_latency", r.so_latency},
              {"poa", optional_json(r.poa)},
              {"ne_supplied", r.ne_supplied},
              {"ne_contributions", vector_json(r.ne_contributions)},
              {"so_contributions", vector_json(r.so_contributions)}};
}

Json to_json(const SensitivityReport& r) {
  return Json{{"value", r.value},
              {"dV_dt0", vector_json(r.dV_dt0)},
              {"dV_dm", vector_json(r.dV_dm)},
              {"scaled_dV_dt0", vector_json(r.scaled_dV_dt0)},
              {"scaled_dV_dm", vector_json(r.scaled_dV_dm)}};
}

std::string trace_csv(const SolverReport& r) {
  std::ostringstream out;
  out << "iteration,gap,objective\n";
  for (std::size_t i = 0; i < r.gap_trace.size(); ++i) {
    out << i + 1 << ',' << format_double(r.gap_trace[i]) << ','
        << (i < r.objective_trace.size() ? format_double(r.objective_trace[i]) : "") << '\n';
  }
  return out.str();
}

std::string link_flows_csv(const Network& network, const Vector& flow, const Vector& times) {
  std::ostringstream out;
  out << "link_id,init_node,term_node,flow,travel_time\n";
  for (std::size_t a = 0; a < network.link_count(); ++a) {
    const Link& l = network.link(a);
    out << a + 1 << ',' << network.node_id(l.tail) << ',' << network.node_id(l.head) << ','
        << format_double(flow[static_cast<Eigen::Index>(a)]) << ',' << format_double(times[static_cast<Eigen::Index>(a)])
        << '\n';
  }
  return out.str();
}

std::string sensitivity_csv(const Network& network, const SensitivityReport& r) {
  std::ostringstream out;
  out << "link,dV_dt0,dV_dm,scaled_dV_dt0,scaled_dV_dm\n";
  for (std::size_t a = 0; a < network.link_count(); ++a) {
    const auto i = static_cast<Eigen::Index>(a);
    out << a + 1 << ',' << format_double(r.dV_dt0[i]) << ',' << format_double(r.dV_dm[i]) << ','
        << format_double(r.scaled_dV_dt0[i]) << ',' << format_double(r.scaled_dV_dm[i]) << '\n';
  }
  return out.str();
}

std::string poa_csv(const std::vector<PoaDay>& days) {
  std::ostringstream out;
  out << "day,L_ne,L_so,poa\n";
  for (const auto& d : days) {
    out << d.day << ',' << format_double(d.ne_latency) << ',' << format_double(d.so_latency) << ','
        << (d.poa ? format_double(*d.poa) : "") << '\n';
  }
  return out.str();
}

std::string bilev_trace_csv(const BilevRun& run, const std::vector<double>& distance) {
  std::ostringstream out;
  out << "iteration,objective,normalized_objective,step,theta_max,theta_max_fallback";
  if (!distance.empty()) out << ",demand_distance";
  out << '\n';
  const double f0 = run.objective_trace.empty() ? 0.0 : run.objective_trace.front();
  for (std::size_t l = 0; l < run.objective_trace.size(); ++l) {
    out << l << ',' << format_double(run.objective_trace[l]) << ','
        << (f0 > 0.0 ? format_double(run.objective_trace[l] / f0) : "") << ',';
    if (l > 0) {
      out << format_double(run.step_trace[l - 1]) << ',' << format_double(run.theta_max_trace[l - 1]) << ','
          << (run.theta_max_fallback[l - 1] ? 1 : 0);
    } else {
      out << ",,";
    }
    if (!distance.empty()) out << ',' << format_double(distance[l]);
    out << '\n';
  }
  return out.str();
}

std::string cost_diagnostics_csv(const CostEstimate& e) {
  std::ostringstream out;
  out << "scenario,epsilon,raw_gap\n";
  for (std::size_t k = 0; k < e.epsilon.size(); ++k) {
    out << k + 1 << ',' << format_double(e.epsilon[k]) << ','
        << (k < e.raw_gap.size() ? format_double(e.raw_gap[k]) : "") << '\n';
  }
  return out.str();
}

std::string svg_line_chart(const std::string& title, const std::string& x_label, const std::string& y_label,
                           const std::vector<Series>& series, bool log_y) {
  constexpr double W = 640, H = 400, L = 70, R = 20, T = 40, B = 50;
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};
  auto ty = [&](double y) { return log_y ? std::log10(y) : y; };

  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i]) || (log_y && s.y[i] <= 0.0)) continue;
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, ty(s.y[i]));
      y1 = std::max(y1, ty(s.y[i]));
    }
  }
  if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 == x0) x1 = x0 + 1;
  if (y1 == y0) y0 -= 0.5, y1 += 0.5;
  const double pad = 0.05 * (y1 - y0);
  y0 -= pad;
  y1 += pad;
  auto px = [&](double x) { return L + (x - x0) / (x1 - x0) * (W - L - R); };
  auto py = [&](double y) { return H - B - (y - y0) / (y1 - y0) * (H - T - B); };

  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W
      << ' ' << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << xml_escape(title)
      << "</text>\n";
  out << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B
      << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double xv = x0 + (x1 - x0) * k / 4.0;
    const double yv = y0 + (y1 - y0) * k / 4.0;
    out << "<text x=\"" << coord(px(xv)) << "\" y=\"" << H - B + 16 << "\" text-anchor=\"middle\">"
        << tick_label(xv) << "</text>\n";
    out << "<text x=\"" << L - 6 << "\" y=\"" << coord(py(yv) + 4) << "\" text-anchor=\"end\">"
        << tick_label(log_y ? std::pow(10.0, yv) : yv) << "</text>\n";
    out << "<line x1=\"" << L << "\" y1=\"" << coord(py(yv)) << "\" x2=\"" << W - R << "\" y2=\"" << coord(py(yv))
        << "\" stroke=\"#dddddd\"/>\n";
  }
  out << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\">" << xml_escape(x_label)
      << "</text>\n";
  out << "<text x=\"16\" y=\"" << (T + H - B) / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
      << (T + H - B) / 2 << ")\">" << xml_escape(y_label) << "</text>\n";
  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* color = colors[s % std::size(colors)];
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    bool first = true;
    for (std::size_t i = 0; i < series[s].x.size() && i < series[s].y.size(); ++i) {
      const double x = series[s].x[i], y = series[s].y[i];
      if (!std::isfinite(x) || !std::isfinite(y) || (log_y && y <= 0.0)) continue;
      out << (first ? "" : " ") << coord(px(x)) << ',' << coord(py(ty(y)));
      first = false;
    }
    out << "\"/>\n";
    out << "<text x=\"" << W - R - 4 << "\" y=\"" << T + 14 + 16 * s << "\" text-anchor=\"end\" fill=\"" << color
        << "\">" << xml_escape(series[s].name) << "</text>\n";
  }
  out << "</svg>\n";
  return out.str();
}

}  // namespace tapkit
