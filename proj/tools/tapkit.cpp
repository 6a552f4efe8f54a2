// tapkit command-line front end.

#include "tapkit/analytics.hpp"
#include "tapkit/bilev.hpp"
#include "tapkit/equilibrium.hpp"
#include "tapkit/error.hpp"
#include "tapkit/inverse_vi.hpp"
#include "tapkit/od_gls.hpp"
#include "tapkit/report.hpp"

#include "CLI11.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace tapkit;

namespace {

constexpr int kOk = 0;
constexpr int kUsage = 1;
constexpr int kData = 2;
constexpr int kSolver = 3;

struct RunConfig {
  std::string net;
  std::string trips;
  std::string flows;
  std::string demands;
  std::string initial_demand;
  std::string cost;
  std::string out = "tapkit-out";
  std::vector<double> beta;

  std::string algo = "msa";
  std::optional<double> rg_tol;
  std::size_t max_iter = 0;  // 0: solver default
  double wardrop_tol = 1e-3;

  int degree = 8;
  double scale_c = 1.5;
  double gamma = 1.0;
  std::vector<double> scalings;
  std::size_t cv_folds = 0;
  std::vector<double> gamma_grid;
  std::vector<double> c_grid;
  std::vector<int> degree_grid;

  std::size_t k_routes = 3;

  int rho = 2;
  int T = 10;
  double epsilon1 = 0.0;
  double epsilon2 = 1e-20;
  std::size_t outer = 100;
  std::uint64_t seed = 1;
  std::string initial;
  double perturb_lo = 0.8;
  double perturb_hi = 1.2;
  bool free_flow_routes = false;
};

/// Artifacts land in one directory; names are recorded for the summary.
struct Output {
  fs::path dir;
  std::vector<std::string> artifacts;

  void write(const std::string& name, const std::string& text) {
    write_file(dir / name, text);
    artifacts.push_back(name);
  }
};

CongestionFactor cost_function(const RunConfig& c) {
  if (!c.cost.empty()) {
    std::ifstream in(c.cost);
    if (!in) throw DataError("cannot open cost function file " + c.cost);
    Json j;
    try {
      j = Json::parse(in);
    } catch (const Json::parse_error& e) {
      throw DataError(c.cost + ": " + e.what());
    }
    return congestion_factor_from_json(j);
  }
  if (!c.beta.empty()) return CongestionFactor(c.beta);
  return CongestionFactor::bpr();
}

double tolerance(const RunConfig& c, double fallback) { return c.rg_tol.value_or(fallback); }

FrankWolfeOptions fw_options(const RunConfig& c, double fallback_tol) {
  FrankWolfeOptions o;
  o.tolerance = tolerance(c, fallback_tol);
  if (c.max_iter) o.max_iterations = c.max_iter;
  return o;
}

MsaOptions msa_options(const RunConfig& c) {
  MsaOptions o;
  o.tolerance = tolerance(c, 1e-6);
  if (c.max_iter) o.max_iterations = c.max_iter;
  return o;
}

Vector mean_flow(const std::vector<FlowState>& obs) {
  Vector x = Vector::Zero(obs.front().x.size());
  for (const auto& o : obs) x += o.x;
  return x / static_cast<double>(obs.size());
}

Json optional_path(const std::string& p) { return p.empty() ? Json(nullptr) : Json(p); }

std::vector<double> iota_x(std::size_t n) {
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = static_cast<double>(i);
  return x;
}

std::string flows_csv(const Vector& x) {
  std::ostringstream s;
  write_flows(s, {x});
  return s.str();
}

std::string demand_csv(const Network& net, const DemandVector& g) {
  std::ostringstream s;
  write_demand(s, net, g);
  return s.str();
}

bool nonincreasing(const std::vector<double>& v) {
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[i - 1]) return false;
  }
  return true;
}

// ---- subcommands -----------------------------------------------------------

Json run_assign(const RunConfig& c, Output& out, bool social) {
  const auto ln = load_network(c.net, c.trips);
  const auto cf = cost_function(c);
  SolverReport rep;
  if (social) {
    rep = solve_so(ln.network, ln.demand, cf, fw_options(c, 1e-6));
  } else if (c.algo == "fw") {
    rep = solve_ue_fw(ln.network, ln.demand, cf, fw_options(c, 1e-6));
  } else {
    rep = solve_ue_msa(ln.network, ln.demand, cf, msa_options(c));
  }
  Json result = to_json(rep);
  result["cost_function"] = to_json(cf);
  if (!social && rep.flow.decomposition) {
    result["wardrop"] = to_json(wardrop_check(ln.network, ln.demand, cf, rep.flow, c.wardrop_tol));
  } else {
    result["wardrop"] = nullptr;
  }
  out.write("flows.csv", flows_csv(rep.flow.x));
  out.write("links.csv", link_flows_csv(ln.network, rep.flow.x, link_travel_times(ln.network, cf, rep.flow.x)));
  out.write("trace.csv", trace_csv(rep));
  std::vector<double> it(rep.gap_trace.size());
  for (std::size_t i = 0; i < it.size(); ++i) it[i] = static_cast<double>(i + 1);
  out.write("convergence.svg",
            svg_line_chart(social ? "System optimum convergence" : "Equilibrium convergence", "iteration",
                           "relative gap", {{rep.algorithm, it, rep.gap_trace}}, true));
  return result;
}

std::vector<Observation> scenarios_for(const RunConfig& c, const LoadedNetwork& ln) {
  const auto flows = load_flows(c.flows, ln.network);
  std::vector<DemandVector> demands;
  if (!c.demands.empty()) {
    demands = load_demands(c.demands, ln.network);
  } else if (!c.scalings.empty()) {
    for (double s : c.scalings) demands.emplace_back(ln.demand.values() * s);
  } else {
    demands.assign(flows.size(), ln.demand);
  }
  if (demands.size() != flows.size()) {
    throw DataError("flows file has " + std::to_string(flows.size()) + " observations but " +
                    std::to_string(demands.size()) + " demand scenarios were given");
  }
  std::vector<Observation> out;
  for (std::size_t k = 0; k < flows.size(); ++k) out.push_back({ln.network, demands[k], flows[k].x});
  return out;
}

Json run_estimate_cost(const RunConfig& c, Output& out) {
  const auto ln = load_network(c.net, c.trips);
  const auto scenarios = scenarios_for(c, ln);
  InverseVIOptions opt;
  opt.degree = c.degree;
  opt.scale_c = c.scale_c;
  opt.gamma = c.gamma;
  const FrankWolfeOptions solver = fw_options(c, 1e-8);

  Json cv = nullptr;
  CostEstimate est;
  if (c.cv_folds > 0) {
    std::vector<CvCandidate> grid;
    const auto degrees = c.degree_grid.empty() ? std::vector<int>{c.degree} : c.degree_grid;
    const auto cs = c.c_grid.empty() ? std::vector<double>{c.scale_c} : c.c_grid;
    const auto gammas = c.gamma_grid.empty() ? std::vector<double>{c.gamma} : c.gamma_grid;
    for (int n : degrees) {
      for (double sc : cs) {
        for (double g : gammas) grid.push_back({sc, n, g});
      }
    }
    const CvResult res = cross_validate(scenarios, grid, c.cv_folds, opt, solver);
    cv = to_json(res);
    est = res.fit;
  } else {
    est = estimate_cost(scenarios, opt);
  }
  std::vector<double> reproduction;
  for (const auto& s : scenarios) reproduction.push_back(flow_reproduction_error(s, est.factor, solver));

  Json result = to_json(est);
  result["cross_validation"] = cv;
  result["flow_reproduction_error"] = reproduction;
  out.write("cost.json", dump_json(to_json(est.factor)));
  out.write("cost_diagnostics.csv", cost_diagnostics_csv(est));
  Series curve{"estimated f", {}, {}};
  const double top = est.max_normalized_flow > 0.0 ? est.max_normalized_flow : 1.0;
  for (int i = 0; i <= 100; ++i) {
    const double s = top * i / 100.0;
    curve.x.push_back(s);
    curve.y.push_back(est.factor.value(s));
  }
  out.write("cost.svg", svg_line_chart("Estimated congestion factor", "x / m", "f", {curve}));
  return result;
}

struct GlsStage {
  GlsEstimate estimate;
  Json json;
};

GlsStage gls_stage(const RunConfig& c, const LoadedNetwork& ln, const std::vector<FlowState>& flows) {
  std::vector<Vector> obs;
  for (const auto& f : flows) obs.push_back(f.x);
  GlsStage s{estimate_initial_demand(ln.network, obs, c.k_routes), {}};
  s.json = to_json(s.estimate);
  s.json["routes"] = to_json(ln.network, s.estimate.routes);
  const double ref = ln.demand.values().norm();
  s.json["reference_distance"] =
      ref > 0.0 ? Json((s.estimate.demand.values() - ln.demand.values()).norm() / ref) : Json(nullptr);
  return s;
}

Json run_estimate_od(const RunConfig& c, Output& out) {
  const auto ln = load_network(c.net, c.trips);
  const auto flows = load_flows(c.flows, ln.network);
  const auto s = gls_stage(c, ln, flows);
  out.write("demand.csv", demand_csv(ln.network, s.estimate.demand));
  return s.json;
}

struct BilevStage {
  BilevRun run;
  Vector observed;
  Json json;
};

BilevOptions bilev_options(const RunConfig& c) {
  BilevOptions o;
  o.rho = c.rho;
  o.T = c.T;
  o.epsilon1 = c.epsilon1;
  o.epsilon2 = c.epsilon2;
  o.max_iterations = c.outer;
  o.congested_routes = !c.free_flow_routes;
  if (c.algo == "fw") {
    o.inner = InnerSolver::FrankWolfe;
    o.fw = fw_options(c, 1e-6);
  } else {
    o.inner = InnerSolver::Msa;
    o.msa = msa_options(c);
  }
  return o;
}

/// Observed flows are the mean of the flows file, or the equilibrium of the
/// trips demand (FW, relative gap 1e-10) when no file is given.
Vector observed_flows(const RunConfig& c, const LoadedNetwork& ln, const CongestionFactor& cf,
                      const std::vector<FlowState>& flows) {
  if (!flows.empty()) return mean_flow(flows);
  FrankWolfeOptions fw;
  fw.tolerance = 1e-10;
  fw.max_iterations = 50000;
  (void)c;
  return solve_ue_fw(ln.network, ln.demand, cf, fw).flow.x;
}

BilevStage bilev_stage(const RunConfig& c, const LoadedNetwork& ln, const CongestionFactor& cf, const Vector& observed,
                       const DemandVector& g0, std::optional<std::uint64_t> seed, Output& out) {
  BilevStage s;
  s.observed = observed;
  s.run = adjust_demand(ln.network, cf, g0, observed, bilev_options(c));
  s.run.seed = seed;
  const auto distance = demand_distance_trace(s.run, ln.demand);
  const auto& F = s.run.objective_trace;
  std::vector<double> normalized;
  for (double f : F) normalized.push_back(F.front() > 0.0 ? f / F.front() : 0.0);

  s.json = to_json(s.run);
  s.json["initial_objective"] = F.front();
  s.json["final_objective"] = F.back();
  s.json["normalized_objective"] = normalized;
  s.json["normalized_objective_at_7"] = normalized.size() > 7 ? Json(normalized[7]) : Json(nullptr);
  s.json["reference_distance_trace"] = distance;
  s.json["objective_nonincreasing"] = nonincreasing(F);
  s.json["distance_nonincreasing"] = nonincreasing(distance);

  const auto iters = iota_x(F.size());
  out.write("bilev_trace.csv", bilev_trace_csv(s.run, distance));
  out.write("objective.svg", svg_line_chart("Normalized objective", "iteration", "F(g) / F(g0)",
                                            {{"F / F0", iters, normalized}}));
  out.write("distance.svg", svg_line_chart("Normalized demand distance", "iteration", "||g - g*|| / ||g*||",
                                           {{"distance", iters, distance}}));
  return s;
}

DemandVector initial_demand(const RunConfig& c, const LoadedNetwork& ln, std::optional<std::uint64_t>& seed) {
  if (c.initial == "perturb") {
    seed = c.seed;
    return perturb_demand(ln.demand, c.perturb_lo, c.perturb_hi, c.seed);
  }
  if (c.initial == "file") {
    const auto d = load_demands(c.initial_demand, ln.network);
    if (d.size() != 1) throw DataError(c.initial_demand + ": expected exactly one demand column");
    return d.front();
  }
  return ln.demand;
}

Json run_adjust_od(const RunConfig& c, Output& out) {
  const auto ln = load_network(c.net, c.trips);
  const auto cf = cost_function(c);
  const auto flows = c.flows.empty() ? std::vector<FlowState>{} : load_flows(c.flows, ln.network);
  std::optional<std::uint64_t> seed;
  const DemandVector g0 = initial_demand(c, ln, seed);
  const auto s = bilev_stage(c, ln, cf, observed_flows(c, ln, cf, flows), g0, seed, out);
  out.write("demand.csv", demand_csv(ln.network, DemandVector(s.run.demand())));
  out.write("bilev.json", dump_json(s.json));
  Json result = s.json;
  result.erase("demand_trace");
  result.erase("observed");
  result["initial"] = c.initial;
  result["observed_source"] = flows.empty() ? "equilibrium-of-trips" : "flows-file-mean";
  return result;
}

std::vector<PoaDay> poa_days(const LoadedNetwork& ln, const CongestionFactor& cf,
                             const std::vector<FlowState>& flows, const DemandVector& demand,
                             const FrankWolfeOptions& fw, Json& reports) {
  std::vector<PoaDay> days;
  reports = Json::array();
  const std::size_t n = flows.empty() ? 1 : flows.size();
  for (std::size_t d = 0; d < n; ++d) {
    const auto rep = flows.empty() ? price_of_anarchy(ln.network, demand, cf, std::nullopt, fw)
                                   : price_of_anarchy(ln.network, demand, cf, flows[d].x, fw);
    days.push_back({d + 1, rep.ne_latency, rep.so_latency, rep.poa});
    Json j = to_json(rep);
    j["day"] = d + 1;
    reports.push_back(j);
  }
  return days;
}

Json run_poa(const RunConfig& c, Output& out) {
  const auto ln = load_network(c.net, c.trips);
  const auto cf = cost_function(c);
  const auto flows = c.flows.empty() ? std::vector<FlowState>{} : load_flows(c.flows, ln.network);
  Json reports;
  const auto days = poa_days(ln, cf, flows, ln.demand, fw_options(c, 1e-10), reports);
  out.write("poa.csv", poa_csv(days));
  return Json{{"ne_source", flows.empty() ? "frank-wolfe" : "flows-file"}, {"days", reports}};
}

Json run_sensitivity(const RunConfig& c, Output& out) {
  const auto ln = load_network(c.net, c.trips);
  const auto cf = cost_function(c);
  const auto rep = sensitivity(ln.network, ln.demand, cf, fw_options(c, 1e-10));
  out.write("sensitivity.csv", sensitivity_csv(ln.network, rep));
  Json j = to_json(rep);
  j["flow"] = vector_json(rep.flow);
  return j;
}

Json run_pipeline(const RunConfig& c, Output& out) {
  const auto ln = load_network(c.net, c.trips);
  const auto cf = cost_function(c);
  const auto flows = c.flows.empty() ? std::vector<FlowState>{} : load_flows(c.flows, ln.network);
  Json result;

  std::optional<GlsStage> gls;
  if (flows.size() >= 2) {
    gls = gls_stage(c, ln, flows);
    out.write("demand_gls.csv", demand_csv(ln.network, gls->estimate.demand));
    result["estimate_od"] = gls->json;
  } else {
    result["estimate_od"] = Json{{"skipped", "needs at least two flow observations"}};
  }

  std::string initial = c.initial;
  if (initial.empty()) initial = gls ? "gls" : "perturb";
  if (initial == "gls" && !gls) throw DataError("initial demand 'gls' needs a flows file with at least two observations");
  std::optional<std::uint64_t> seed;
  RunConfig local = c;
  local.initial = initial;
  const DemandVector g0 = initial == "gls" ? gls->estimate.demand : initial_demand(local, ln, seed);
  const Vector observed = observed_flows(c, ln, cf, flows);
  const auto s = bilev_stage(c, ln, cf, observed, g0, seed, out);
  const DemandVector adjusted(s.run.demand());
  out.write("demand_adjusted.csv", demand_csv(ln.network, adjusted));
  out.write("bilev.json", dump_json(s.json));
  Json bilev = s.json;
  bilev.erase("demand_trace");
  bilev.erase("observed");
  bilev["initial"] = initial;
  result["adjust_od"] = bilev;

  // Observed flows play the equilibrium; the optimum uses the adjusted demand.
  Json reports;
  FrankWolfeOptions fw;
  fw.tolerance = 1e-10;
  const auto days = poa_days(ln, cf, {FlowState{observed, std::nullopt}}, adjusted, fw, reports);
  out.write("poa.csv", poa_csv(days));
  result["poa"] = Json{{"ne_source", flows.empty() ? "equilibrium-of-trips" : "flows-file-mean"}, {"days", reports}};
  return result;
}

// ---- validation ------------------------------------------------------------

struct Problems {
  std::vector<std::string> usage;
  std::vector<std::string> missing;
};

void need_file(Problems& p, const std::string& what, const std::string& path, bool required) {
  if (path.empty()) {
    if (required) p.usage.push_back(what + " is required");
    return;
  }
  if (!fs::is_regular_file(path)) p.missing.push_back(what + " not found: " + path);
}

Problems validate(const std::string& cmd, const RunConfig& c) {
  Problems p;
  need_file(p, "network file (--net)", c.net, true);
  need_file(p, "trips file (--trips)", c.trips, true);
  const bool flows_required = cmd == "estimate-cost" || cmd == "estimate-od";
  need_file(p, "flows file (--flows)", c.flows, flows_required);
  need_file(p, "demand file (--demands)", c.demands, false);
  need_file(p, "cost function file (--cost)", c.cost, false);
  if (c.rg_tol && !(*c.rg_tol > 0.0)) p.usage.push_back("--rg-tol must be > 0");
  if (!(c.wardrop_tol > 0.0)) p.usage.push_back("--wardrop-tol must be > 0");
  if (c.algo != "msa" && c.algo != "fw") p.usage.push_back("--algo must be msa or fw");
  if (!c.cost.empty() && !c.beta.empty()) p.usage.push_back("--cost and --beta are mutually exclusive");
  if (cmd == "estimate-cost") {
    if (c.degree < 1) p.usage.push_back("--degree must be >= 1");
    if (!(c.scale_c > 0.0)) p.usage.push_back("--c must be > 0");
    if (!(c.gamma > 0.0)) p.usage.push_back("--gamma must be > 0");
    if (!c.demands.empty() && !c.scalings.empty()) p.usage.push_back("--demands and --scalings are mutually exclusive");
  }
  if (cmd == "estimate-od" || cmd == "pipeline") {
    if (c.k_routes < 1) p.usage.push_back("--k-routes must be >= 1");
  }
  if (cmd == "adjust-od" || cmd == "pipeline") {
    if (c.rho < 2) p.usage.push_back("--rho must be an integer >= 2");
    if (c.T < 1) p.usage.push_back("--T must be >= 1");
    if (!(c.epsilon1 >= 0.0)) p.usage.push_back("--epsilon1 must be >= 0");
    if (!(c.epsilon2 > 0.0)) p.usage.push_back("--epsilon2 must be > 0");
    if (c.outer < 1) p.usage.push_back("--outer-iterations must be >= 1");
    if (!(c.perturb_lo >= 0.0 && c.perturb_lo <= c.perturb_hi)) {
      p.usage.push_back("perturbation range must satisfy 0 <= --perturb-lo <= --perturb-hi");
    }
    const std::vector<std::string> allowed =
        cmd == "pipeline" ? std::vector<std::string>{"", "gls", "trips", "perturb", "file"}
                          : std::vector<std::string>{"", "trips", "perturb", "file"};
    if (std::find(allowed.begin(), allowed.end(), c.initial) == allowed.end()) {
      p.usage.push_back("--initial must be one of " +
                        std::string(cmd == "pipeline" ? "gls, trips, perturb, file" : "trips, perturb, file"));
    }
    need_file(p, "initial demand file (--initial-demand)", c.initial_demand, c.initial == "file");
  }
  return p;
}

Json settings_json(const std::string& cmd, const RunConfig& c) {
  Json s{{"algo", c.algo}, {"rg_tol", c.rg_tol ? Json(*c.rg_tol) : Json(nullptr)}, {"max_iter", c.max_iter}};
  s["beta"] = c.beta;
  if (cmd == "assign") s["wardrop_tol"] = c.wardrop_tol;
  if (cmd == "estimate-cost") {
    s["degree"] = c.degree;
    s["c"] = c.scale_c;
    s["gamma"] = c.gamma;
    s["scalings"] = c.scalings;
    s["cv_folds"] = c.cv_folds;
    s["degree_grid"] = c.degree_grid;
    s["c_grid"] = c.c_grid;
    s["gamma_grid"] = c.gamma_grid;
  }
  if (cmd == "estimate-od" || cmd == "pipeline") s["k_routes"] = c.k_routes;
  if (cmd == "adjust-od" || cmd == "pipeline") {
    s["rho"] = c.rho;
    s["T"] = c.T;
    s["epsilon1"] = c.epsilon1;
    s["epsilon2"] = c.epsilon2;
    s["outer_iterations"] = c.outer;
    s["seed"] = c.seed;
    s["initial"] = c.initial;
    s["perturb_lo"] = c.perturb_lo;
    s["perturb_hi"] = c.perturb_hi;
    s["free_flow_routes"] = c.free_flow_routes;
  }
  return s;
}

bool flag_given(int argc, char** argv, const std::string& flag) {
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == flag || a.rfind(flag + "=", 0) == 0) return true;
  }
  return false;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Traffic assignment, demand and cost estimation toolkit"};
  app.require_subcommand(1);
  app.set_config("--config", "", "TOML config file; command-line flags take precedence");
  RunConfig c;

  const std::vector<std::string> names{"assign", "so", "estimate-cost", "estimate-od", "adjust-od",
                                       "poa", "sensitivity", "pipeline"};
  const std::vector<std::string> help{
      "user equilibrium (MSA or Frank-Wolfe)",
      "social optimum (Frank-Wolfe on marginal costs)",
      "fit a polynomial congestion factor by inverse VI",
      "initial OD demand by two-stage GLS",
      "bi-level demand adjustment",
      "price of anarchy",
      "sensitivity of the Beckmann optimum to t0 and m",
      "estimate-od, then adjust-od, then poa"};
  std::map<std::string, CLI::App*> subs;
  for (std::size_t i = 0; i < names.size(); ++i) {
    const std::string& n = names[i];
    CLI::App* s = app.add_subcommand(n, help[i]);
    subs[n] = s;
    s->add_option("--net", c.net, "network file");
    s->add_option("--trips", c.trips, "trips file");
    s->add_option("--out,-o", c.out, "output directory (env TAPKIT_OUT_DIR overrides the config file)");
    s->add_option("--beta", c.beta, "congestion factor coefficients beta_0..beta_n (default BPR)");
    s->add_option("--cost", c.cost, "congestion factor JSON {\"degree\", \"beta\"}");
    s->add_option("--rg-tol", c.rg_tol, "relative-gap tolerance of the traffic assignment solver");
    s->add_option("--max-iter", c.max_iter, "iteration cap of the traffic assignment solver");
    if (n == "assign" || n == "adjust-od" || n == "pipeline") {
      s->add_option("--algo", c.algo, "msa or fw");
    }
    if (n != "so" && n != "sensitivity") s->add_option("--flows", c.flows, "flows CSV link_id,obs_1,...");
  }
  subs["assign"]->add_option("--wardrop-tol", c.wardrop_tol, "tolerance of the Wardrop certificate");

  auto* ec = subs["estimate-cost"];
  ec->add_option("--demands", c.demands, "demand CSV origin,destination,d_1,... (one column per observation)");
  ec->add_option("--scalings", c.scalings, "per-observation multipliers of the trips demand");
  ec->add_option("--degree", c.degree, "polynomial degree n");
  ec->add_option("--c", c.scale_c, "scale c of the coefficient weights");
  ec->add_option("--gamma", c.gamma, "weight of the gap slacks");
  ec->add_option("--cv-folds", c.cv_folds, "cross-validation folds (0 disables)");
  ec->add_option("--degree-grid", c.degree_grid, "degrees for cross-validation");
  ec->add_option("--c-grid", c.c_grid, "c values for cross-validation");
  ec->add_option("--gamma-grid", c.gamma_grid, "gamma values for cross-validation");

  for (const char* n : {"estimate-od", "pipeline"}) {
    subs[n]->add_option("--k-routes", c.k_routes, "routes enumerated per OD pair");
  }
  for (const char* n : {"adjust-od", "pipeline"}) {
    auto* s = subs[n];
    s->add_option("--rho", c.rho, "step-size ratio");
    s->add_option("--T", c.T, "number of step-size reductions");
    s->add_option("--epsilon1", c.epsilon1, "demand floor below which entries only grow");
    s->add_option("--epsilon2", c.epsilon2, "relative-decrease stopping threshold");
    s->add_option("--outer-iterations", c.outer, "cap on outer iterations");
    s->add_option("--initial", c.initial,
                  std::string("initial demand: ") + (std::string(n) == "pipeline" ? "gls, " : "") +
                      "trips, perturb or file");
    s->add_option("--initial-demand", c.initial_demand, "demand CSV for --initial file");
    s->add_option("--seed", c.seed, "seed of the perturbation");
    s->add_option("--perturb-lo", c.perturb_lo, "lower multiplier of the perturbation");
    s->add_option("--perturb-hi", c.perturb_hi, "upper multiplier of the perturbation");
    s->add_flag("--free-flow-routes", c.free_flow_routes, "shortest routes at free-flow times for the Jacobian");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  std::string cmd;
  for (const auto& [n, s] : subs) {
    if (s->parsed()) cmd = n;
  }
  if (const char* env = std::getenv("TAPKIT_OUT_DIR"); env && *env && !flag_given(argc, argv, "--out") &&
                                                     !flag_given(argc, argv, "-o")) {
    c.out = env;
  }
  if (c.initial.empty() && cmd == "adjust-od") c.initial = "trips";

  Output out{c.out, {}};
  Json summary{{"command", cmd},
               {"status", "ok"},
               {"exit_code", kOk},
               {"inputs",
                {{"net", optional_path(c.net)},
                 {"trips", optional_path(c.trips)},
                 {"flows", optional_path(c.flows)},
                 {"demands", optional_path(c.demands)},
                 {"cost", optional_path(c.cost)}}},
               {"settings", settings_json(cmd, c)},
               {"result", nullptr},
               {"artifacts", Json::array()},
               {"error", nullptr}};

  auto finish = [&](int code, const std::string& message) {
    if (code != kOk) {
      std::cerr << "tapkit " << cmd << ": " << message << "\n";
      summary["status"] = "error";
      summary["error"] = message;
    }
    summary["exit_code"] = code;
    summary["artifacts"] = out.artifacts;
    try {
      write_file(out.dir / (cmd + ".json"), dump_json(summary));
    } catch (const std::exception& e) {
      std::cerr << "tapkit " << cmd << ": " << e.what() << "\n";
      if (code == kOk) code = kData;
    }
    return code;
  };

  const Problems problems = validate(cmd, c);
  if (!problems.usage.empty() || !problems.missing.empty()) {
    std::string message;
    for (const auto& m : problems.usage) message += (message.empty() ? "" : "; ") + m;
    for (const auto& m : problems.missing) message += (message.empty() ? "" : "; ") + m;
    return finish(problems.usage.empty() ? kData : kUsage, message);
  }

  try {
    Json result;
    if (cmd == "assign") result = run_assign(c, out, false);
    else if (cmd == "so") result = run_assign(c, out, true);
    else if (cmd == "estimate-cost") result = run_estimate_cost(c, out);
    else if (cmd == "estimate-od") result = run_estimate_od(c, out);
    else if (cmd == "adjust-od") result = run_adjust_od(c, out);
    else if (cmd == "poa") result = run_poa(c, out);
    else if (cmd == "sensitivity") result = run_sensitivity(c, out);
    else result = run_pipeline(c, out);
    summary["result"] = result;
    return finish(kOk, "");
  } catch (const DataError& e) {
    return finish(kData, e.what());
  } catch (const SolverError& e) {
    return finish(kSolver, e.what());
  } catch (const std::exception& e) {
    return finish(kSolver, e.what());
  }
}
