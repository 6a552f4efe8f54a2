#include "tapkit/network.hpp"

#include "tapkit/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <queue>
#include <sstream>

namespace tapkit {

namespace {

std::size_t od_key(NodeIndex o, NodeIndex d, std::size_t n) { return o * n + d; }

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double parse_number(const std::string& token, const std::string& file, std::size_t line) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(token, &used);
  } catch (const std::exception&) {
    throw ParseError(file, line, "expected a number, got '" + token + "'");
  }
  if (used != token.size()) throw ParseError(file, line, "expected a number, got '" + token + "'");
  return v;
}

long parse_integer(const std::string& token, const std::string& file, std::size_t line) {
  const double v = parse_number(token, file, line);
  if (v != std::floor(v)) throw ParseError(file, line, "expected an integer id, got '" + token + "'");
  return static_cast<long>(v);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(trim(cur));
  return out;
}

// Nodes reachable from `start` following links forward (or backward).
std::vector<char> reachable(const Network& net, NodeIndex start, bool forward) {
  std::vector<char> seen(net.node_count(), 0);
  std::queue<NodeIndex> queue;
  seen[start] = 1;
  queue.push(start);
  while (!queue.empty()) {
    const NodeIndex u = queue.front();
    queue.pop();
    const auto adj = forward ? net.out_links(u) : net.in_links(u);
    for (LinkIndex a : adj) {
      const NodeIndex v = forward ? net.link(a).head : net.link(a).tail;
      if (!seen[v]) {
        seen[v] = 1;
        queue.push(v);
      }
    }
  }
  return seen;
}

}  // namespace

// ---- Network ----------------------------------------------------------------

Network::Network(std::vector<long> node_ids, std::vector<Link> links, std::vector<OdPair> od_pairs)
    : node_ids_(std::move(node_ids)), links_(std::move(links)), od_pairs_(std::move(od_pairs)) {
  if (node_ids_.empty()) throw DataError("network has no nodes");
  for (NodeIndex v = 0; v < node_ids_.size(); ++v) {
    if (!index_of_.emplace(node_ids_[v], v).second) {
      throw DataError("duplicate node id " + std::to_string(node_ids_[v]));
    }
  }
  build_adjacency();
  validate();
}

void Network::build_adjacency() {
  const std::size_t n = node_ids_.size();
  out_.assign(n, {});
  in_.assign(n, {});
  for (LinkIndex a = 0; a < links_.size(); ++a) {
    const Link& l = links_[a];
    if (l.tail >= n || l.head >= n) {
      throw DataError("link " + std::to_string(a + 1) + " references an unknown node");
    }
    out_[l.tail].push_back(a);
    in_[l.head].push_back(a);
  }
  for (auto& adj : out_) {
    std::stable_sort(adj.begin(), adj.end(), [this](LinkIndex a, LinkIndex b) {
      return links_[a].head < links_[b].head;
    });
  }
  od_lookup_.clear();
  for (std::size_t w = 0; w < od_pairs_.size(); ++w) {
    const OdPair& od = od_pairs_[w];
    if (od.origin >= n || od.destination >= n) throw DataError("OD pair references an unknown node");
    if (!od_lookup_.emplace(od_key(od.origin, od.destination, n), w).second) {
      throw DataError("duplicate OD pair (" + std::to_string(node_ids_[od.origin]) + ", " +
                      std::to_string(node_ids_[od.destination]) + ")");
    }
  }
}

void Network::validate() const {
  for (LinkIndex a = 0; a < links_.size(); ++a) {
    const Link& l = links_[a];
    const std::string name = "link " + std::to_string(a + 1) + " (" + std::to_string(node_ids_[l.tail]) +
                             " -> " + std::to_string(node_ids_[l.head]) + ")";
    if (!(l.free_flow_time > 0.0) || !std::isfinite(l.free_flow_time)) {
      throw NonPositiveParameterError(name + ": free-flow time must be positive, got " + format_double(l.free_flow_time));
    }
    if (!(l.capacity > 0.0) || !std::isfinite(l.capacity)) {
      throw NonPositiveParameterError(name + ": capacity must be positive, got " + format_double(l.capacity));
    }
    if (l.tail == l.head) throw DataError(name + ": self-loop links are not allowed");
  }
  for (const OdPair& od : od_pairs_) {
    if (od.origin == od.destination) {
      throw DataError("OD pair origin equals destination (node " + std::to_string(node_ids_[od.origin]) + ")");
    }
  }
  const auto fwd = reachable(*this, 0, true);
  for (NodeIndex v = 0; v < node_count(); ++v) {
    if (!fwd[v]) {
      throw DisconnectedNetworkError("network is not strongly connected: node " + std::to_string(node_ids_[v]) +
                      " is unreachable from node " + std::to_string(node_ids_[0]));
    }
  }
  const auto bwd = reachable(*this, 0, false);
  for (NodeIndex v = 0; v < node_count(); ++v) {
    if (!bwd[v]) {
      throw DisconnectedNetworkError("network is not strongly connected: node " + std::to_string(node_ids_[0]) +
                      " is unreachable from node " + std::to_string(node_ids_[v]));
    }
  }
}

NodeIndex Network::node_index(long id) const {
  const auto it = index_of_.find(id);
  if (it == index_of_.end()) throw DataError("unknown node id " + std::to_string(id));
  return it->second;
}

std::optional<std::size_t> Network::find_od(NodeIndex origin, NodeIndex destination) const {
  const auto it = od_lookup_.find(od_key(origin, destination, node_count()));
  if (it == od_lookup_.end()) return std::nullopt;
  return it->second;
}

Vector Network::free_flow_times() const {
  Vector t(static_cast<Eigen::Index>(links_.size()));
  for (LinkIndex a = 0; a < links_.size(); ++a) t[static_cast<Eigen::Index>(a)] = links_[a].free_flow_time;
  return t;
}

Vector Network::capacities() const {
  Vector m(static_cast<Eigen::Index>(links_.size()));
  for (LinkIndex a = 0; a < links_.size(); ++a) m[static_cast<Eigen::Index>(a)] = links_[a].capacity;
  return m;
}

Network Network::with_od_pairs(std::vector<OdPair> od_pairs) const {
  Network copy(node_ids_, links_, std::move(od_pairs));
  copy.zone_count = zone_count;
  copy.first_thru_node = first_thru_node;
  return copy;
}

Network Network::with_link_parameters(const Vector& free_flow_times, const Vector& capacities) const {
  if (static_cast<std::size_t>(free_flow_times.size()) != links_.size() ||
      static_cast<std::size_t>(capacities.size()) != links_.size()) {
    throw DataError("link parameter vectors must have one entry per link");
  }
  std::vector<Link> links = links_;
  for (LinkIndex a = 0; a < links.size(); ++a) {
    links[a].free_flow_time = free_flow_times[static_cast<Eigen::Index>(a)];
    links[a].capacity = capacities[static_cast<Eigen::Index>(a)];
  }
  Network copy(node_ids_, std::move(links), od_pairs_);
  copy.zone_count = zone_count;
  copy.first_thru_node = first_thru_node;
  return copy;
}

// ---- demand and flows -------------------------------------------------------

DemandVector::DemandVector(Vector g) : g_(std::move(g)) {
  for (Eigen::Index i = 0; i < g_.size(); ++i) {
    if (!(g_[i] >= 0.0) || !std::isfinite(g_[i])) {
      throw DataError("demand entry " + std::to_string(i) + " must be finite and nonnegative, got " +
                      format_double(g_[i]));
    }
  }
}

double OdRouteFlows::total() const {
  double s = 0.0;
  for (double f : flows) s += f;
  return s;
}

void OdRouteFlows::add(const Route& route, double amount) {
  for (std::size_t r = 0; r < routes.size(); ++r) {
    if (routes[r] == route) {
      flows[r] += amount;
      return;
    }
  }
  routes.push_back(route);
  flows.push_back(amount);
}

Vector FlowState::od_link_flows(std::size_t w, std::size_t link_count) const {
  if (!decomposition) throw DataError("flow state carries no per-OD decomposition");
  Vector xw = Vector::Zero(static_cast<Eigen::Index>(link_count));
  const OdRouteFlows& od = decomposition->at(w);
  for (std::size_t r = 0; r < od.routes.size(); ++r) {
    for (LinkIndex a : od.routes[r]) xw[static_cast<Eigen::Index>(a)] += od.flows[r];
  }
  return xw;
}

Matrix incidence(const Network& network) {
  Matrix n = Matrix::Zero(static_cast<Eigen::Index>(network.node_count()),
                          static_cast<Eigen::Index>(network.link_count()));
  for (LinkIndex a = 0; a < network.link_count(); ++a) {
    const Link& l = network.link(a);
    n(static_cast<Eigen::Index>(l.tail), static_cast<Eigen::Index>(a)) = -1.0;
    n(static_cast<Eigen::Index>(l.head), static_cast<Eigen::Index>(a)) = 1.0;
  }
  return n;
}

Vector node_demand(const Network& network, std::size_t w, double demand) {
  Vector d = Vector::Zero(static_cast<Eigen::Index>(network.node_count()));
  const OdPair& od = network.od_pair(w);
  d[static_cast<Eigen::Index>(od.origin)] = -demand;
  d[static_cast<Eigen::Index>(od.destination)] = demand;
  return d;
}

FeasibilityReport check_feasible(const Network& network, const DemandVector& demand,
                                 const FlowState& flow, double tol) {
  FeasibilityReport rep;
  const auto m = static_cast<Eigen::Index>(network.link_count());
  if (flow.x.size() != m) {
    rep.feasible = false;
    rep.reason = "flow vector has wrong dimension";
    return rep;
  }
  rep.min_flow = m > 0 ? flow.x.minCoeff() : 0.0;
  if (rep.min_flow < 0.0) {
    rep.feasible = false;
    rep.reason = "negative link flow";
  }
  if (!flow.decomposition) {
    if (rep.feasible) rep.reason = "no decomposition; only nonnegativity checked";
    return rep;
  }
  if (flow.decomposition->size() != network.od_count() || demand.size() != network.od_count()) {
    rep.feasible = false;
    rep.reason = "decomposition does not match the OD pair list";
    return rep;
  }
  const Matrix inc = incidence(network);
  Vector sum = Vector::Zero(m);
  for (std::size_t w = 0; w < network.od_count(); ++w) {
    const Vector xw = flow.od_link_flows(w, network.link_count());
    if (m > 0 && xw.minCoeff() < -tol) {
      rep.feasible = false;
      rep.reason = "negative per-OD link flow";
    }
    sum += xw;
    const Vector dw = node_demand(network, w, demand[w]);
    const double err = (inc * xw - dw).lpNorm<Eigen::Infinity>() / (1.0 + dw.norm());
    rep.max_conservation_error = std::max(rep.max_conservation_error, err);
  }
  for (Eigen::Index a = 0; a < m; ++a) {
    rep.max_aggregation_error = std::max(rep.max_aggregation_error, std::abs(flow.x[a] - sum[a]) / (1.0 + sum[a]));
  }
  if (rep.max_conservation_error > tol) {
    rep.feasible = false;
    rep.reason = "flow conservation violated";
  }
  if (rep.max_aggregation_error > tol) {
    rep.feasible = false;
    rep.reason = "link flows differ from the sum of per-OD flows";
  }
  return rep;
}

std::vector<OdPair> all_od_pairs(std::size_t node_count) {
  std::vector<OdPair> pairs;
  for (NodeIndex o = 0; o < node_count; ++o) {
    for (NodeIndex d = 0; d < node_count; ++d) {
      if (o != d) pairs.push_back({o, d});
    }
  }
  return pairs;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// ---- benchmark text format -------------------------------------------------

NetFile read_net(std::istream& in, const std::string& name) {
  NetFile net;
  long declared_nodes = -1;
  long declared_links = -1;
  bool in_metadata = true;
  std::string raw;
  std::size_t line_no = 0;
  std::map<long, bool> seen_nodes;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string line = trim(raw);
    if (line.empty()) continue;
    if (line[0] == '<') {
      const auto close = line.find('>');
      if (close == std::string::npos) throw ParseError(name, line_no, "unterminated metadata tag");
      const std::string key = line.substr(1, close - 1);
      const std::string value = trim(line.substr(close + 1));
      if (key == "END OF METADATA") {
        in_metadata = false;
      } else if (key == "NUMBER OF NODES") {
        declared_nodes = parse_integer(value, name, line_no);
      } else if (key == "NUMBER OF LINKS") {
        declared_links = parse_integer(value, name, line_no);
      } else if (key == "NUMBER OF ZONES") {
        net.zone_count = parse_integer(value, name, line_no);
      } else if (key == "FIRST THRU NODE") {
        net.first_thru_node = parse_integer(value, name, line_no);
      }
      continue;
    }
    if (line[0] == '~') continue;
    if (in_metadata) throw ParseError(name, line_no, "link data before <END OF METADATA>");
    const auto semi = line.find(';');
    if (semi != std::string::npos) line = line.substr(0, semi);
    std::istringstream fields(line);
    std::vector<std::string> tokens;
    for (std::string t; fields >> t;) tokens.push_back(t);
    if (tokens.size() < 5) {
      throw ParseError(name, line_no, "expected at least 5 columns (init, term, capacity, length, free-flow time)");
    }
    Link l;
    const long tail = parse_integer(tokens[0], name, line_no);
    const long head = parse_integer(tokens[1], name, line_no);
    l.capacity = parse_number(tokens[2], name, line_no);
    l.length = parse_number(tokens[3], name, line_no);
    l.free_flow_time = parse_number(tokens[4], name, line_no);
    if (tokens.size() > 5) l.b = parse_number(tokens[5], name, line_no);
    if (tokens.size() > 6) l.power = parse_number(tokens[6], name, line_no);
    if (tokens.size() > 7) l.speed = parse_number(tokens[7], name, line_no);
    if (tokens.size() > 8) l.toll = parse_number(tokens[8], name, line_no);
    if (tokens.size() > 9) l.type = static_cast<int>(parse_integer(tokens[9], name, line_no));
    if (!(l.capacity > 0.0)) {
      throw NonPositiveParameterError(name + ":" + std::to_string(line_no) + ": capacity must be positive, got " + tokens[2]);
    }
    if (!(l.free_flow_time > 0.0)) {
      throw NonPositiveParameterError(name + ":" + std::to_string(line_no) + ": free-flow time must be positive, got " + tokens[4]);
    }
    // Endpoints are stored as raw ids here and remapped once all nodes are known.
    l.tail = static_cast<NodeIndex>(tail);
    l.head = static_cast<NodeIndex>(head);
    seen_nodes[tail] = true;
    seen_nodes[head] = true;
    net.links.push_back(l);
  }
  if (declared_links >= 0 && static_cast<std::size_t>(declared_links) != net.links.size()) {
    throw ParseError(name, line_no, "declared " + std::to_string(declared_links) + " links but found " +
                                        std::to_string(net.links.size()));
  }
  if (declared_nodes > 0) {
    for (long id = 1; id <= declared_nodes; ++id) net.node_ids.push_back(id);
    for (const auto& [id, _] : seen_nodes) {
      if (id < 1 || id > declared_nodes) {
        throw ParseError(name, line_no, "node id " + std::to_string(id) + " outside 1.." +
                                            std::to_string(declared_nodes));
      }
    }
  } else {
    for (const auto& [id, _] : seen_nodes) net.node_ids.push_back(id);
  }
  std::map<long, NodeIndex> index;
  for (NodeIndex v = 0; v < net.node_ids.size(); ++v) index[net.node_ids[v]] = v;
  for (Link& l : net.links) {
    l.tail = index.at(static_cast<long>(l.tail));
    l.head = index.at(static_cast<long>(l.head));
  }
  return net;
}

std::vector<std::tuple<long, long, double>> read_trips(std::istream& in, const std::string& name) {
  std::vector<std::tuple<long, long, double>> trips;
  std::string raw;
  std::size_t line_no = 0;
  std::optional<long> origin;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = trim(raw);
    if (line.empty() || line[0] == '~' || line[0] == '<') continue;
    if (line.rfind("Origin", 0) == 0) {
      origin = parse_integer(trim(line.substr(6)), name, line_no);
      continue;
    }
    if (!origin) throw ParseError(name, line_no, "trip entries before any 'Origin' line");
    for (const std::string& entry : split(line, ';')) {
      if (entry.empty()) continue;
      const auto colon = entry.find(':');
      if (colon == std::string::npos) throw ParseError(name, line_no, "expected 'destination : trips'");
      const long dest = parse_integer(trim(entry.substr(0, colon)), name, line_no);
      const double value = parse_number(trim(entry.substr(colon + 1)), name, line_no);
      if (value < 0.0) throw ParseError(name, line_no, "negative trips");
      trips.emplace_back(*origin, dest, value);
    }
  }
  return trips;
}

LoadedNetwork assemble(const NetFile& net, const std::vector<std::tuple<long, long, double>>& trips) {
  std::map<long, NodeIndex> index;
  for (NodeIndex v = 0; v < net.node_ids.size(); ++v) index[net.node_ids[v]] = v;
  std::vector<OdPair> pairs;
  std::vector<double> values;
  std::map<std::pair<NodeIndex, NodeIndex>, std::size_t> seen;
  for (const auto& [o, d, value] : trips) {
    if (value <= 0.0 || o == d) continue;
    const auto io = index.find(o);
    const auto id = index.find(d);
    if (io == index.end()) throw DataError("trips reference unknown origin node " + std::to_string(o));
    if (id == index.end()) throw DataError("trips reference unknown destination node " + std::to_string(d));
    const auto key = std::make_pair(io->second, id->second);
    if (const auto it = seen.find(key); it != seen.end()) {
      values[it->second] += value;
      continue;
    }
    seen.emplace(key, pairs.size());
    pairs.push_back({io->second, id->second});
    values.push_back(value);
  }
  Network network(net.node_ids, net.links, std::move(pairs));
  network.zone_count = net.zone_count;
  network.first_thru_node = net.first_thru_node;
  Vector g(static_cast<Eigen::Index>(values.size()));
  for (std::size_t i = 0; i < values.size(); ++i) g[static_cast<Eigen::Index>(i)] = values[i];
  return {std::move(network), DemandVector(std::move(g))};
}

LoadedNetwork load_network(const std::filesystem::path& net_file, const std::filesystem::path& trips_file) {
  std::ifstream net_in(net_file);
  if (!net_in) throw DataError("cannot open network file " + net_file.string());
  std::ifstream trips_in(trips_file);
  if (!trips_in) throw DataError("cannot open trips file " + trips_file.string());
  const NetFile net = read_net(net_in, net_file.string());
  const auto trips = read_trips(trips_in, trips_file.string());
  return assemble(net, trips);
}

void write_net(std::ostream& out, const Network& network) {
  out << "<NUMBER OF ZONES> " << network.zone_count << "\n";
  out << "<NUMBER OF NODES> " << network.node_count() << "\n";
  out << "<FIRST THRU NODE> " << network.first_thru_node << "\n";
  out << "<NUMBER OF LINKS> " << network.link_count() << "\n";
  out << "<END OF METADATA>\n\n\n";
  out << "~\tInit node\tTerm node\tCapacity\tLength\tFree Flow Time\tB\tPower\tSpeed limit\tToll\tType\t;\n";
  for (const Link& l : network.links()) {
    out << '\t' << network.node_id(l.tail) << '\t' << network.node_id(l.head) << '\t' << format_double(l.capacity)
        << '\t' << format_double(l.length) << '\t' << format_double(l.free_flow_time) << '\t'
        << format_double(l.b) << '\t' << format_double(l.power) << '\t' << format_double(l.speed) << '\t'
        << format_double(l.toll) << '\t' << l.type << "\t;\n";
  }
}

void write_trips(std::ostream& out, const Network& network, const DemandVector& demand) {
  double total = 0.0;
  for (std::size_t w = 0; w < demand.size(); ++w) total += demand[w];
  out << "<NUMBER OF ZONES> " << network.zone_count << "\n";
  out << "<TOTAL OD FLOW> " << format_double(total) << "\n";
  out << "<END OF METADATA>\n\n\n";
  std::map<NodeIndex, std::vector<std::size_t>> by_origin;
  for (std::size_t w = 0; w < network.od_count(); ++w) by_origin[network.od_pair(w).origin].push_back(w);
  for (const auto& [origin, pairs] : by_origin) {
    out << "Origin " << network.node_id(origin) << "\n";
    for (std::size_t w : pairs) {
      out << "    " << network.node_id(network.od_pair(w).destination) << " : " << format_double(demand[w]) << ";\n";
    }
    out << "\n";
  }
}

// ---- CSV --------------------------------------------------------------------

std::vector<FlowState> read_flows(std::istream& in, const std::string& name, const Network& network) {
  std::string raw;
  std::size_t line_no = 0;
  std::optional<std::size_t> columns;
  std::vector<std::vector<double>> rows(network.link_count());
  std::vector<char> filled(network.link_count(), 0);
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    const auto cells = split(line, ',');
    if (!columns) {
      if (cells.size() < 2) throw ParseError(name, line_no, "expected link_id plus at least one observation column");
      columns = cells.size();
      if (cells[0] == "link_id") continue;
    }
    if (cells.size() != *columns) {
      throw ParseError(name, line_no, "column count mismatch: expected " + std::to_string(*columns) + ", got " +
                                          std::to_string(cells.size()));
    }
    const long id = parse_integer(cells[0], name, line_no);
    if (id < 1 || static_cast<std::size_t>(id) > network.link_count()) {
      throw ParseError(name, line_no, "unknown link id " + std::to_string(id));
    }
    const auto a = static_cast<std::size_t>(id - 1);
    if (filled[a]) throw ParseError(name, line_no, "duplicate link id " + std::to_string(id));
    filled[a] = 1;
    for (std::size_t c = 1; c < cells.size(); ++c) {
      const double v = parse_number(cells[c], name, line_no);
      if (v < 0.0) throw ParseError(name, line_no, "negative flow " + cells[c] + " on link " + std::to_string(id));
      rows[a].push_back(v);
    }
  }
  if (!columns) throw ParseError(name, line_no, "no flow rows");
  for (std::size_t a = 0; a < filled.size(); ++a) {
    if (!filled[a]) throw ParseError(name, line_no, "missing row for link " + std::to_string(a + 1));
  }
  const std::size_t k = *columns - 1;
  std::vector<FlowState> out(k);
  for (std::size_t c = 0; c < k; ++c) {
    out[c].x.resize(static_cast<Eigen::Index>(network.link_count()));
    for (std::size_t a = 0; a < network.link_count(); ++a) out[c].x[static_cast<Eigen::Index>(a)] = rows[a][c];
  }
  return out;
}

std::vector<FlowState> load_flows(const std::filesystem::path& csv_file, const Network& network) {
  std::ifstream in(csv_file);
  if (!in) throw DataError("cannot open flows file " + csv_file.string());
  return read_flows(in, csv_file.string(), network);
}

void write_flows(std::ostream& out, const std::vector<Vector>& observations) {
  out << "link_id";
  for (std::size_t k = 0; k < observations.size(); ++k) out << ",obs_" << (k + 1);
  out << "\n";
  const Eigen::Index m = observations.empty() ? 0 : observations.front().size();
  for (Eigen::Index a = 0; a < m; ++a) {
    out << (a + 1);
    for (const Vector& x : observations) out << ',' << format_double(x[a]);
    out << "\n";
  }
}

std::vector<DemandVector> read_demands(std::istream& in, const std::string& name, const Network& network) {
  std::string raw;
  std::size_t line_no = 0;
  std::optional<std::size_t> columns;
  std::vector<Vector> cols;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    const auto cells = split(line, ',');
    if (!columns) {
      if (cells.size() < 3) throw ParseError(name, line_no, "expected origin,destination,demand columns");
      columns = cells.size();
      cols.assign(cells.size() - 2, Vector::Zero(static_cast<Eigen::Index>(network.od_count())));
      if (cells[0] == "origin") continue;
    }
    if (cells.size() != *columns) throw ParseError(name, line_no, "column count mismatch");
    const NodeIndex o = network.node_index(parse_integer(cells[0], name, line_no));
    const NodeIndex d = network.node_index(parse_integer(cells[1], name, line_no));
    const auto w = network.find_od(o, d);
    for (std::size_t c = 2; c < cells.size(); ++c) {
      const double v = parse_number(cells[c], name, line_no);
      if (v < 0.0) throw ParseError(name, line_no, "negative demand");
      if (!w) {
        if (v != 0.0) throw ParseError(name, line_no, "demand for an OD pair not in the network: " + cells[0] + "," + cells[1]);
        continue;
      }
      cols[c - 2][static_cast<Eigen::Index>(*w)] = v;
    }
  }
  if (!columns) throw ParseError(name, line_no, "no demand rows");
  std::vector<DemandVector> out;
  for (auto& c : cols) out.emplace_back(std::move(c));
  return out;
}

std::vector<DemandVector> load_demands(const std::filesystem::path& csv_file, const Network& network) {
  std::ifstream in(csv_file);
  if (!in) throw DataError("cannot open demand file " + csv_file.string());
  return read_demands(in, csv_file.string(), network);
}

void write_demand(std::ostream& out, const Network& network, const DemandVector& demand) {
  out << "origin,destination,demand\n";
  for (std::size_t w = 0; w < network.od_count(); ++w) {
    const OdPair& od = network.od_pair(w);
    out << network.node_id(od.origin) << ',' << network.node_id(od.destination) << ',' << format_double(demand[w])
        << "\n";
  }
}

}  // namespace tapkit
