#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <unordered_map>
#include <utility>
#include <vector>

namespace tapkit {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

using NodeIndex = std::size_t;
using LinkIndex = std::size_t;

/// A directed road segment between two dense node indices.
struct Link {
  NodeIndex tail = 0;
  NodeIndex head = 0;
  double free_flow_time = 0.0;  // t0, minutes
  double capacity = 0.0;        // m, vehicles/hour

  // Remaining benchmark columns. Solvers ignore them; they are kept so a
  // loaded file can be written back unchanged.
  double length = 0.0;
  double b = 0.15;
  double power = 4.0;
  double speed = 0.0;
  double toll = 0.0;
  int type = 1;
};

struct OdPair {
  NodeIndex origin = 0;
  NodeIndex destination = 0;

  friend bool operator==(const OdPair&, const OdPair&) = default;
};

/// Road network (V, A, W). Immutable once constructed; the constructor
/// enforces positivity of link parameters, absence of self loops, unique
/// OD pairs and strong connectivity.
class Network {
 public:
  Network(std::vector<long> node_ids, std::vector<Link> links, std::vector<OdPair> od_pairs);

  std::size_t node_count() const noexcept { return node_ids_.size(); }
  std::size_t link_count() const noexcept { return links_.size(); }
  std::size_t od_count() const noexcept { return od_pairs_.size(); }

  const Link& link(LinkIndex a) const { return links_.at(a); }
  std::span<const Link> links() const noexcept { return links_; }
  const OdPair& od_pair(std::size_t w) const { return od_pairs_.at(w); }
  std::span<const OdPair> od_pairs() const noexcept { return od_pairs_; }

  /// Original (file) id of a dense node index.
  long node_id(NodeIndex v) const { return node_ids_.at(v); }
  std::span<const long> node_ids() const noexcept { return node_ids_; }
  /// Dense index of an original node id; throws DataError when unknown.
  NodeIndex node_index(long id) const;
  std::optional<std::size_t> find_od(NodeIndex origin, NodeIndex destination) const;

  /// Outgoing links of v ordered by (head index, link index).
  std::span<const LinkIndex> out_links(NodeIndex v) const { return out_.at(v); }
  std::span<const LinkIndex> in_links(NodeIndex v) const { return in_.at(v); }

  Vector free_flow_times() const;
  Vector capacities() const;

  /// Copy with a different OD pair list (validated).
  Network with_od_pairs(std::vector<OdPair> od_pairs) const;
  /// Copy with replaced free-flow times and capacities (validated).
  Network with_link_parameters(const Vector& free_flow_times, const Vector& capacities) const;

  // Benchmark metadata, carried for round-trip serialization.
  long zone_count = 0;
  long first_thru_node = 1;

 private:
  void validate() const;
  void build_adjacency();

  std::vector<long> node_ids_;
  std::vector<Link> links_;
  std::vector<OdPair> od_pairs_;
  std::unordered_map<long, NodeIndex> index_of_;
  std::unordered_map<std::size_t, std::size_t> od_lookup_;
  std::vector<std::vector<LinkIndex>> out_;
  std::vector<std::vector<LinkIndex>> in_;
};

/// Nonnegative demand per OD pair, indexed like Network::od_pairs().
class DemandVector {
 public:
  DemandVector() = default;
  explicit DemandVector(Vector g);
  static DemandVector zeros(std::size_t n) { return DemandVector(Vector::Zero(static_cast<Eigen::Index>(n))); }

  const Vector& values() const noexcept { return g_; }
  double operator[](std::size_t i) const { return g_[static_cast<Eigen::Index>(i)]; }
  std::size_t size() const noexcept { return static_cast<std::size_t>(g_.size()); }

 private:
  Vector g_;
};

/// A route is the ordered list of links it traverses.
using Route = std::vector<LinkIndex>;

/// Route-level decomposition of one OD pair's flow.
struct OdRouteFlows {
  std::vector<Route> routes;
  std::vector<double> flows;

  double total() const;
  /// Adds `amount` to `route`, appending it when not yet present.
  void add(const Route& route, double amount);
};

/// Link flow vector with an optional per-OD decomposition.
struct FlowState {
  Vector x;
  std::optional<std::vector<OdRouteFlows>> decomposition;

  /// Link flows attributed to OD pair w (x^w). Requires a decomposition.
  Vector od_link_flows(std::size_t w, std::size_t link_count) const;
};

/// Node-link incidence matrix: column a has -1 at the tail and +1 at the head.
Matrix incidence(const Network& network);

/// d^w: -demand at the origin and +demand at the destination.
Vector node_demand(const Network& network, std::size_t w, double demand);

struct FeasibilityReport {
  bool feasible = true;
  double max_conservation_error = 0.0;  // max_w ||N x^w - d^w||_inf relative to 1 + ||d^w||
  double max_aggregation_error = 0.0;   // max_a |x_a - sum_w x^w_a| / (1 + sum_w x^w_a)
  double min_flow = 0.0;
  std::string reason;
};

/// Checks x in F: x >= 0, x = sum_w x^w, N x^w = d^w within 1e-6 (1 + ||d^w||).
FeasibilityReport check_feasible(const Network& network, const DemandVector& demand,
                                 const FlowState& flow, double tol = 1e-6);

// ---- ingestion and serialization -------------------------------------------

struct LoadedNetwork {
  Network network;
  DemandVector demand;
};

/// Reads a benchmark net file and trips file. OD pairs are every
/// (origin, destination) with positive trips, in file order.
LoadedNetwork load_network(const std::filesystem::path& net_file,
                           const std::filesystem::path& trips_file);

struct NetFile {
  std::vector<long> node_ids;
  std::vector<Link> links;
  long zone_count = 0;
  long first_thru_node = 1;
};

NetFile read_net(std::istream& in, const std::string& name);

/// (origin id, destination id, trips) triples in file order, zeros included.
std::vector<std::tuple<long, long, double>> read_trips(std::istream& in, const std::string& name);

/// Builds a network from a parsed net file and trip table; zero-trip pairs dropped.
LoadedNetwork assemble(const NetFile& net, const std::vector<std::tuple<long, long, double>>& trips);

void write_net(std::ostream& out, const Network& network);
void write_trips(std::ostream& out, const Network& network, const DemandVector& demand);

/// Reads `link_id,obs_1,...,obs_K` (link ids are 1-based file positions).
std::vector<FlowState> load_flows(const std::filesystem::path& csv_file, const Network& network);
std::vector<FlowState> read_flows(std::istream& in, const std::string& name, const Network& network);
void write_flows(std::ostream& out, const std::vector<Vector>& observations);

/// Reads `origin,destination,d_1[,d_2...]` into one DemandVector per column.
/// Pairs absent from the file get zero demand; unknown pairs are an error.
std::vector<DemandVector> read_demands(std::istream& in, const std::string& name, const Network& network);
std::vector<DemandVector> load_demands(const std::filesystem::path& csv_file, const Network& network);
void write_demand(std::ostream& out, const Network& network, const DemandVector& demand);

/// All ordered pairs of distinct nodes.
std::vector<OdPair> all_od_pairs(std::size_t node_count);

/// Formats a double with 17 significant digits.
std::string format_double(double v);

}  // namespace tapkit
