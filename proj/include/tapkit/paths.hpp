#pragma once

#include "tapkit/network.hpp"

#include <cstddef>
#include <limits>
#include <vector>

namespace tapkit {

inline constexpr LinkIndex kNoLink = std::numeric_limits<LinkIndex>::max();

/// Shortest-distance in-tree toward one destination. next_link[v] is the
/// first link of the lexicographically smallest (by node index) shortest
/// route from v; kNoLink at the destination or when v cannot reach it.
struct DestinationTree {
  NodeIndex destination = 0;
  std::vector<double> distance;
  std::vector<LinkIndex> next_link;
  /// Reached nodes in nondecreasing distance order.
  std::vector<NodeIndex> settle_order;

  bool reaches(NodeIndex v) const { return distance[v] < std::numeric_limits<double>::infinity(); }
};

/// Links and nodes removed from the graph for one search.
struct Exclusions {
  std::vector<char> node;  // indexed by node, may be empty
  std::vector<char> link;  // indexed by link, may be empty

  bool has_node(NodeIndex v) const { return !node.empty() && node[v]; }
  bool has_link(LinkIndex a) const { return !link.empty() && link[a]; }
};

struct ShortestRoute {
  Route links;
  std::vector<NodeIndex> nodes;
  double cost = 0.0;
};

/// Label-setting search backwards from `destination`. Costs must be positive.
DestinationTree destination_tree(const Network& network, const Vector& costs, NodeIndex destination,
                                 const Exclusions* excluded = nullptr);

/// Follows the tree from `origin`. Throws SolverError when unreachable.
ShortestRoute route_from(const Network& network, const DestinationTree& tree, NodeIndex origin);

double route_cost(const Route& route, const Vector& costs);
std::vector<NodeIndex> route_nodes(const Network& network, const Route& route);
bool is_simple(const Network& network, const Route& route);

/// One minimum-cost simple route per OD pair. Ties go to the lexicographically
/// smallest node sequence, then to the lower link index.
std::vector<ShortestRoute> shortest_routes(const Network& network, const Vector& costs);

/// Loads each OD demand onto its shortest route. The result carries a
/// per-OD route decomposition unless `with_decomposition` is false.
FlowState all_or_nothing(const Network& network, const DemandVector& demand, const Vector& costs,
                         bool with_decomposition = true);

/// Up to k distinct simple routes ordered by cost (deviation-based search).
std::vector<ShortestRoute> k_shortest_simple(const Network& network, const OdPair& od, std::size_t k,
                                             const Vector& costs);

/// Enumerated routes R_i for every OD pair i.
struct RouteSet {
  std::vector<std::vector<Route>> routes;  // routes[i] = R_i

  std::size_t route_count() const;
  /// OD index owning each column of the stacked incidence.
  std::vector<std::size_t> route_owner() const;
  /// Stacked link-route incidence (|A| x total routes); entry 1 iff the route uses the link.
  Matrix incidence(std::size_t link_count) const;
};

RouteSet enumerate_routes(const Network& network, std::size_t k, const Vector& costs);

}  // namespace tapkit
