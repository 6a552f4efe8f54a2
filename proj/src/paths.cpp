#include "tapkit/paths.hpp"

#include "tapkit/error.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <queue>
#include <set>

namespace tapkit {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

bool tied(double a, double b) { return std::abs(a - b) <= 1e-12 * std::max(1.0, std::max(std::abs(a), std::abs(b))); }

void require_positive_costs(const Vector& costs) {
  for (Eigen::Index a = 0; a < costs.size(); ++a) {
    if (!(costs[a] > 0.0)) throw DataError("link costs must be positive (link " + std::to_string(a + 1) + ")");
  }
}

// Ordering used for candidate routes: cost, then node sequence, then links.
bool route_less(const ShortestRoute& a, const ShortestRoute& b) {
  if (!tied(a.cost, b.cost)) return a.cost < b.cost;
  if (a.nodes != b.nodes) return a.nodes < b.nodes;
  return a.links < b.links;
}

}  // namespace

DestinationTree destination_tree(const Network& network, const Vector& costs, NodeIndex destination,
                                 const Exclusions* excluded) {
  require_positive_costs(costs);
  const std::size_t n = network.node_count();
  DestinationTree tree;
  tree.destination = destination;
  tree.distance.assign(n, kInf);
  tree.next_link.assign(n, kNoLink);
  if (excluded && excluded->has_node(destination)) return tree;

  using Item = std::pair<double, NodeIndex>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
  std::vector<char> done(n, 0);
  tree.distance[destination] = 0.0;
  heap.emplace(0.0, destination);
  while (!heap.empty()) {
    const auto [d, v] = heap.top();
    heap.pop();
    if (done[v]) continue;
    done[v] = 1;
    tree.settle_order.push_back(v);
    for (LinkIndex a : network.in_links(v)) {
      if (excluded && excluded->has_link(a)) continue;
      const NodeIndex u = network.link(a).tail;
      if (excluded && excluded->has_node(u)) continue;
      const double cand = d + costs[static_cast<Eigen::Index>(a)];
      if (cand < tree.distance[u]) {
        tree.distance[u] = cand;
        heap.emplace(cand, u);
      }
    }
  }

  // Out-links are sorted by head index, so the first tight link gives the
  // lexicographically smallest continuation. Only heads settled earlier
  // qualify; comparing distances instead breaks when a cost is below the
  // rounding of the distance.
  std::vector<std::size_t> rank(n, n);
  for (std::size_t i = 0; i < tree.settle_order.size(); ++i) rank[tree.settle_order[i]] = i;
  for (NodeIndex u = 0; u < n; ++u) {
    if (u == destination || !tree.reaches(u)) continue;
    for (LinkIndex a : network.out_links(u)) {
      if (excluded && excluded->has_link(a)) continue;
      const NodeIndex v = network.link(a).head;
      if (!tree.reaches(v) || (excluded && excluded->has_node(v))) continue;
      if (rank[v] < rank[u] && tied(costs[static_cast<Eigen::Index>(a)] + tree.distance[v], tree.distance[u])) {
        tree.next_link[u] = a;
        break;
      }
    }
  }
  return tree;
}

ShortestRoute route_from(const Network& network, const DestinationTree& tree, NodeIndex origin) {
  if (!tree.reaches(origin)) {
    throw SolverError("node " + std::to_string(network.node_id(tree.destination)) + " is unreachable from node " +
                      std::to_string(network.node_id(origin)));
  }
  ShortestRoute r;
  r.cost = tree.distance[origin];
  r.nodes.push_back(origin);
  NodeIndex u = origin;
  while (u != tree.destination) {
    const LinkIndex a = tree.next_link[u];
    if (a == kNoLink) throw SolverError("broken shortest-path tree");
    r.links.push_back(a);
    u = network.link(a).head;
    r.nodes.push_back(u);
  }
  return r;
}

double route_cost(const Route& route, const Vector& costs) {
  double c = 0.0;
  for (LinkIndex a : route) c += costs[static_cast<Eigen::Index>(a)];
  return c;
}

std::vector<NodeIndex> route_nodes(const Network& network, const Route& route) {
  std::vector<NodeIndex> nodes;
  if (route.empty()) return nodes;
  nodes.push_back(network.link(route.front()).tail);
  for (LinkIndex a : route) nodes.push_back(network.link(a).head);
  return nodes;
}

bool is_simple(const Network& network, const Route& route) {
  auto nodes = route_nodes(network, route);
  for (std::size_t i = 1; i < route.size(); ++i) {
    if (network.link(route[i - 1]).head != network.link(route[i]).tail) return false;
  }
  std::sort(nodes.begin(), nodes.end());
  return std::adjacent_find(nodes.begin(), nodes.end()) == nodes.end();
}

std::vector<ShortestRoute> shortest_routes(const Network& network, const Vector& costs) {
  std::vector<ShortestRoute> out(network.od_count());
  std::vector<std::vector<std::size_t>> by_dest(network.node_count());
  for (std::size_t w = 0; w < network.od_count(); ++w) by_dest[network.od_pair(w).destination].push_back(w);
  for (NodeIndex d = 0; d < network.node_count(); ++d) {
    if (by_dest[d].empty()) continue;
    const DestinationTree tree = destination_tree(network, costs, d);
    for (std::size_t w : by_dest[d]) out[w] = route_from(network, tree, network.od_pair(w).origin);
  }
  return out;
}

FlowState all_or_nothing(const Network& network, const DemandVector& demand, const Vector& costs,
                         bool with_decomposition) {
  if (demand.size() != network.od_count()) throw DataError("demand vector does not match OD pairs");
  const std::size_t n = network.node_count();
  FlowState state;
  state.x = Vector::Zero(static_cast<Eigen::Index>(network.link_count()));
  if (with_decomposition) state.decomposition.emplace(network.od_count());

  std::vector<std::vector<std::size_t>> by_dest(n);
  for (std::size_t w = 0; w < network.od_count(); ++w) by_dest[network.od_pair(w).destination].push_back(w);

  std::vector<double> load(n);
  for (NodeIndex d = 0; d < n; ++d) {
    if (by_dest[d].empty()) continue;
    const DestinationTree tree = destination_tree(network, costs, d);
    std::fill(load.begin(), load.end(), 0.0);
    for (std::size_t w : by_dest[d]) {
      const NodeIndex o = network.od_pair(w).origin;
      if (!tree.reaches(o)) {
        throw SolverError("node " + std::to_string(network.node_id(d)) + " is unreachable from node " +
                          std::to_string(network.node_id(o)));
      }
      load[o] += demand[w];
      if (with_decomposition) {
        (*state.decomposition)[w].add(route_from(network, tree, o).links, demand[w]);
      }
    }
    // Push loads down the tree, farthest nodes first.
    for (auto it = tree.settle_order.rbegin(); it != tree.settle_order.rend(); ++it) {
      const NodeIndex u = *it;
      if (u == d || load[u] == 0.0) continue;
      const LinkIndex a = tree.next_link[u];
      state.x[static_cast<Eigen::Index>(a)] += load[u];
      load[network.link(a).head] += load[u];
    }
  }
  return state;
}

std::vector<ShortestRoute> k_shortest_simple(const Network& network, const OdPair& od, std::size_t k,
                                             const Vector& costs) {
  if (k == 0) throw DataError("k must be at least 1");
  std::vector<ShortestRoute> accepted;
  const DestinationTree first = destination_tree(network, costs, od.destination);
  accepted.push_back(route_from(network, first, od.origin));

  std::vector<ShortestRoute> candidates;
  auto known = [&](const Route& links) {
    for (const auto& r : accepted) {
      if (r.links == links) return true;
    }
    for (const auto& r : candidates) {
      if (r.links == links) return true;
    }
    return false;
  };

  while (accepted.size() < k) {
    const ShortestRoute prev = accepted.back();
    for (std::size_t i = 0; i + 1 < prev.nodes.size(); ++i) {
      const NodeIndex spur = prev.nodes[i];
      Exclusions ex;
      ex.node.assign(network.node_count(), 0);
      ex.link.assign(network.link_count(), 0);
      for (std::size_t j = 0; j < i; ++j) ex.node[prev.nodes[j]] = 1;
      for (const auto& r : accepted) {
        if (r.links.size() > i && std::equal(r.links.begin(), r.links.begin() + static_cast<std::ptrdiff_t>(i),
                                             prev.links.begin())) {
          ex.link[r.links[i]] = 1;
        }
      }
      const DestinationTree tree = destination_tree(network, costs, od.destination, &ex);
      if (!tree.reaches(spur)) continue;
      const ShortestRoute tail = route_from(network, tree, spur);
      ShortestRoute cand;
      cand.links.assign(prev.links.begin(), prev.links.begin() + static_cast<std::ptrdiff_t>(i));
      cand.links.insert(cand.links.end(), tail.links.begin(), tail.links.end());
      if (known(cand.links)) continue;
      cand.nodes = route_nodes(network, cand.links);
      cand.cost = route_cost(cand.links, costs);
      candidates.push_back(std::move(cand));
    }
    if (candidates.empty()) break;
    const auto best = std::min_element(candidates.begin(), candidates.end(), route_less);
    accepted.push_back(*best);
    candidates.erase(best);
  }
  return accepted;
}

std::size_t RouteSet::route_count() const {
  std::size_t n = 0;
  for (const auto& r : routes) n += r.size();
  return n;
}

std::vector<std::size_t> RouteSet::route_owner() const {
  std::vector<std::size_t> owner;
  for (std::size_t i = 0; i < routes.size(); ++i) owner.insert(owner.end(), routes[i].size(), i);
  return owner;
}

Matrix RouteSet::incidence(std::size_t link_count) const {
  Matrix a = Matrix::Zero(static_cast<Eigen::Index>(link_count), static_cast<Eigen::Index>(route_count()));
  Eigen::Index col = 0;
  for (const auto& od_routes : routes) {
    for (const Route& r : od_routes) {
      for (LinkIndex l : r) a(static_cast<Eigen::Index>(l), col) = 1.0;
      ++col;
    }
  }
  return a;
}

RouteSet enumerate_routes(const Network& network, std::size_t k, const Vector& costs) {
  RouteSet set;
  set.routes.reserve(network.od_count());
  for (const OdPair& od : network.od_pairs()) {
    std::vector<Route> routes;
    for (auto& r : k_shortest_simple(network, od, k, costs)) routes.push_back(std::move(r.links));
    set.routes.push_back(std::move(routes));
  }
  return set;
}

}  // namespace tapkit
