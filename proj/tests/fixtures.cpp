#include "fixtures.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <functional>

namespace fixtures {

using tapkit::Link;
using tapkit::Network;
using tapkit::OdPair;

std::string data_path(const std::string& file) { return std::string(TAPKIT_DATA_DIR) + "/" + file; }

LoadedNetwork sioux_falls() {
  return tapkit::load_network(data_path("SiouxFalls_net.tntp"), data_path("SiouxFalls_trips.tntp"));
}

tapkit::CongestionFactor linear() { return tapkit::CongestionFactor({1.0, 1.0}); }

namespace {

Link make_link(tapkit::NodeIndex tail, tapkit::NodeIndex head, double t0, double m) {
  Link l;
  l.tail = tail;
  l.head = head;
  l.free_flow_time = t0;
  l.capacity = m;
  return l;
}

}  // namespace

LoadedNetwork pigou(double demand) {
  std::vector<Link> links{make_link(0, 1, 1.0, kHuge), make_link(0, 1, kDelta, kDelta), make_link(1, 0, 1.0, 1.0)};
  Network net({1, 2}, links, {OdPair{0, 1}});
  return {net, tapkit::DemandVector(tapkit::Vector::Constant(1, demand))};
}

LoadedNetwork braess(bool shortcut) {
  // s=0, a=1, b=2, t=3
  std::vector<Link> links{make_link(0, 1, kDelta, 100 * kDelta), make_link(1, 3, 45.0, kHuge),
                          make_link(0, 2, 45.0, kHuge), make_link(2, 3, kDelta, 100 * kDelta),
                          make_link(3, 0, 1.0, 1.0)};
  if (shortcut) links.push_back(make_link(1, 2, kDelta, kHuge));
  Network net({1, 2, 3, 4}, links, {OdPair{0, 3}});
  return {net, tapkit::DemandVector(tapkit::Vector::Constant(1, 4000.0))};
}

LoadedNetwork chain3(double demand) {
  std::vector<Link> links{make_link(0, 1, 2.0, 10.0), make_link(1, 2, 3.0, 10.0), make_link(2, 1, 1.0, 10.0),
                          make_link(1, 0, 1.0, 10.0)};
  Network net({1, 2, 3}, links, {OdPair{0, 2}});
  return {net, tapkit::DemandVector(tapkit::Vector::Constant(1, demand))};
}

std::vector<tapkit::Observation> equilibrium_scenarios(const LoadedNetwork& ln, const tapkit::CongestionFactor& cf,
                                                       const std::vector<double>& scalings) {
  tapkit::FrankWolfeOptions opt;
  opt.tolerance = 1e-10;
  std::vector<tapkit::Observation> out;
  for (double s : scalings) {
    tapkit::DemandVector d(ln.demand.values() * s);
    auto rep = tapkit::solve_ue_fw(ln.network, d, cf, opt);
    out.push_back({ln.network, d, rep.flow.x});
  }
  return out;
}

PlantedGls planted_gls(std::size_t observations, double sigma, std::uint64_t seed) {
  const std::vector<double> g{1000.0, 600.0, 800.0};
  const std::vector<std::vector<double>> p{{0.7, 0.3}, {0.5, 0.3, 0.2}, {0.25, 0.75}};
  std::vector<Link> links;
  std::vector<std::vector<tapkit::Route>> routes;
  std::vector<tapkit::Vector> probabilities;
  std::vector<OdPair> ods;
  std::vector<tapkit::NodeIndex> origin;
  std::vector<tapkit::NodeIndex> dest;
  tapkit::NodeIndex next = 0;
  std::vector<double> xi;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const tapkit::NodeIndex o = next++;
    const tapkit::NodeIndex h = next++;
    const tapkit::NodeIndex d = next++;
    origin.push_back(o);
    dest.push_back(d);
    ods.push_back(OdPair{o, d});
    links.push_back(make_link(o, h, 1.0, 1e4));
    std::vector<tapkit::Route> rs;
    for (std::size_t j = 0; j < p[i].size(); ++j) {
      const tapkit::NodeIndex m = next++;
      const auto first = static_cast<tapkit::LinkIndex>(links.size());
      links.push_back(make_link(h, m, 5.0 + static_cast<double>(j), 1e4));
      links.push_back(make_link(m, d, 5.0 + static_cast<double>(j), 1e4));
      rs.push_back({first - 1 - 2 * j, first, first + 1});
      xi.push_back(p[i][j] * g[i]);
    }
    routes.push_back(rs);
    probabilities.push_back(Eigen::Map<const tapkit::Vector>(p[i].data(), static_cast<Eigen::Index>(p[i].size())));
  }
  for (std::size_t i = 0; i < g.size(); ++i) links.push_back(make_link(dest[i], origin[(i + 1) % g.size()], 1.0, 1e4));
  std::vector<long> ids(next);
  for (tapkit::NodeIndex v = 0; v < next; ++v) ids[v] = static_cast<long>(v) + 1;
  PlantedGls out{{Network(ids, links, ods), tapkit::DemandVector(Eigen::Map<const tapkit::Vector>(g.data(), 3))},
                 probabilities,
                 Eigen::Map<const tapkit::Vector>(xi.data(), static_cast<Eigen::Index>(xi.size())),
                 routes,
                 sigma,
                 {}};

  tapkit::Vector x = tapkit::Vector::Zero(static_cast<Eigen::Index>(links.size()));
  Eigen::Index col = 0;
  for (const auto& rs : out.routes) {
    for (const auto& r : rs) {
      for (tapkit::LinkIndex a : r) x[static_cast<Eigen::Index>(a)] += out.xi[col];
      ++col;
    }
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, sigma);
  for (std::size_t k = 0; k < observations; ++k) {
    tapkit::Vector xk = x;
    for (Eigen::Index a = 0; a < xk.size(); ++a) {
      if (x[a] > 0.0) xk[a] += noise(rng);
    }
    out.observations.push_back(xk);
  }
  return out;
}

std::vector<tapkit::Route> all_simple_routes(const Network& net, tapkit::NodeIndex from, tapkit::NodeIndex to) {
  std::vector<tapkit::Route> out;
  std::vector<char> seen(net.node_count(), 0);
  tapkit::Route cur;
  std::function<void(tapkit::NodeIndex)> dfs = [&](tapkit::NodeIndex u) {
    if (u == to) {
      out.push_back(cur);
      return;
    }
    seen[u] = 1;
    for (tapkit::LinkIndex a : net.out_links(u)) {
      const auto v = net.link(a).head;
      if (seen[v]) continue;
      cur.push_back(a);
      dfs(v);
      cur.pop_back();
    }
    seen[u] = 0;
  };
  dfs(from);
  return out;
}

}  // namespace fixtures

namespace fixtures {

tapkit::Vector projected_gradient(const tapkit::Matrix& Q, const tapkit::Vector& q, tapkit::Vector z,
                                  const std::function<tapkit::Vector(const tapkit::Vector&)>& project,
                                  int iterations) {
  Eigen::SelfAdjointEigenSolver<tapkit::Matrix> eig(Q, Eigen::EigenvaluesOnly);
  const double lipschitz = std::max(eig.eigenvalues().maxCoeff(), 1e-12);
  z = project(z);
  tapkit::Vector prev = z;
  tapkit::Vector v = z;
  double t = 1.0;
  for (int k = 0; k < iterations; ++k) {
    prev = z;
    z = project(v - (Q * v + q) / lipschitz);
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    v = z + ((t - 1.0) / t_next) * (z - prev);
    t = t_next;
    // Restart when momentum goes uphill.
    if ((z - prev).dot(Q * z + q) > 0.0) {
      v = z;
      t = 1.0;
    }
  }
  return z;
}

tapkit::Vector project_simplex(const tapkit::Vector& v, double total) {
  std::vector<double> u(v.data(), v.data() + v.size());
  std::sort(u.rbegin(), u.rend());
  double cum = 0.0;
  double theta = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    cum += u[i];
    const double th = (cum - total) / static_cast<double>(i + 1);
    if (u[i] - th > 0.0) theta = th;
  }
  return (v.array() - theta).max(0.0).matrix();
}

tapkit::Matrix random_psd(std::mt19937_64& rng, int n, int rank) {
  std::normal_distribution<double> nd;
  tapkit::Matrix b(n, rank);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < rank; ++j) b(i, j) = nd(rng);
  }
  return b * b.transpose();
}

}  // namespace fixtures
