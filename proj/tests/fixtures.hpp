#pragma once

#include "tapkit/inverse_vi.hpp"
#include "tapkit/latency.hpp"
#include "tapkit/network.hpp"

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

namespace fixtures {

using tapkit::LoadedNetwork;

std::string data_path(const std::string& file);

LoadedNetwork sioux_falls();

/// f(s) = 1 + s. With it, t0 = m = delta gives t(x) = delta + x and a huge m
/// gives an (almost) constant latency t0.
tapkit::CongestionFactor linear();

inline constexpr double kDelta = 1e-9;
inline constexpr double kHuge = 1e12;

/// Two parallel links 1->2: t1 = 1 and t2 = delta + x, demand 1. A return
/// link 2->1 keeps the graph strongly connected.
LoadedNetwork pigou(double demand = 1.0);

/// Classic four-node Braess network with demand 4000: s->a and b->t cost
/// x/100, a->t and s->b cost 45, optional free shortcut a->b.
LoadedNetwork braess(bool shortcut);

/// Two-link chain 1->2->3 plus return links; single OD (1,3).
LoadedNetwork chain3(double demand);

/// Frank-Wolfe equilibria (relative gap 1e-10) of the network's demand
/// scaled by each factor, as inverse-problem observations.
std::vector<tapkit::Observation> equilibrium_scenarios(const LoadedNetwork& ln, const tapkit::CongestionFactor& cf,
                                                       const std::vector<double>& scalings);

/// Every simple route between two nodes (depth-first), as link lists.
std::vector<tapkit::Route> all_simple_routes(const tapkit::Network& net, tapkit::NodeIndex from,
                                             tapkit::NodeIndex to);

/// Uncongested network with planted route-choice probabilities and demand.
/// OD pair i runs o_i -> h_i -> m_ij -> d_i; the access link o_i -> h_i
/// carries all of g_i and every route has two private links, so each route
/// flow is identified. A ring d_i -> o_(i+1) keeps the graph strongly
/// connected and carries nothing. Route j of every pair has free-flow time
/// 2 (5 + j) after the access link, so k-shortest enumeration returns the
/// routes in construction order.
struct PlantedGls {
  LoadedNetwork ln;                        // demand = planted g
  std::vector<tapkit::Vector> probabilities;  // planted rows of P
  tapkit::Vector xi;                       // P'g, stacked by OD then route
  std::vector<std::vector<tapkit::Route>> routes;
  double sigma = 0.0;
  /// x_k = A xi + sigma N(0, 1) on every loaded link; ring links stay 0.
  std::vector<tapkit::Vector> observations;
};

PlantedGls planted_gls(std::size_t observations, double sigma, std::uint64_t seed);

}  // namespace fixtures

namespace fixtures {

/// Accelerated projected gradient for min 1/2 z'Qz + q'z over a set with a
/// cheap Euclidean projection. Independent of the interior-point solver.
tapkit::Vector projected_gradient(const tapkit::Matrix& Q, const tapkit::Vector& q, tapkit::Vector z,
                                  const std::function<tapkit::Vector(const tapkit::Vector&)>& project,
                                  int iterations = 20000);

/// Euclidean projection onto {z >= 0, sum z = total}.
tapkit::Vector project_simplex(const tapkit::Vector& v, double total = 1.0);

/// Random symmetric PSD matrix with the given rank.
tapkit::Matrix random_psd(std::mt19937_64& rng, int n, int rank);

}  // namespace fixtures
