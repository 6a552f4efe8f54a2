#pragma once

#include "tapkit/network.hpp"

#include <string>
#include <vector>

namespace tapkit {

/// Polynomial congestion factor f(s) = sum_i beta_i s^i with f(0) = beta_0 = 1.
/// A link's travel time is t0 * f(x / m).
class CongestionFactor {
 public:
  /// Throws DataError unless beta is nonempty and beta_0 == 1.
  explicit CongestionFactor(std::vector<double> beta);

  /// f(s) = 1 + 0.15 s^4.
  static CongestionFactor bpr();
  static CongestionFactor constant() { return CongestionFactor({1.0}); }

  int degree() const noexcept { return static_cast<int>(beta_.size()) - 1; }
  const std::vector<double>& beta() const noexcept { return beta_; }

  double value(double s) const;
  double derivative(double s) const;
  /// Integral of f over [0, s].
  double integral(double s) const;

  /// Smallest sampled derivative over [0, s_max] on a uniform grid. Negative
  /// means f is not nondecreasing on that range.
  double min_derivative(double s_max, int samples = 1000) const;

 private:
  std::vector<double> beta_;
};

/// t0 * f(x/m). Throws DataError when x < 0.
double travel_time(const CongestionFactor& cf, double t0, double m, double x);

/// Beckmann term: integral of t0 f(s/m) ds over [0, x], in closed form.
double beckmann_term(const CongestionFactor& cf, double t0, double m, double x);

/// d/dx [x t(x)] = t0 [f(x/m) + (x/m) f'(x/m)].
double marginal_cost(const CongestionFactor& cf, double t0, double m, double x);

/// d/dx t(x) = (t0/m) f'(x/m).
double travel_time_derivative(const CongestionFactor& cf, double t0, double m, double x);

/// Vectorized link travel times t_a(x_a).
Vector link_travel_times(const Network& network, const CongestionFactor& cf, const Vector& x);
Vector link_marginal_costs(const Network& network, const CongestionFactor& cf, const Vector& x);
/// sum_a beckmann_term(x_a).
double beckmann_objective(const Network& network, const CongestionFactor& cf, const Vector& x);

/// Largest normalized flow x_a/m_a over the given observations.
double max_normalized_flow(const Network& network, const std::vector<Vector>& flows);

/// Non-empty when the normalized flows exceed the range [0, validated_max]
/// over which f was checked to be nondecreasing.
std::string extrapolation_warning(const Network& network, const Vector& x, double validated_max);

}  // namespace tapkit
