#include "tapkit/latency.hpp"

#include "tapkit/error.hpp"

#include <algorithm>
#include <cmath>

namespace tapkit {

namespace {

void require_nonnegative(double x) {
  if (x < 0.0) throw DataError("negative flow " + format_double(x));
}

}  // namespace

CongestionFactor::CongestionFactor(std::vector<double> beta) : beta_(std::move(beta)) {
  if (beta_.empty()) throw DataError("congestion factor needs at least beta_0");
  if (beta_[0] != 1.0) throw DataError("congestion factor must satisfy f(0) = beta_0 = 1");
  for (double b : beta_) {
    if (!std::isfinite(b)) throw DataError("congestion factor coefficients must be finite");
  }
}

CongestionFactor CongestionFactor::bpr() { return CongestionFactor({1.0, 0.0, 0.0, 0.0, 0.15}); }

double CongestionFactor::value(double s) const {
  double acc = 0.0;
  for (auto it = beta_.rbegin(); it != beta_.rend(); ++it) acc = acc * s + *it;
  return acc;
}

double CongestionFactor::derivative(double s) const {
  double acc = 0.0;
  for (std::size_t i = beta_.size() - 1; i >= 1; --i) acc = acc * s + static_cast<double>(i) * beta_[i];
  return acc;
}

double CongestionFactor::integral(double s) const {
  double acc = 0.0;
  for (std::size_t i = beta_.size(); i-- > 0;) acc = acc * s + beta_[i] / static_cast<double>(i + 1);
  return acc * s;
}

double CongestionFactor::min_derivative(double s_max, int samples) const {
  double lo = derivative(0.0);
  for (int k = 1; k <= samples; ++k) lo = std::min(lo, derivative(s_max * k / samples));
  return lo;
}

double travel_time(const CongestionFactor& cf, double t0, double m, double x) {
  require_nonnegative(x);
  return t0 * cf.value(x / m);
}

double beckmann_term(const CongestionFactor& cf, double t0, double m, double x) {
  require_nonnegative(x);
  // integral_0^x t0 f(s/m) ds = t0 m F(x/m) where F is the antiderivative of f.
  return t0 * m * cf.integral(x / m);
}

double marginal_cost(const CongestionFactor& cf, double t0, double m, double x) {
  require_nonnegative(x);
  const double s = x / m;
  return t0 * (cf.value(s) + s * cf.derivative(s));
}

double travel_time_derivative(const CongestionFactor& cf, double t0, double m, double x) {
  require_nonnegative(x);
  return t0 / m * cf.derivative(x / m);
}

Vector link_travel_times(const Network& network, const CongestionFactor& cf, const Vector& x) {
  Vector t(x.size());
  for (Eigen::Index a = 0; a < x.size(); ++a) {
    const Link& l = network.link(static_cast<LinkIndex>(a));
    t[a] = travel_time(cf, l.free_flow_time, l.capacity, x[a]);
  }
  return t;
}

Vector link_marginal_costs(const Network& network, const CongestionFactor& cf, const Vector& x) {
  Vector t(x.size());
  for (Eigen::Index a = 0; a < x.size(); ++a) {
    const Link& l = network.link(static_cast<LinkIndex>(a));
    t[a] = marginal_cost(cf, l.free_flow_time, l.capacity, x[a]);
  }
  return t;
}

double beckmann_objective(const Network& network, const CongestionFactor& cf, const Vector& x) {
  double v = 0.0;
  for (Eigen::Index a = 0; a < x.size(); ++a) {
    const Link& l = network.link(static_cast<LinkIndex>(a));
    v += beckmann_term(cf, l.free_flow_time, l.capacity, x[a]);
  }
  return v;
}

double max_normalized_flow(const Network& network, const std::vector<Vector>& flows) {
  double s = 0.0;
  for (const Vector& x : flows) {
    for (Eigen::Index a = 0; a < x.size(); ++a) s = std::max(s, x[a] / network.link(static_cast<LinkIndex>(a)).capacity);
  }
  return s;
}

std::string extrapolation_warning(const Network& network, const Vector& x, double validated_max) {
  const double s = max_normalized_flow(network, {x});
  if (s <= validated_max) return {};
  return "normalized flow " + format_double(s) + " exceeds the range [0, " + format_double(validated_max) +
         "] on which the congestion factor was validated as nondecreasing";
}

}  // namespace tapkit
