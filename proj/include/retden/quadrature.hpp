#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/quadrature/gauss.hpp>

namespace retden {

struct QuadratureError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct QuadratureOptions {
  /// Number of decay lengths kept on each side of the support (tail mass ~ exp(-k)).
  double support_multiplier = 40.0;
  /// Successive panel doublings must agree to this (relative to max(1, |I|)).
  double tolerance = 1e-8;
  int initial_panels = 8;
  int max_doublings = 12;
};

namespace detail {
inline double magnitude(double v) { return std::abs(v); }
template <class Derived>
double magnitude(const Eigen::MatrixBase<Derived>& v) {
  return v.template lpNorm<Eigen::Infinity>();
}

/// Composite 20-point Gauss-Legendre over [a, b] split into `panels` equal pieces.
template <class F, class T>
T gauss_legendre(F& f, double a, double b, int panels, const T& zero) {
  using rule = boost::math::quadrature::gauss<double, 20>;
  const auto& x = rule::abscissa();
  const auto& w = rule::weights();
  T total = zero;
  const double width = (b - a) / panels;
  for (int p = 0; p < panels; ++p) {
    const double lo = a + p * width;
    const double half = 0.5 * width;
    const double mid = lo + half;
    T panel = zero;
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (x[i] == 0.0) {
        panel += w[i] * f(mid);
      } else {
        panel += w[i] * f(mid - half * x[i]);
        panel += w[i] * f(mid + half * x[i]);
      }
    }
    total += half * panel;
  }
  return total;
}
}  // namespace detail

/// Integrates f over [breakpoints.front(), breakpoints.back()], treating interior
/// breakpoints as kinks. Panels double until two successive estimates agree.
template <class F>
auto integrate(F&& f, std::vector<double> breakpoints, const QuadratureOptions& opt = {}) {
  std::sort(breakpoints.begin(), breakpoints.end());
  breakpoints.erase(std::unique(breakpoints.begin(), breakpoints.end()), breakpoints.end());
  if (breakpoints.size() < 2) throw std::invalid_argument("integrate: need a nonempty interval");
  using T = std::decay_t<decltype(f(breakpoints.front()))>;
  const T zero = T(f(breakpoints.front()) * 0.0);

  auto estimate = [&](int panels) {
    T total = zero;
    for (std::size_t i = 0; i + 1 < breakpoints.size(); ++i)
      total += detail::gauss_legendre(f, breakpoints[i], breakpoints[i + 1], panels, zero);
    return total;
  };

  int panels = opt.initial_panels;
  T previous = estimate(panels);
  for (int k = 0; k < opt.max_doublings; ++k) {
    panels *= 2;
    T current = estimate(panels);
    const double diff = detail::magnitude(T(current - previous));
    if (diff <= opt.tolerance * std::max(1.0, detail::magnitude(current))) return current;
    previous = std::move(current);
  }
  throw QuadratureError("integrate: no convergence after " + std::to_string(panels) + " panels per interval");
}

}  // namespace retden
