#pragma once

// Parametric return-density families: Gaussian, Laplace and skewed (asymmetric) Laplace.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>

#include <Eigen/Dense>
#include <boost/math/special_functions/erf.hpp>

namespace retden {

enum class ModelKind { gaussian, laplace, skewed_laplace };

inline std::string_view to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::gaussian: return "gaussian";
    case ModelKind::laplace: return "laplace";
    case ModelKind::skewed_laplace: return "skewed_laplace";
  }
  return "?";
}

inline ModelKind parse_model_kind(std::string_view text) {
  if (text == "gaussian") return ModelKind::gaussian;
  if (text == "laplace") return ModelKind::laplace;
  if (text == "skewed_laplace") return ModelKind::skewed_laplace;
  throw std::invalid_argument("unknown density model '" + std::string(text) + "'");
}

/// Lower bounds kept by every learner after a parameter step.
struct ParamFloors {
  static constexpr double scale = 1e-3;
  static constexpr double skew_lo = 0.05;
  static constexpr double skew_hi = 0.95;
};

struct GaussianParams {
  double mu;
  double sigma;

  GaussianParams(double mean, double stddev) : mu(mean), sigma(stddev) {
    if (!std::isfinite(mean) || !(stddev > 0.0) || !std::isfinite(stddev))
      throw std::invalid_argument("GaussianParams: need finite mu and sigma > 0");
  }
  static constexpr int dim = 2;
};

struct LaplaceParams {
  double m;
  double b;

  LaplaceParams(double central, double scale) : m(central), b(scale) {
    if (!std::isfinite(central) || !(scale > 0.0) || !std::isfinite(scale))
      throw std::invalid_argument("LaplaceParams: need finite m and b > 0");
  }
  static constexpr int dim = 2;
};

/// Density c(1-c)/b * exp((1-c)(x-m)/b) left of m and c(1-c)/b * exp(-c(x-m)/b) right of it.
/// m is the c-quantile.
struct SkewedLaplaceParams {
  double m;
  double b;
  double c;

  SkewedLaplaceParams(double central, double scale, double skew) : m(central), b(scale), c(skew) {
    if (!std::isfinite(central) || !(scale > 0.0) || !std::isfinite(scale) || !(skew > 0.0) ||
        !(skew < 1.0))
      throw std::invalid_argument("SkewedLaplaceParams: need finite m, b > 0, 0 < c < 1");
  }
  static constexpr int dim = 3;
};

using DensityParams = std::variant<GaussianParams, LaplaceParams, SkewedLaplaceParams>;

inline ModelKind kind_of(const GaussianParams&) { return ModelKind::gaussian; }
inline ModelKind kind_of(const LaplaceParams&) { return ModelKind::laplace; }
inline ModelKind kind_of(const SkewedLaplaceParams&) { return ModelKind::skewed_laplace; }
inline ModelKind kind_of(const DensityParams& p) {
  return std::visit([](const auto& x) { return kind_of(x); }, p);
}

inline int dimension(ModelKind kind) { return kind == ModelKind::skewed_laplace ? 3 : 2; }

/// Location parameter used for temporal differences (mu or m).
inline double central(const GaussianParams& p) { return p.mu; }
inline double central(const LaplaceParams& p) { return p.m; }
inline double central(const SkewedLaplaceParams& p) { return p.m; }
inline double central(const DensityParams& p) {
  return std::visit([](const auto& x) { return central(x); }, p);
}

inline Eigen::VectorXd to_vector(const DensityParams& p) {
  struct {
    Eigen::VectorXd operator()(const GaussianParams& g) const { return Eigen::Vector2d(g.mu, g.sigma); }
    Eigen::VectorXd operator()(const LaplaceParams& l) const { return Eigen::Vector2d(l.m, l.b); }
    Eigen::VectorXd operator()(const SkewedLaplaceParams& s) const {
      return Eigen::Vector3d(s.m, s.b, s.c);
    }
  } visitor;
  return std::visit(visitor, p);
}

/// Builds params from a raw vector, clipping scale and skewness into their floors.
inline DensityParams project(ModelKind kind, const Eigen::VectorXd& v) {
  if (v.size() != dimension(kind)) throw std::invalid_argument("project: wrong parameter count");
  if (!v.allFinite()) throw std::domain_error("project: non-finite parameter update");
  const double scale = std::max(v[1], ParamFloors::scale);
  switch (kind) {
    case ModelKind::gaussian: return GaussianParams(v[0], scale);
    case ModelKind::laplace: return LaplaceParams(v[0], scale);
    case ModelKind::skewed_laplace:
      return SkewedLaplaceParams(v[0], scale, std::clamp(v[2], ParamFloors::skew_lo, ParamFloors::skew_hi));
  }
  throw std::invalid_argument("project: bad model kind");
}

inline std::string format_params(const DensityParams& p) {
  const Eigen::VectorXd v = to_vector(p);
  std::string out(to_string(kind_of(p)));
  out += '(';
  for (Eigen::Index i = 0; i < v.size(); ++i) out += (i ? ", " : "") + std::to_string(v[i]);
  return out + ')';
}

// ---------------------------------------------------------------------------
// log density

inline double log_pdf(const GaussianParams& p, double x) {
  const double z = (x - p.mu) / p.sigma;
  return -0.5 * z * z - std::log(std::sqrt(2.0 * std::numbers::pi) * p.sigma);
}

inline double log_pdf(const LaplaceParams& p, double x) {
  return -std::abs(x - p.m) / p.b - std::log(2.0 * p.b);
}

inline double log_pdf(const SkewedLaplaceParams& p, double x) {
  const double u = x - p.m;
  const double expo = u < 0.0 ? (1.0 - p.c) * u / p.b : -p.c * u / p.b;
  return std::log(p.c * (1.0 - p.c) / p.b) + expo;
}

inline double log_pdf(const DensityParams& p, double x) {
  return std::visit([x](const auto& q) { return log_pdf(q, x); }, p);
}

inline double pdf(const DensityParams& p, double x) { return std::exp(log_pdf(p, x)); }

// ---------------------------------------------------------------------------
// cdf / quantile

inline double cdf(const GaussianParams& p, double x) {
  return 0.5 * std::erfc(-(x - p.mu) / (p.sigma * std::numbers::sqrt2));
}

inline double cdf(const LaplaceParams& p, double x) {
  const double u = (x - p.m) / p.b;
  return u < 0.0 ? 0.5 * std::exp(u) : 1.0 - 0.5 * std::exp(-u);
}

inline double cdf(const SkewedLaplaceParams& p, double x) {
  const double u = x - p.m;
  return u < 0.0 ? p.c * std::exp((1.0 - p.c) * u / p.b) : 1.0 - (1.0 - p.c) * std::exp(-p.c * u / p.b);
}

inline double cdf(const DensityParams& p, double x) {
  return std::visit([x](const auto& q) { return cdf(q, x); }, p);
}

namespace detail {
inline void check_level(double q) {
  if (!(q > 0.0 && q < 1.0)) throw std::domain_error("quantile level must lie in (0, 1)");
}
}  // namespace detail

inline double quantile(const GaussianParams& p, double q) {
  detail::check_level(q);
  return p.mu + p.sigma * std::numbers::sqrt2 * boost::math::erf_inv(2.0 * q - 1.0);
}

inline double quantile(const LaplaceParams& p, double q) {
  detail::check_level(q);
  return q <= 0.5 ? p.m + p.b * std::log(2.0 * q) : p.m - p.b * std::log(2.0 - 2.0 * q);
}

inline double quantile(const SkewedLaplaceParams& p, double q) {
  detail::check_level(q);
  return q <= p.c ? p.m + p.b / (1.0 - p.c) * std::log(q / p.c)
                  : p.m - p.b / p.c * std::log((1.0 - q) / (1.0 - p.c));
}

inline double quantile(const DensityParams& p, double q) {
  return std::visit([q](const auto& x) { return quantile(x, q); }, p);
}

// ---------------------------------------------------------------------------
// score (gradient of log_pdf w.r.t. the parameters). At the kink x == m the
// Laplace-family models use the right-hand branch.

inline Eigen::Vector2d score(const GaussianParams& p, double x) {
  const double u = x - p.mu;
  const double s2 = p.sigma * p.sigma;
  return {u / s2, -1.0 / p.sigma + u * u / (s2 * p.sigma)};
}

inline Eigen::Vector2d score(const LaplaceParams& p, double x) {
  const double u = x - p.m;
  const double sign = u < 0.0 ? -1.0 : 1.0;
  return {sign / p.b, -1.0 / p.b + std::abs(u) / (p.b * p.b)};
}

inline Eigen::Vector3d score(const SkewedLaplaceParams& p, double x) {
  const double u = x - p.m;
  const bool left = u < 0.0;
  // check loss rho_c(u) = u (c - 1[u < 0])
  const double rho = u * (p.c - (left ? 1.0 : 0.0));
  return {left ? -(1.0 - p.c) / p.b : p.c / p.b, -1.0 / p.b + rho / (p.b * p.b),
          1.0 / p.c - 1.0 / (1.0 - p.c) - u / p.b};
}

inline Eigen::VectorXd score(const DensityParams& p, double x) {
  return std::visit([x](const auto& q) -> Eigen::VectorXd { return score(q, x); }, p);
}

// ---------------------------------------------------------------------------
// Fisher information E[score score^T]

inline Eigen::Matrix2d fisher_information(const GaussianParams& p) {
  const double s2 = p.sigma * p.sigma;
  return Eigen::Vector2d(1.0 / s2, 2.0 / s2).asDiagonal();
}

inline Eigen::Matrix2d fisher_information(const LaplaceParams& p) {
  const double b2 = p.b * p.b;
  return Eigen::Vector2d(1.0 / b2, 1.0 / b2).asDiagonal();
}

inline Eigen::Matrix3d fisher_information(const SkewedLaplaceParams& p) {
  const double b = p.b, c = p.c, cc = 1.0 - p.c;
  Eigen::Matrix3d f;
  f << c * cc / (b * b), 0.0, -1.0 / b,
       0.0, 1.0 / (b * b), -(1.0 - 2.0 * c) / (b * c * cc),
       -1.0 / b, -(1.0 - 2.0 * c) / (b * c * cc), 1.0 / (c * c) + 1.0 / (cc * cc);
  return f;
}

inline Eigen::MatrixXd fisher_information(const DensityParams& p) {
  return std::visit([](const auto& q) -> Eigen::MatrixXd { return fisher_information(q); }, p);
}

/// Closed-form inverse of the skewed-Laplace Fisher matrix.
inline Eigen::Matrix3d inverse_fisher_information(const SkewedLaplaceParams& p) {
  const double b = p.b, c = p.c, cc = 1.0 - p.c, k = 1.0 - 2.0 * c;
  Eigen::Matrix3d inv;
  inv << 2.0 * b * b / (c * cc), b * b * k / (c * cc), b,
         b * b * k / (c * cc), b * b * (1.0 - 3.0 * c + 3.0 * c * c) / (c * cc), b * k,
         b, b * k, c * cc;
  return inv;
}

// ---------------------------------------------------------------------------
// sampling by inverse transform

template <class Rng>
double sample(const DensityParams& p, Rng& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  double u = unif(rng);
  while (u <= 0.0) u = unif(rng);
  return quantile(p, u);
}

}  // namespace retden
