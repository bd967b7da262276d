#pragma once

// Quadrature evaluation of the natural-gradient TD step, independent of the
// closed forms in ng_update.hpp. It integrates the pushforward target density
// against the score, and the Fisher matrix against the model itself.

#include <cmath>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "retden/density.hpp"
#include "retden/ng_update.hpp"
#include "retden/quadrature.hpp"

namespace retden {

/// Distances left/right of the central parameter beyond which mass is ~exp(-k).
inline std::pair<double, double> tail_extent(const DensityParams& p, double k) {
  struct {
    double k;
    std::pair<double, double> operator()(const GaussianParams& g) const {
      const double z = std::sqrt(2.0 * k) * g.sigma;
      return {z, z};
    }
    std::pair<double, double> operator()(const LaplaceParams& l) const { return {k * l.b, k * l.b}; }
    std::pair<double, double> operator()(const SkewedLaplaceParams& s) const {
      return {k * s.b / (1.0 - s.c), k * s.b / s.c};
    }
  } visitor{k};
  return std::visit(visitor, p);
}

/// E_p[score score^T] by quadrature.
inline Eigen::MatrixXd numeric_fisher_information(const DensityParams& p, const QuadratureOptions& opt = {}) {
  const double m = central(p);
  const auto [left, right] = tail_extent(p, opt.support_multiplier);
  auto integrand = [&](double x) -> Eigen::MatrixXd {
    const Eigen::VectorXd s = score(p, x);
    return pdf(p, x) * (s * s.transpose());
  };
  return integrate(integrand, {m - left, m, m + right}, opt);
}

/// Pushforward density g(eta) = sum_k w_k / gamma * p_k((eta - r) / gamma).
inline double pushforward_density(const std::vector<TargetComponent>& target, double reward, double discount,
                                  double eta) {
  double g = 0.0;
  const double x = (eta - reward) / discount;
  for (const auto& t : target) g += t.weight * pdf(t.params, x) / discount;
  return g;
}

/// E_g[score(current, eta)] by quadrature over the pushforward target.
inline Eigen::VectorXd numeric_expected_score(const TdContext& ctx, const QuadratureOptions& opt = {}) {
  std::vector<double> points{central(ctx.current)};
  double lo = points.front(), hi = points.front();
  for (const auto& t : ctx.target) {
    const double c = ctx.reward + ctx.discount * central(t.params);
    const auto [left, right] = tail_extent(t.params, opt.support_multiplier);
    points.push_back(c);
    lo = std::min(lo, c - ctx.discount * left);
    hi = std::max(hi, c + ctx.discount * right);
  }
  points.push_back(lo);
  points.push_back(hi);
  auto integrand = [&](double eta) -> Eigen::VectorXd {
    return pushforward_density(ctx.target, ctx.reward, ctx.discount, eta) * score(ctx.current, eta);
  };
  return integrate(integrand, std::move(points), opt);
}

/// theta + (alpha/gamma) F^{-1} E_g[score], all by quadrature, then floor-projected.
inline DensityParams ng_update_numeric(const TdContext& ctx, const QuadratureOptions& opt = {},
                                       GradientKind kind = GradientKind::natural) {
  detail::check_context(ctx);
  for (const auto& t : ctx.target)
    if (kind_of(t.params) != kind_of(ctx.current))
      throw std::invalid_argument("ng_update_numeric: model kind mismatch");
  const Eigen::VectorXd grad = numeric_expected_score(ctx, opt);
  Eigen::VectorXd dir = grad;
  if (kind == GradientKind::natural) dir = numeric_fisher_information(ctx.current, opt).ldlt().solve(grad);
  const Eigen::VectorXd next = to_vector(ctx.current) + (ctx.learning_rate / ctx.discount) * dir;
  return project(kind_of(ctx.current), next);
}

}  // namespace retden
