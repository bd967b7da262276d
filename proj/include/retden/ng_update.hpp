#pragma once

// Closed-form stochastic natural-gradient TD updates for the three density models.
//
// A TD update moves the density at (s, a) toward the pushforward of the successor
// density through eta = r + gamma * eta'. For every model the pushforward of a
// target with central m', scale b' is the same family with central r + gamma m' and
// scale gamma b', so the expected score and hence the natural gradient depend on the
// target only through delta = r + gamma m' - m and gamma b' (and the skewness c').
// All gradients below are expressed per unit of alpha/gamma.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "retden/density.hpp"
#include "retden/param_table.hpp"

namespace retden {

enum class GradientKind { natural, ordinary };

struct TargetComponent {
  double weight;
  DensityParams params;
};

/// Inputs of one TD update at a single (s, a) entry.
struct TdContext {
  double reward;
  double discount;
  double learning_rate;
  DensityParams current;
  std::vector<TargetComponent> target;
};

inline double td_delta(double current_central, double target_central, double reward, double discount) {
  return reward + discount * target_central - current_central;
}

// ---------------------------------------------------------------------------
// Expected score E_g[d/dtheta log p(eta | theta)] under the pushforward target g.

inline Eigen::Vector2d expected_score(const GaussianParams& cur, const GaussianParams& tgt, double delta,
                                      double discount) {
  const double s2 = cur.sigma * cur.sigma;
  const double spread = discount * tgt.sigma;
  return {delta / s2, -1.0 / cur.sigma + (delta * delta + spread * spread) / (s2 * cur.sigma)};
}

namespace detail {
/// E[sign(u)] and E[|u|] for u ~ Laplace(delta, s).
struct LaplaceMoments {
  double mean_sign;
  double mean_abs;
};

inline LaplaceMoments laplace_moments(double delta, double s) {
  const double tail = std::exp(-std::abs(delta) / s);
  return {delta <= 0.0 ? -1.0 + tail : 1.0 - tail, std::abs(delta) + s * tail};
}

/// For u = delta + V, V ~ SkewedLaplace(0, s, d): P(u < 0), E[u], E[max(-u, 0)].
struct SkewedMoments {
  double left_mass;
  double mean;
  double negative_part;
};

inline SkewedMoments skewed_moments(double delta, double s, double d) {
  const double mean_v = s * (1.0 - 2.0 * d) / (d * (1.0 - d));
  if (delta <= 0.0) {
    const double e = std::exp(d * delta / s);
    return {1.0 - (1.0 - d) * e, delta + mean_v, -delta - mean_v + (1.0 - d) * s / d * e};
  }
  const double e = std::exp((d - 1.0) * delta / s);
  return {d * e, delta + mean_v, d * s / (1.0 - d) * e};
}
}  // namespace detail

inline Eigen::Vector2d expected_score(const LaplaceParams& cur, const LaplaceParams& tgt, double delta,
                                      double discount) {
  const auto mom = detail::laplace_moments(delta, discount * tgt.b);
  return {mom.mean_sign / cur.b, -1.0 / cur.b + mom.mean_abs / (cur.b * cur.b)};
}

inline Eigen::Vector3d expected_score(const SkewedLaplaceParams& cur, const SkewedLaplaceParams& tgt,
                                      double delta, double discount) {
  const auto mom = detail::skewed_moments(delta, discount * tgt.b, tgt.c);
  const double b = cur.b, c = cur.c;
  const double check_loss = c * mom.mean + mom.negative_part;  // E[rho_c(u)]
  return {(c - mom.left_mass) / b, -1.0 / b + check_loss / (b * b),
          (1.0 - 2.0 * c) / (c * (1.0 - c)) - mom.mean / b};
}

// ---------------------------------------------------------------------------
// Natural gradients F^{-1} E_g[score]

inline Eigen::Vector2d natural_gradient(const GaussianParams& cur, const GaussianParams& tgt, double delta,
                                        double discount) {
  const double spread = discount * tgt.sigma;
  return {delta, (delta * delta + spread * spread - cur.sigma * cur.sigma) / (2.0 * cur.sigma)};
}

inline Eigen::Vector2d natural_gradient(const LaplaceParams& cur, const LaplaceParams& tgt, double delta,
                                        double discount) {
  const double s = discount * tgt.b;
  const double m_step = delta <= 0.0 ? (-1.0 + std::exp(delta / s)) * cur.b
                                     : (1.0 - std::exp(-delta / s)) * cur.b;
  return {m_step, -cur.b + std::abs(delta) + s * std::exp(-std::abs(delta) / s)};
}

inline Eigen::Vector3d natural_gradient(const SkewedLaplaceParams& cur, const SkewedLaplaceParams& tgt,
                                        double delta, double discount) {
  return inverse_fisher_information(cur) * expected_score(cur, tgt, delta, discount);
}

/// Per-component direction (natural or ordinary) for a pushforward target.
template <class P>
auto direction(const P& cur, const P& tgt, double reward, double discount, GradientKind kind) {
  const double delta = td_delta(central(cur), central(tgt), reward, discount);
  return kind == GradientKind::natural ? natural_gradient(cur, tgt, delta, discount)
                                       : expected_score(cur, tgt, delta, discount);
}

namespace detail {
inline void check_context(const TdContext& ctx) {
  if (ctx.target.empty()) throw std::invalid_argument("TdContext: empty target");
  if (!(ctx.discount > 0.0 && ctx.discount < 1.0))
    throw std::invalid_argument("TdContext: discount must lie in (0, 1)");
  if (!(ctx.learning_rate > 0.0)) throw std::invalid_argument("TdContext: learning rate must be positive");
  double total = 0.0;
  for (const auto& t : ctx.target) {
    if (!(t.weight >= 0.0 && t.weight <= 1.0))
      throw std::invalid_argument("TdContext: target weight outside [0, 1]");
    total += t.weight;
  }
  if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument("TdContext: target weights must sum to 1");
}

template <class P>
const P& as(const DensityParams& p, const char* who) {
  if (const auto* q = std::get_if<P>(&p)) return *q;
  throw std::invalid_argument(std::string(who) + ": model kind mismatch");
}

template <class P>
Eigen::Matrix<double, P::dim, 1> mixed_direction(const TdContext& ctx, GradientKind kind, const char* who) {
  const P& cur = as<P>(ctx.current, who);
  Eigen::Matrix<double, P::dim, 1> acc = Eigen::Matrix<double, P::dim, 1>::Zero();
  for (const auto& t : ctx.target)
    acc += t.weight * direction(cur, as<P>(t.params, who), ctx.reward, ctx.discount, kind);
  return acc;
}
}  // namespace detail

/// Gaussian rule: mu += (alpha/gamma) delta, sigma += (alpha/gamma)(delta^2 + gamma^2 sigma'^2 - sigma^2)/(2 sigma).
inline GaussianParams ng_update_gaussian(const TdContext& ctx, GradientKind kind = GradientKind::natural) {
  detail::check_context(ctx);
  const auto& cur = detail::as<GaussianParams>(ctx.current, "ng_update_gaussian");
  const Eigen::Vector2d dir = detail::mixed_direction<GaussianParams>(ctx, kind, "ng_update_gaussian");
  const double step = ctx.learning_rate / ctx.discount;
  return GaussianParams(cur.mu + step * dir[0], std::max(cur.sigma + step * dir[1], ParamFloors::scale));
}

/// Laplace rule; the m increment is bounded by (alpha/gamma) b for every delta.
inline LaplaceParams ng_update_laplace(const TdContext& ctx, GradientKind kind = GradientKind::natural) {
  detail::check_context(ctx);
  const auto& cur = detail::as<LaplaceParams>(ctx.current, "ng_update_laplace");
  const Eigen::Vector2d dir = detail::mixed_direction<LaplaceParams>(ctx, kind, "ng_update_laplace");
  const double step = ctx.learning_rate / ctx.discount;
  return LaplaceParams(cur.m + step * dir[0], std::max(cur.b + step * dir[1], ParamFloors::scale));
}

inline SkewedLaplaceParams ng_update_skewed_laplace(const TdContext& ctx,
                                                    GradientKind kind = GradientKind::natural) {
  detail::check_context(ctx);
  const auto& cur = detail::as<SkewedLaplaceParams>(ctx.current, "ng_update_skewed_laplace");
  const Eigen::Vector3d dir =
      detail::mixed_direction<SkewedLaplaceParams>(ctx, kind, "ng_update_skewed_laplace");
  const double step = ctx.learning_rate / ctx.discount;
  return SkewedLaplaceParams(cur.m + step * dir[0], std::max(cur.b + step * dir[1], ParamFloors::scale),
                             std::clamp(cur.c + step * dir[2], ParamFloors::skew_lo, ParamFloors::skew_hi));
}

inline DensityParams ng_update(const TdContext& ctx, GradientKind kind = GradientKind::natural) {
  switch (kind_of(ctx.current)) {
    case ModelKind::gaussian: return ng_update_gaussian(ctx, kind);
    case ModelKind::laplace: return ng_update_laplace(ctx, kind);
    case ModelKind::skewed_laplace: return ng_update_skewed_laplace(ctx, kind);
  }
  throw std::invalid_argument("ng_update: bad model kind");
}

// ---------------------------------------------------------------------------
// Successor targets

/// Action with the largest q-quantile at `state`; ties go to the lowest index.
inline std::size_t greedy_quantile_action(const ParamTable& table, std::size_t state, double q) {
  std::size_t best = 0;
  double best_value = quantile(table.at(state, 0), q);
  for (std::size_t a = 1; a < table.n_actions(); ++a) {
    const double v = quantile(table.at(state, a), q);
    if (v > best_value) {
      best = a;
      best_value = v;
    }
  }
  return best;
}

/// Q-learning-type target: the successor's greedy entry with weight 1.
inline std::vector<TargetComponent> build_target_offpolicy(const ParamTable& table, std::size_t next_state,
                                                           double q) {
  return {{1.0, table.at(next_state, greedy_quantile_action(table, next_state, q))}};
}

/// SARSA-type target: every successor action weighted by the policy probability.
inline std::vector<TargetComponent> build_target_onpolicy(const ParamTable& table, std::size_t next_state,
                                                          std::span<const double> policy) {
  if (policy.size() != table.n_actions())
    throw std::invalid_argument("build_target_onpolicy: probability vector has the wrong length");
  double total = 0.0;
  for (double p : policy) {
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("build_target_onpolicy: probability outside [0, 1]");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9)
    throw std::invalid_argument("build_target_onpolicy: probabilities must sum to 1");
  std::vector<TargetComponent> out;
  out.reserve(policy.size());
  for (std::size_t a = 0; a < policy.size(); ++a) out.push_back({policy[a], table.at(next_state, a)});
  return out;
}

// ---------------------------------------------------------------------------
// Natural-gradient curves over delta (alpha/gamma = 1)

struct NgCurveRow {
  double delta;
  Eigen::VectorXd gradient;
};

/// Natural gradient at each delta for a fixed current/target pair.
inline std::vector<NgCurveRow> ng_curve(const DensityParams& current, const DensityParams& target,
                                        double discount, std::span<const double> deltas) {
  if (kind_of(current) != kind_of(target)) throw std::invalid_argument("ng_curve: model kind mismatch");
  if (!(discount > 0.0 && discount < 1.0)) throw std::invalid_argument("ng_curve: discount must lie in (0, 1)");
  std::vector<NgCurveRow> rows;
  rows.reserve(deltas.size());
  for (double d : deltas) {
    Eigen::VectorXd g = std::visit(
        [&](const auto& cur) -> Eigen::VectorXd {
          using P = std::decay_t<decltype(cur)>;
          return natural_gradient(cur, std::get<P>(target), d, discount);
        },
        current);
    rows.push_back({d, std::move(g)});
  }
  return rows;
}

inline std::vector<std::string> parameter_names(ModelKind kind) {
  switch (kind) {
    case ModelKind::gaussian: return {"mu", "sigma"};
    case ModelKind::laplace: return {"m", "b"};
    case ModelKind::skewed_laplace: return {"m", "b", "c"};
  }
  return {};
}

}  // namespace retden
