#pragma once

// Grid representation of conditional return densities and the distributional
// Bellman operator on it. Used as ground truth for small MDPs.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <ostream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "retden/density.hpp"
#include "retden/mdp.hpp"

namespace retden {

struct GridSpec {
  double lo = -1.0;
  double hi = 1.0;
  std::size_t n_bins = 100;

  double width() const { return (hi - lo) / static_cast<double>(n_bins); }
  double center(std::size_t i) const { return lo + (static_cast<double>(i) + 0.5) * width(); }

  void validate() const {
    if (!(hi > lo) || n_bins == 0 || !std::isfinite(lo) || !std::isfinite(hi))
      throw std::invalid_argument("GridSpec: need lo < hi and at least one bin");
  }
};

/// Probability masses on equal-width bins.
struct GridDensity {
  GridSpec grid;
  std::vector<double> mass;

  explicit GridDensity(GridSpec g) : grid(g), mass(g.n_bins, 0.0) { g.validate(); }

  double total() const {
    double t = 0.0;
    for (double m : mass) t += m;
    return t;
  }

  void normalize() {
    const double t = total();
    if (!(t > 0.0)) throw std::domain_error("GridDensity: no mass to normalize");
    for (double& m : mass) m /= t;
  }

  /// All mass in the bin containing x.
  static GridDensity point_mass(GridSpec g, double x) {
    GridDensity d(g);
    const double pos = (x - g.lo) / g.width();
    const auto i = static_cast<std::size_t>(std::clamp(pos, 0.0, static_cast<double>(g.n_bins) - 1.0));
    d.mass[i] = 1.0;
    return d;
  }

  /// Bin masses of a parametric density (cdf differences, renormalized).
  static GridDensity discretize(GridSpec g, const DensityParams& p) {
    GridDensity d(g);
    const double h = g.width();
    for (std::size_t i = 0; i < g.n_bins; ++i) {
      const double a = g.lo + static_cast<double>(i) * h;
      d.mass[i] = std::max(0.0, cdf(p, a + h) - cdf(p, a));
    }
    d.normalize();
    return d;
  }
};

/// One grid density per (state, action), all on the same grid.
struct ConditionalGridTable {
  GridSpec grid;
  std::size_t n_states = 0;
  std::size_t n_actions = 0;
  std::vector<GridDensity> entries;

  ConditionalGridTable(GridSpec g, std::size_t ns, std::size_t na, const GridDensity& init)
      : grid(g), n_states(ns), n_actions(na), entries(ns * na, init) {
    if (init.grid.n_bins != g.n_bins || init.grid.lo != g.lo || init.grid.hi != g.hi)
      throw std::invalid_argument("ConditionalGridTable: initial density on a different grid");
  }

  const GridDensity& at(std::size_t s, std::size_t a) const { return entries.at(s * n_actions + a); }
  GridDensity& at(std::size_t s, std::size_t a) { return entries.at(s * n_actions + a); }
};

/// pi(a | s), row-major [state][action].
class StochasticPolicy {
 public:
  StochasticPolicy(std::size_t n_states, std::size_t n_actions, std::vector<double> probs)
      : n_states_(n_states), n_actions_(n_actions), probs_(std::move(probs)) {
    if (probs_.size() != n_states * n_actions) throw std::invalid_argument("StochasticPolicy: wrong size");
    for (std::size_t s = 0; s < n_states; ++s) {
      double t = 0.0;
      for (std::size_t a = 0; a < n_actions; ++a) {
        const double p = probs_[s * n_actions + a];
        if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("StochasticPolicy: probability outside [0, 1]");
        t += p;
      }
      if (std::abs(t - 1.0) > 1e-9) throw std::invalid_argument("StochasticPolicy: row does not sum to 1");
    }
  }

  static StochasticPolicy deterministic(std::size_t n_actions, std::span<const std::size_t> actions) {
    std::vector<double> p(actions.size() * n_actions, 0.0);
    for (std::size_t s = 0; s < actions.size(); ++s) {
      if (actions[s] >= n_actions) throw std::invalid_argument("StochasticPolicy: action out of range");
      p[s * n_actions + actions[s]] = 1.0;
    }
    return StochasticPolicy(actions.size(), n_actions, std::move(p));
  }

  static StochasticPolicy uniform(std::size_t n_states, std::size_t n_actions) {
    return StochasticPolicy(n_states, n_actions,
                            std::vector<double>(n_states * n_actions, 1.0 / static_cast<double>(n_actions)));
  }

  std::size_t n_states() const { return n_states_; }
  std::size_t n_actions() const { return n_actions_; }
  double operator()(std::size_t s, std::size_t a) const { return probs_[s * n_actions_ + a]; }
  std::span<const double> row(std::size_t s) const { return {probs_.data() + s * n_actions_, n_actions_}; }

 private:
  std::size_t n_states_;
  std::size_t n_actions_;
  std::vector<double> probs_;
};

struct RewardQuadrature {
  /// Equal-probability nodes for non-deterministic rewards.
  std::size_t n_nodes = 64;
  /// Reward mass discarded in the tails (split evenly), recorded with the result.
  double tail_mass = 1e-8;
};

/// Reward nodes and weights: a single node for deterministic rewards, otherwise
/// conditional means of equal-mass slices of the truncated distribution.
inline std::vector<std::pair<double, double>> reward_nodes(const RewardSpec& spec, const RewardQuadrature& rq) {
  if (is_deterministic(spec)) return {{std::get<Deterministic>(spec).value, 1.0}};
  if (rq.n_nodes == 0 || !(rq.tail_mass > 0.0 && rq.tail_mass < 1.0))
    throw std::invalid_argument("RewardQuadrature: need nodes and a tail mass in (0, 1)");
  std::vector<std::pair<double, double>> out;
  const double lo = 0.5 * rq.tail_mass;
  const double step = (1.0 - rq.tail_mass) / static_cast<double>(rq.n_nodes);
  const auto q = [&](double u) { return reward_quantile(spec, u); };
  for (std::size_t k = 0; k < rq.n_nodes; ++k) {
    const double a = lo + step * static_cast<double>(k), b = a + step;
    const double integral = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(q, a, b, 15, 1e-12);
    out.emplace_back(integral / step, 1.0 / static_cast<double>(rq.n_nodes));
  }
  return out;
}

struct SupportOverflow : std::runtime_error {
  double escaped_mass;
  double required_lo;
  double required_hi;
  SupportOverflow(double escaped, double lo, double hi)
      : std::runtime_error(message(escaped, lo, hi)), escaped_mass(escaped), required_lo(lo), required_hi(hi) {}

 private:
  static std::string message(double escaped, double lo, double hi) {
    std::ostringstream os;
    os << "Bellman operator: " << escaped << " mass left the grid; extend the support to [" << lo << ", " << hi
       << "]";
    return os.str();
  }
};

struct BellmanOptions {
  RewardQuadrature rewards;
  /// Escaped mass above this raises SupportOverflow.
  double overflow_tolerance = 1e-6;
};

/// One application of the distributional Bellman operator. Each source bin center x
/// maps to r + gamma x and its mass is split linearly between the two nearest bin
/// centers (the transpose of linear interpolation), which keeps mass and means exact.
inline ConditionalGridTable apply_bellman_operator(const ConditionalGridTable& table, const TabularMdp& mdp,
                                                   const StochasticPolicy& policy, const BellmanOptions& opt = {}) {
  const double gamma = mdp.discount();
  if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("Bellman operator: discount must lie in (0, 1)");
  if (table.n_states != mdp.n_states() || table.n_actions != mdp.n_actions() ||
      policy.n_states() != mdp.n_states() || policy.n_actions() != mdp.n_actions())
    throw std::invalid_argument("Bellman operator: table/policy/MDP sizes differ");

  const GridSpec g = table.grid;
  const std::size_t n = g.n_bins;
  const double h = g.width();

  // successor-state mixtures sum_a' pi(a'|s') p(.|s', a')
  std::vector<std::vector<double>> mixture(mdp.n_states(), std::vector<double>(n, 0.0));
  for (std::size_t s = 0; s < mdp.n_states(); ++s)
    for (std::size_t a = 0; a < mdp.n_actions(); ++a) {
      const double w = policy(s, a);
      if (w == 0.0) continue;
      const auto& src = table.at(s, a).mass;
      for (std::size_t i = 0; i < n; ++i) mixture[s][i] += w * src[i];
    }

  ConditionalGridTable out(g, table.n_states, table.n_actions, GridDensity(g));
  double worst_escape = 0.0, need_lo = g.lo, need_hi = g.hi;
  for (std::size_t s = 0; s < mdp.n_states(); ++s) {
    for (std::size_t a = 0; a < mdp.n_actions(); ++a) {
      auto& dst = out.at(s, a).mass;
      double escaped = 0.0;
      for (const auto& o : mdp.outcomes(s, a)) {
        const auto& src = mixture[o.next_state];
        for (const auto& [r, rw] : reward_nodes(mdp.reward(s, a, o.next_state), opt.rewards)) {
          const double w = o.probability * rw;
          for (std::size_t i = 0; i < n; ++i) {
            const double m = src[i];
            if (m == 0.0) continue;
            const double y = r + gamma * g.center(i);
            const double pos = (y - g.lo) / h - 0.5;  // fractional bin-center index
            if (pos < -0.5 || pos > static_cast<double>(n) - 0.5) {
              escaped += w * m;
              need_lo = std::min(need_lo, y);
              need_hi = std::max(need_hi, y);
              continue;
            }
            if (pos <= 0.0) {
              dst[0] += w * m;
            } else if (pos >= static_cast<double>(n - 1)) {
              dst[n - 1] += w * m;
            } else {
              const auto j = static_cast<std::size_t>(pos);
              const double frac = pos - static_cast<double>(j);
              dst[j] += w * m * (1.0 - frac);
              dst[j + 1] += w * m * frac;
            }
          }
        }
      }
      worst_escape = std::max(worst_escape, escaped);
    }
  }
  if (worst_escape > opt.overflow_tolerance) throw SupportOverflow(worst_escape, need_lo, need_hi);
  for (auto& d : out.entries) d.normalize();
  return out;
}

struct FixedPointResult {
  ConditionalGridTable table;
  std::size_t iterations;
  double last_change;
};

inline double max_mass_change(const ConditionalGridTable& x, const ConditionalGridTable& y) {
  double worst = 0.0;
  for (std::size_t k = 0; k < x.entries.size(); ++k)
    for (std::size_t i = 0; i < x.grid.n_bins; ++i)
      worst = std::max(worst, std::abs(x.entries[k].mass[i] - y.entries[k].mass[i]));
  return worst;
}

/// Iteration cap: ceil(log(tol)/log(gamma)) + margin.
inline std::size_t fixed_point_iteration_bound(double gamma, double tol, std::size_t margin) {
  return static_cast<std::size_t>(std::ceil(std::log(tol) / std::log(gamma))) + margin;
}

/// Repeats the operator from `init` until the sup-norm change of bin masses drops below tol.
inline FixedPointResult iterate_to_fixed_point(const TabularMdp& mdp, const StochasticPolicy& policy,
                                               ConditionalGridTable init, double tol, std::size_t margin = 50,
                                               const BellmanOptions& opt = {}) {
  if (!(tol > 0.0)) throw std::invalid_argument("iterate_to_fixed_point: tol must be positive");
  const std::size_t bound = fixed_point_iteration_bound(mdp.discount(), tol, margin);
  ConditionalGridTable cur = std::move(init);
  for (std::size_t it = 1; it <= bound; ++it) {
    ConditionalGridTable next = apply_bellman_operator(cur, mdp, policy, opt);
    const double change = max_mass_change(cur, next);
    cur = std::move(next);
    if (change < tol) return {std::move(cur), it, change};
  }
  throw std::runtime_error("iterate_to_fixed_point: no convergence within " + std::to_string(bound) +
                           " iterations");
}

/// Point mass at zero for every (s, a).
inline ConditionalGridTable zero_return_table(const TabularMdp& mdp, GridSpec g) {
  return ConditionalGridTable(g, mdp.n_states(), mdp.n_actions(), GridDensity::point_mass(g, 0.0));
}

struct GridStats {
  double mean;
  double variance;
  std::vector<double> quantiles;
};

/// Midpoint-rule moments; quantiles by cumulative-mass inversion, linear within a bin.
inline GridStats grid_stats(const GridDensity& d, std::span<const double> levels = {}) {
  const GridSpec& g = d.grid;
  double total = 0.0, mean = 0.0;
  for (std::size_t i = 0; i < g.n_bins; ++i) {
    total += d.mass[i];
    mean += d.mass[i] * g.center(i);
  }
  mean /= total;
  double var = 0.0;
  for (std::size_t i = 0; i < g.n_bins; ++i) var += d.mass[i] * (g.center(i) - mean) * (g.center(i) - mean);
  var /= total;

  std::vector<double> qs;
  for (double q : levels) {
    if (!(q > 0.0 && q < 1.0)) throw std::domain_error("grid_stats: quantile level must lie in (0, 1)");
    const double target = q * total;
    double acc = 0.0;
    double value = g.hi;
    for (std::size_t i = 0; i < g.n_bins; ++i) {
      if (acc + d.mass[i] >= target && d.mass[i] > 0.0) {
        // a bin's mass sits at its center; interpolate across the half-bins around it
        const double frac = (target - acc) / d.mass[i];
        value = g.center(i) + (frac - 0.5) * g.width();
        break;
      }
      acc += d.mass[i];
    }
    qs.push_back(value);
  }
  return {mean, var, std::move(qs)};
}

/// sum mass * log(mass / (pdf(center) * width)).
inline double kl_to_model(const GridDensity& d, const DensityParams& params) {
  const double h = d.grid.width();
  double kl = 0.0;
  for (std::size_t i = 0; i < d.grid.n_bins; ++i) {
    const double m = d.mass[i];
    if (m <= 0.0) continue;
    kl += m * (std::log(m) - log_pdf(params, d.grid.center(i)) - std::log(h));
  }
  return kl;
}

/// E[score] of `current` under a grid target; F^{-1} E[score] when natural.
inline Eigen::VectorXd grid_natural_gradient(const DensityParams& current, const GridDensity& target) {
  Eigen::VectorXd g = Eigen::VectorXd::Zero(dimension(kind_of(current)));
  for (std::size_t i = 0; i < target.grid.n_bins; ++i)
    if (target.mass[i] > 0.0) g += target.mass[i] * score(current, target.grid.center(i));
  return fisher_information(current).ldlt().solve(g);
}

/// Rows "state,action,bin_center,mass".
inline void write_grid_table_csv(std::ostream& os, const ConditionalGridTable& table) {
  const auto prec = os.precision(17);
  os << "state,action,bin_center,mass\n";
  for (std::size_t s = 0; s < table.n_states; ++s)
    for (std::size_t a = 0; a < table.n_actions; ++a)
      for (std::size_t i = 0; i < table.grid.n_bins; ++i)
        os << s << ',' << a << ',' << table.grid.center(i) << ',' << table.at(s, a).mass[i] << '\n';
  os.precision(prec);
}

}  // namespace retden
