#pragma once

// Randomized self-check: closed-form updates against quadrature, and the grid
// Bellman fixed point against the linear-system Q function.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "retden/bellman.hpp"
#include "retden/density.hpp"
#include "retden/experiment.hpp"
#include "retden/mdp.hpp"
#include "retden/ng_oracle.hpp"
#include "retden/ng_update.hpp"

namespace retden {

using UpdateRule = std::function<DensityParams(const TdContext&)>;

struct UpdateRules {
  UpdateRule gaussian = [](const TdContext& c) -> DensityParams { return ng_update_gaussian(c); };
  UpdateRule laplace = [](const TdContext& c) -> DensityParams { return ng_update_laplace(c); };
  UpdateRule skewed_laplace = [](const TdContext& c) -> DensityParams { return ng_update_skewed_laplace(c); };

  const UpdateRule& operator[](ModelKind k) const {
    switch (k) {
      case ModelKind::gaussian: return gaussian;
      case ModelKind::laplace: return laplace;
      case ModelKind::skewed_laplace: break;
    }
    return skewed_laplace;
  }
};

template <class Rng>
DensityParams random_params(ModelKind kind, Rng& rng) {
  std::uniform_real_distribution<double> center(-5.0, 5.0), scale(0.2, 4.0), skew(0.05, 0.95);
  switch (kind) {
    case ModelKind::gaussian: return GaussianParams(center(rng), scale(rng));
    case ModelKind::laplace: return LaplaceParams(center(rng), scale(rng));
    case ModelKind::skewed_laplace: break;
  }
  return SkewedLaplaceParams(center(rng), scale(rng), skew(rng));
}

/// A random update context; a third of them use a two-component (on-policy) target.
template <class Rng>
TdContext random_context(ModelKind kind, Rng& rng) {
  std::uniform_real_distribution<double> reward(-3.0, 3.0), gamma(0.5, 0.99), rate(0.01, 0.5), unit(0.0, 1.0);
  TdContext ctx{reward(rng), gamma(rng), rate(rng), random_params(kind, rng), {}};
  if (unit(rng) < 1.0 / 3.0) {
    const double w = unit(rng);
    ctx.target = {{w, random_params(kind, rng)}, {1.0 - w, random_params(kind, rng)}};
  } else {
    ctx.target = {{1.0, random_params(kind, rng)}};
  }
  return ctx;
}

/// Largest per-parameter relative difference |a - b| / |b|.
inline double max_relative_difference(const DensityParams& a, const DensityParams& b) {
  const Eigen::VectorXd x = to_vector(a), y = to_vector(b);
  double worst = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double denom = std::abs(y[i]);
    const double diff = std::abs(x[i] - y[i]);
    worst = std::max(worst, denom > 0.0 ? diff / denom : diff);
  }
  return worst;
}

inline std::string describe_context(const TdContext& ctx) {
  std::ostringstream os;
  os.precision(17);
  os << "reward=" << ctx.reward << " discount=" << ctx.discount << " rate=" << ctx.learning_rate
     << " current=" << format_params(ctx.current) << " target=";
  for (std::size_t i = 0; i < ctx.target.size(); ++i)
    os << (i ? " + " : "") << ctx.target[i].weight << '*' << format_params(ctx.target[i].params);
  return os.str();
}

/// Random MDP with deterministic rewards in [-1, 1] and dense transitions.
template <class Rng>
TabularMdp random_mdp(std::size_t n_states, std::size_t n_actions, double discount, Rng& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0), reward(-1.0, 1.0);
  std::vector<double> p(n_states * n_actions * n_states);
  for (std::size_t row = 0; row < n_states * n_actions; ++row) {
    double total = 0.0;
    for (std::size_t k = 0; k < n_states; ++k) total += (p[row * n_states + k] = 0.05 + unit(rng));
    for (std::size_t k = 0; k < n_states; ++k) p[row * n_states + k] /= total;
    // exact row sums
    double rest = 1.0;
    for (std::size_t k = 0; k + 1 < n_states; ++k) rest -= p[row * n_states + k];
    p[row * n_states + n_states - 1] = rest;
  }
  std::vector<RewardSpec> r;
  for (std::size_t i = 0; i < n_states * n_actions * n_states; ++i) r.emplace_back(Deterministic(reward(rng)));
  return TabularMdp(n_states, n_actions, std::move(p), std::move(r), discount, 0);
}

/// Q^pi from (I - gamma P_pi) Q = R, with R the expected one-step reward.
inline Eigen::VectorXd exact_q_values(const TabularMdp& mdp, const StochasticPolicy& policy) {
  const auto S = mdp.n_states(), A = mdp.n_actions();
  const auto n = static_cast<Eigen::Index>(S * A);
  Eigen::MatrixXd M = Eigen::MatrixXd::Identity(n, n);
  Eigen::VectorXd R = Eigen::VectorXd::Zero(n);
  for (std::size_t s = 0; s < S; ++s)
    for (std::size_t a = 0; a < A; ++a) {
      const auto i = static_cast<Eigen::Index>(s * A + a);
      for (const auto& o : mdp.outcomes(s, a)) {
        R[i] += o.probability * reward_mean(mdp.reward(s, a, o.next_state));
        for (std::size_t b = 0; b < A; ++b)
          M(i, static_cast<Eigen::Index>(o.next_state * A + b)) -= mdp.discount() * o.probability * policy(o.next_state, b);
      }
    }
  return M.partialPivLu().solve(R);
}

struct ModelCheck {
  ModelKind model;
  std::size_t cases = 0;
  double worst = 0.0;
  std::string worst_case;
  std::vector<std::string> failures;
};

struct FixedPointCheck {
  std::size_t cases = 0;
  double worst_mean_error_bins = 0.0;
  std::size_t worst_iterations = 0;
  std::size_t iteration_bound = 0;
  std::vector<std::string> failures;
};

struct OracleReport {
  std::vector<ModelCheck> models;
  FixedPointCheck fixed_point;
  bool ok() const {
    for (const auto& m : models)
      if (!m.failures.empty()) return false;
    return fixed_point.failures.empty();
  }
};

struct OracleCheckOptions {
  std::size_t n_cases = 100;
  std::size_t n_mdps = 3;
  std::uint64_t seed = 1;
  double tolerance = 1e-5;
  /// Grid fixed points: sup-norm mass tolerance and allowed error in bin widths.
  double fixed_point_tol = 1e-6;
  double mean_tolerance_bins = 2.0;
  std::size_t iteration_margin = 5;
};

inline ModelCheck check_update_rule(ModelKind model, const UpdateRule& rule, std::size_t n_cases, std::uint64_t seed,
                                    double tolerance) {
  std::mt19937_64 rng(seed);
  QuadratureOptions qo;
  qo.tolerance = 1e-11;
  ModelCheck out{model, n_cases, 0.0, {}, {}};
  for (std::size_t i = 0; i < n_cases; ++i) {
    const TdContext ctx = random_context(model, rng);
    const DensityParams closed = rule(ctx);
    const DensityParams numeric = ng_update_numeric(ctx, qo);
    const double err = max_relative_difference(closed, numeric);
    std::ostringstream line;
    line.precision(17);
    line << to_string(model) << " case " << i << ": rel_err=" << err << ' ' << describe_context(ctx)
         << " closed=" << format_params(closed) << " quadrature=" << format_params(numeric);
    if (i == 0 || !(err <= out.worst)) {
      out.worst = err;
      out.worst_case = line.str();
    }
    if (!(err <= tolerance)) out.failures.push_back(line.str());
  }
  return out;
}

/// Grid fixed point on random 3-state MDPs under random policies vs the linear system.
inline FixedPointCheck check_fixed_points(const OracleCheckOptions& opt) {
  std::mt19937_64 rng(opt.seed ^ 0x5bd1e995ULL);
  FixedPointCheck out;
  const double gamma = 0.8;
  const GridSpec grid{-6.0, 6.0, 1201};
  out.iteration_bound = fixed_point_iteration_bound(gamma, opt.fixed_point_tol, opt.iteration_margin);
  for (std::size_t k = 0; k < opt.n_mdps; ++k) {
    const TabularMdp mdp = random_mdp(3, 2, gamma, rng);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<double> probs;
    for (std::size_t s = 0; s < 3; ++s) {
      const double p = unit(rng);
      probs.push_back(p);
      probs.push_back(1.0 - p);
    }
    const StochasticPolicy policy(3, 2, probs);
    ++out.cases;
    try {
      const auto fp = iterate_to_fixed_point(mdp, policy, zero_return_table(mdp, grid), opt.fixed_point_tol,
                                             opt.iteration_margin);
      const Eigen::VectorXd q = exact_q_values(mdp, policy);
      out.worst_iterations = std::max(out.worst_iterations, fp.iterations);
      for (std::size_t s = 0; s < 3; ++s)
        for (std::size_t a = 0; a < 2; ++a) {
          const double err = std::abs(grid_stats(fp.table.at(s, a)).mean - q[static_cast<Eigen::Index>(s * 2 + a)]);
          const double bins = err / grid.width();
          out.worst_mean_error_bins = std::max(out.worst_mean_error_bins, bins);
          if (bins > opt.mean_tolerance_bins)
            out.failures.push_back("fixed point mdp " + std::to_string(k) + " (s=" + std::to_string(s) +
                                   ", a=" + std::to_string(a) + "): mean off by " + std::to_string(bins) + " bins");
        }
    } catch (const std::exception& e) {
      out.failures.push_back("fixed point mdp " + std::to_string(k) + ": " + e.what());
    }
  }
  return out;
}

inline OracleReport run_oracle_check(const OracleCheckOptions& opt, const UpdateRules& rules = {}) {
  OracleReport report;
  std::uint64_t state = opt.seed;
  for (ModelKind m : {ModelKind::gaussian, ModelKind::laplace, ModelKind::skewed_laplace})
    report.models.push_back(check_update_rule(m, rules[m], opt.n_cases, splitmix64(state), opt.tolerance));
  report.fixed_point = check_fixed_points(opt);
  return report;
}

inline void print_oracle_report(std::ostream& os, const OracleReport& r) {
  const auto prec = os.precision(6);
  for (const auto& m : r.models) {
    os << to_string(m.model) << ": " << m.cases << " cases, worst relative discrepancy " << m.worst
       << (m.failures.empty() ? " ok" : " FAIL") << '\n';
    for (const auto& f : m.failures) os << "  " << f << '\n';
  }
  const auto& fp = r.fixed_point;
  os << "fixed point: " << fp.cases << " mdps, worst mean error " << fp.worst_mean_error_bins << " bins, "
     << fp.worst_iterations << " iterations (bound " << fp.iteration_bound << ')'
     << (fp.failures.empty() ? " ok" : " FAIL") << '\n';
  for (const auto& f : fp.failures) os << "  " << f << '\n';
  os.precision(prec);
}

}  // namespace retden
