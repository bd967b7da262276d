#pragma once

// Tabular control agents: q-quantile Q-learning / SARSA over return-density models,
// Watkins' Q-learning and the worst-case Q-hat baseline.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "retden/density.hpp"
#include "retden/mdp.hpp"
#include "retden/ng_update.hpp"
#include "retden/param_table.hpp"

namespace retden {

/// Step-indexed schedule. `horizon` is the total step count T used by the
/// harmonic and linear forms; the returned value is divided by `divisor`.
struct Schedule {
  enum class Kind { constant, harmonic, linear };
  Kind kind = Kind::constant;
  double a = 0.0;  // constant value | harmonic offset | linear start
  double b = 0.0;  // harmonic slope | linear end
  std::int64_t horizon = 1;
  double divisor = 1.0;

  static Schedule constant(double v) { return {Kind::constant, v, 0.0, 1, 1.0}; }
  /// 1 / (offset + slope * t / T)
  static Schedule harmonic(double offset, double slope, std::int64_t T) {
    return {Kind::harmonic, offset, slope, T, 1.0};
  }
  /// start + (end - start) * t / T
  static Schedule linear(double start, double end, std::int64_t T) { return {Kind::linear, start, end, T, 1.0}; }

  double operator()(std::int64_t t) const {
    const double frac = static_cast<double>(t) / static_cast<double>(std::max<std::int64_t>(horizon, 1));
    double v = 0.0;
    switch (kind) {
      case Kind::constant: v = a; break;
      case Kind::harmonic: v = 1.0 / (a + b * frac); break;
      case Kind::linear: v = a + (b - a) * frac; break;
    }
    return v / divisor;
  }
};

inline std::string format_schedule(const Schedule& s) {
  std::ostringstream os;
  switch (s.kind) {
    case Schedule::Kind::constant: os << "constant " << format_double(s.a); break;
    case Schedule::Kind::harmonic: os << "harmonic " << format_double(s.a) << ' ' << format_double(s.b); break;
    case Schedule::Kind::linear: os << "linear " << format_double(s.a) << ' ' << format_double(s.b); break;
  }
  return os.str();
}

/// Parses "constant V", "harmonic OFFSET SLOPE" or "linear START END"; T is supplied separately.
inline Schedule parse_schedule(const std::string& text, std::int64_t horizon) {
  std::istringstream is(text);
  std::string kind;
  double x = 0.0, y = 0.0;
  is >> kind;
  if (kind == "constant" && (is >> x)) return Schedule::constant(x);
  if (kind == "harmonic" && (is >> x >> y)) return Schedule::harmonic(x, y, horizon);
  if (kind == "linear" && (is >> x >> y)) return Schedule::linear(x, y, horizon);
  throw std::invalid_argument("bad schedule '" + text + "'");
}

struct PolicySpec {
  enum class Kind { softmax, epsilon_greedy };
  Kind kind = Kind::epsilon_greedy;
  Schedule schedule;  // beta_t for softmax, epsilon_t for epsilon-greedy

  static PolicySpec softmax(Schedule beta) { return {Kind::softmax, beta}; }
  static PolicySpec epsilon_greedy(Schedule epsilon) { return {Kind::epsilon_greedy, epsilon}; }
};

enum class Algorithm { qq_learning, watkins_q, q_hat };
enum class TargetMode { off_policy, on_policy };

inline std::string_view to_string(Algorithm a) {
  switch (a) {
    case Algorithm::qq_learning: return "qq_learning";
    case Algorithm::watkins_q: return "watkins_q";
    case Algorithm::q_hat: return "q_hat";
  }
  return "?";
}

inline Algorithm parse_algorithm(std::string_view s) {
  if (s == "qq_learning") return Algorithm::qq_learning;
  if (s == "watkins_q") return Algorithm::watkins_q;
  if (s == "q_hat") return Algorithm::q_hat;
  throw std::invalid_argument("unknown algorithm '" + std::string(s) + "'");
}

struct AgentSpec {
  Algorithm algorithm = Algorithm::qq_learning;
  ModelKind model = ModelKind::gaussian;
  double q = 0.5;
  TargetMode target = TargetMode::off_policy;
  GradientKind gradient = GradientKind::natural;
  Schedule learning_rate = Schedule::constant(0.1);
  /// Initial Q for q_hat; unset means goal_reward / (1 - gamma) chosen by the caller.
  std::optional<double> optimistic_init;

  void validate() const {
    if (algorithm == Algorithm::qq_learning && !(q > 0.0 && q < 1.0))
      throw std::invalid_argument("AgentSpec: q must lie in (0, 1)");
  }
};

/// Learner state: a parameter table for q-Q agents, a scalar Q table otherwise.
struct AgentState {
  std::optional<ParamTable> params;
  std::vector<double> q_table;
  std::size_t n_states = 0;
  std::size_t n_actions = 0;
  std::int64_t step = 0;

  double q(std::size_t s, std::size_t a) const { return q_table.at(s * n_actions + a); }
  double& q(std::size_t s, std::size_t a) { return q_table.at(s * n_actions + a); }
};

/// Zero-centered unit-scale densities (skewness starts at q), or a constant Q table.
inline AgentState make_agent_state(const AgentSpec& spec, std::size_t n_states, std::size_t n_actions,
                                   double q_init = 0.0) {
  spec.validate();
  AgentState st;
  st.n_states = n_states;
  st.n_actions = n_actions;
  if (spec.algorithm == Algorithm::qq_learning) {
    DensityParams init = GaussianParams(0.0, 1.0);
    if (spec.model == ModelKind::laplace) init = LaplaceParams(0.0, 1.0);
    if (spec.model == ModelKind::skewed_laplace)
      init = SkewedLaplaceParams(0.0, 1.0, std::clamp(spec.q, ParamFloors::skew_lo, ParamFloors::skew_hi));
    st.params.emplace(n_states, n_actions, init);
  } else {
    st.q_table.assign(n_states * n_actions, spec.algorithm == Algorithm::q_hat
                                                ? spec.optimistic_init.value_or(q_init)
                                                : q_init);
  }
  return st;
}

/// q-quantile of the return density: the value a q-Q agent maximizes.
inline double q_value(const DensityParams& params, double q) { return quantile(params, q); }

/// Per-action decision values at `state`.
inline std::vector<double> action_values(const AgentSpec& spec, const AgentState& st, std::size_t state) {
  std::vector<double> v(st.n_actions);
  for (std::size_t a = 0; a < st.n_actions; ++a)
    v[a] = spec.algorithm == Algorithm::qq_learning ? q_value(st.params->at(state, a), spec.q) : st.q(state, a);
  return v;
}

inline std::size_t argmax(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t a = 1; a < values.size(); ++a)
    if (values[a] > values[best]) best = a;
  return best;
}

/// Action probabilities of the policy at step t.
inline std::vector<double> policy_probabilities(const PolicySpec& policy, std::span<const double> values,
                                                std::int64_t t) {
  const std::size_t n = values.size();
  std::vector<double> p(n, 0.0);
  if (policy.kind == PolicySpec::Kind::epsilon_greedy) {
    const double eps = std::clamp(policy.schedule(t), 0.0, 1.0);
    for (auto& x : p) x = eps / static_cast<double>(n);
    p[argmax(values)] += 1.0 - eps;
    return p;
  }
  const double beta = policy.schedule(t);
  if (!(beta >= 0.0)) throw std::domain_error("softmax: inverse temperature must be >= 0");
  const double top = *std::max_element(values.begin(), values.end());
  double total = 0.0;
  for (std::size_t a = 0; a < n; ++a) {
    // beta = inf with a tie at the top keeps the tied actions at exp(0)
    const double gap = values[a] - top;
    p[a] = gap == 0.0 ? 1.0 : std::exp(beta * gap);
    total += p[a];
  }
  for (auto& x : p) x /= total;
  return p;
}

template <class Rng>
std::size_t select_action(const PolicySpec& policy, std::span<const double> values, std::int64_t t, Rng& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  if (policy.kind == PolicySpec::Kind::epsilon_greedy) {
    const double eps = std::clamp(policy.schedule(t), 0.0, 1.0);
    if (unif(rng) < eps) {
      std::uniform_int_distribution<std::size_t> pick(0, values.size() - 1);
      return pick(rng);
    }
    return argmax(values);
  }
  const auto p = policy_probabilities(policy, values, t);
  const double u = unif(rng);
  double acc = 0.0;
  for (std::size_t a = 0; a < p.size(); ++a) {
    acc += p[a];
    if (u < acc) return a;
  }
  return p.size() - 1;
}

/// One learning update from an observed transition. `next_policy` holds pi(.|s')
/// and is only read by on-policy q-SARSA agents.
inline void agent_step(const AgentSpec& spec, AgentState& st, const TransitionSample& sample, double discount,
                       std::span<const double> next_policy = {}) {
  const double alpha = spec.learning_rate(st.step);
  switch (spec.algorithm) {
    case Algorithm::qq_learning: {
      ParamTable& table = *st.params;
      TdContext ctx{sample.reward, discount, alpha, table.at(sample.state, sample.action), {}};
      ctx.target = spec.target == TargetMode::off_policy
                       ? build_target_offpolicy(table, sample.next_state, spec.q)
                       : build_target_onpolicy(table, sample.next_state, next_policy);
      table.set(sample.state, sample.action, ng_update(ctx, spec.gradient));
      break;
    }
    case Algorithm::watkins_q: {
      double best = st.q(sample.next_state, 0);
      for (std::size_t a = 1; a < st.n_actions; ++a) best = std::max(best, st.q(sample.next_state, a));
      double& cell = st.q(sample.state, sample.action);
      cell = cell + alpha * (sample.reward + discount * best - cell);
      break;
    }
    case Algorithm::q_hat: {
      double best = st.q(sample.next_state, 0);
      for (std::size_t a = 1; a < st.n_actions; ++a) best = std::max(best, st.q(sample.next_state, a));
      double& cell = st.q(sample.state, sample.action);
      cell = std::min(cell, sample.reward + discount * best);
      break;
    }
  }
  ++st.step;
}

inline std::vector<std::size_t> greedy_actions(const AgentSpec& spec, const AgentState& st) {
  std::vector<std::size_t> out(st.n_states);
  for (std::size_t s = 0; s < st.n_states; ++s) out[s] = argmax(action_values(spec, st, s));
  return out;
}

/// Follows the greedy action and the most probable successor from the start state,
/// stopping on a goal arrival (the goal is appended) or on a revisit.
inline std::vector<std::size_t> greedy_path(const TabularMdp& mdp, std::span<const std::size_t> greedy) {
  if (greedy.size() != mdp.n_states()) throw std::invalid_argument("greedy_path: one action per state required");
  std::vector<std::size_t> path{mdp.start_state()};
  std::vector<bool> visited(mdp.n_states(), false);
  visited[mdp.start_state()] = true;
  std::size_t s = mdp.start_state();
  for (std::size_t k = 0; k < mdp.n_states(); ++k) {
    const std::size_t a = greedy[s];
    std::size_t next = s;
    double best = -1.0;
    for (const auto& o : mdp.outcomes(s, a))
      if (o.probability > best) {
        best = o.probability;
        next = o.next_state;
      }
    if (mdp.arrives_at_goal(s, a, next)) {
      path.push_back(mdp.goal_state().value_or(next));
      break;
    }
    if (visited[next]) break;
    visited[next] = true;
    path.push_back(next);
    s = next;
  }
  return path;
}

/// Checkpoint: step counter, then the parameter table or the Q table.
inline void write_agent_state(std::ostream& os, const AgentState& st) {
  os << "step " << st.step << '\n';
  if (st.params) {
    write_param_table(os, *st.params);
    return;
  }
  const auto prec = os.precision(17);
  os << "# state action q\n";
  for (std::size_t s = 0; s < st.n_states; ++s)
    for (std::size_t a = 0; a < st.n_actions; ++a) os << s << ' ' << a << " q " << st.q(s, a) << '\n';
  os.precision(prec);
}

}  // namespace retden
