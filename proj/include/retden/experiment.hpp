#pragma once

// Trial runner, Monte Carlo return evaluation and multi-trial aggregation.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "retden/agents.hpp"
#include "retden/bellman.hpp"
#include "retden/mdp.hpp"

namespace retden {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::vector<std::uint64_t> trial_seeds(std::uint64_t master_seed, std::size_t n) {
  std::vector<std::uint64_t> out(n);
  std::uint64_t state = master_seed;
  for (auto& s : out) s = splitmix64(state);
  return out;
}

/// Smallest K with gamma^K * r_bound / (1 - gamma) below `tolerance`.
inline std::int64_t auto_horizon(double gamma, double r_bound, double tolerance = 1e-3) {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw std::invalid_argument("auto_horizon: discount must lie in [0, 1)");
  if (gamma == 0.0 || r_bound <= 0.0) return 1;
  const double k = std::log(tolerance * (1.0 - gamma) / r_bound) / std::log(gamma);
  return std::max<std::int64_t>(1, static_cast<std::int64_t>(std::ceil(k)));
}

/// Largest |deterministic reward| of the MDP; `heavy_tail` reports any stochastic reward.
inline double reward_bound(const TabularMdp& mdp, bool* heavy_tail = nullptr) {
  double bound = 0.0;
  bool stochastic = false;
  for (const auto& r : mdp.reward_specs()) {
    if (is_deterministic(r)) bound = std::max(bound, std::abs(std::get<Deterministic>(r).value));
    else stochastic = true;
  }
  if (heavy_tail) *heavy_tail = stochastic;
  return bound;
}

/// Linear interpolation between order statistics; `sorted` must be ascending.
inline double empirical_quantile(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw std::invalid_argument("empirical_quantile: no data");
  if (!(q >= 0.0 && q <= 1.0)) throw std::domain_error("empirical_quantile: level outside [0, 1]");
  const double h = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

struct ReturnStats {
  double mean = 0.0;
  std::vector<double> levels;
  std::vector<double> quantile_values;
  std::int64_t n_rollouts = 0;
  std::int64_t horizon = 0;
  /// Stochastic rewards make the horizon bound approximate.
  bool reward_truncation = false;

  double quantile(double q) const {
    for (std::size_t i = 0; i < levels.size(); ++i)
      if (levels[i] == q) return quantile_values[i];
    throw std::out_of_range("ReturnStats: level not evaluated");
  }
};

/// Truncated discounted returns of `policy` from `start`, summarized.
template <class Rng>
ReturnStats monte_carlo_return_stats(const TabularMdp& mdp, const StochasticPolicy& policy, std::size_t start,
                                     std::int64_t n_rollouts, std::int64_t horizon, std::span<const double> levels,
                                     Rng& rng) {
  if (n_rollouts <= 0 || horizon <= 0) throw std::invalid_argument("monte carlo: rollouts and horizon must be positive");
  if (!std::is_sorted(levels.begin(), levels.end()))
    throw std::invalid_argument("monte carlo: quantile levels must be sorted");
  const double gamma = mdp.discount();
  const std::size_t n_actions = mdp.n_actions();

  // deterministic rows skip the action draw
  std::vector<std::optional<std::size_t>> fixed(mdp.n_states());
  for (std::size_t s = 0; s < mdp.n_states(); ++s)
    for (std::size_t a = 0; a < n_actions; ++a)
      if (policy(s, a) == 1.0) fixed[s] = a;

  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<double> returns(static_cast<std::size_t>(n_rollouts));
  for (auto& g : returns) {
    std::size_t s = start;
    double total = 0.0, weight = 1.0;
    for (std::int64_t k = 0; k < horizon; ++k) {
      std::size_t a = n_actions - 1;
      if (fixed[s]) {
        a = *fixed[s];
      } else {
        const double u = unif(rng);
        double acc = 0.0;
        for (std::size_t b = 0; b < n_actions; ++b) {
          acc += policy(s, b);
          if (u < acc) {
            a = b;
            break;
          }
        }
      }
      const TransitionSample t = step(mdp, s, a, rng);
      total += weight * t.reward;
      weight *= gamma;
      s = t.next_state;
    }
    g = total;
  }

  ReturnStats out;
  double sum = 0.0;
  for (double g : returns) sum += g;
  out.mean = sum / static_cast<double>(returns.size());
  std::sort(returns.begin(), returns.end());
  out.levels.assign(levels.begin(), levels.end());
  for (double q : levels) out.quantile_values.push_back(empirical_quantile(returns, q));
  out.n_rollouts = n_rollouts;
  out.horizon = horizon;
  return out;
}

struct EvalSpec {
  std::int64_t n_rollouts = 100000;
  std::optional<std::int64_t> horizon;  // unset: auto
  std::vector<double> quantiles{0.01, 0.1, 0.3, 0.5};
};

struct ExperimentConfig {
  std::string name = "experiment";
  GridWorldSpec mdp;
  AgentSpec agent;
  PolicySpec policy = PolicySpec::epsilon_greedy(Schedule::linear(1.0, 0.0, 300000));
  std::int64_t total_steps = 300000;
  std::size_t n_trials = 20;
  EvalSpec eval;
  std::uint64_t master_seed = 1;

  /// Also rescales step-indexed schedules, which are defined relative to T.
  void set_total_steps(std::int64_t t) {
    total_steps = t;
    agent.learning_rate.horizon = t;
    policy.schedule.horizon = t;
  }

  void validate() const {
    agent.validate();
    if (total_steps < 0) throw std::invalid_argument("config: total_steps must be >= 0");
    if (n_trials == 0) throw std::invalid_argument("config: n_trials must be positive");
    if (eval.n_rollouts <= 0) throw std::invalid_argument("config: n_rollouts must be positive");
    if (eval.horizon && *eval.horizon <= 0) throw std::invalid_argument("config: horizon must be positive");
    for (std::size_t i = 0; i < eval.quantiles.size(); ++i) {
      const double q = eval.quantiles[i];
      if (!(q > 0.0 && q < 1.0)) throw std::invalid_argument("config: quantile levels must lie in (0, 1)");
      if (i > 0 && !(q > eval.quantiles[i - 1])) throw std::invalid_argument("config: quantile levels must increase");
    }
    build_grid_world(mdp);
  }
};

struct TrialResult {
  AgentState state;
  std::vector<std::size_t> greedy;
  std::vector<std::size_t> path;
  ReturnStats stats;
  std::uint64_t seed = 0;
};

/// Raised when a learner's parameters become invalid; carries the step index.
struct TrainingError : std::runtime_error {
  std::int64_t step;
  TrainingError(std::int64_t t, const std::string& what)
      : std::runtime_error("step " + std::to_string(t) + ": " + what), step(t) {}
};

/// Learns for T steps from the start state, freezes the greedy policy and evaluates it.
inline TrialResult run_trial(const ExperimentConfig& config, std::uint64_t seed) {
  config.validate();
  const TabularMdp mdp = build_grid_world(config.mdp);
  const AgentSpec& spec = config.agent;
  const double gamma = mdp.discount();

  std::mt19937_64 rng(seed);
  AgentState st = make_agent_state(spec, mdp.n_states(), mdp.n_actions(), config.mdp.goal_reward / (1.0 - gamma));
  std::size_t s = mdp.start_state();
  std::vector<double> next_policy;
  for (std::int64_t t = 0; t < config.total_steps; ++t) {
    try {
      const auto values = action_values(spec, st, s);
      const std::size_t a = select_action(config.policy, values, t, rng);
      const TransitionSample sample = step(mdp, s, a, rng);
      next_policy.clear();
      if (spec.algorithm == Algorithm::qq_learning && spec.target == TargetMode::on_policy)
        next_policy = policy_probabilities(config.policy, action_values(spec, st, sample.next_state), t);
      agent_step(spec, st, sample, gamma, next_policy);
      s = sample.next_state;
    } catch (const std::domain_error& e) {
      throw TrainingError(t, e.what());
    } catch (const std::invalid_argument& e) {
      throw TrainingError(t, e.what());
    }
  }

  TrialResult out;
  out.seed = seed;
  out.greedy = greedy_actions(spec, st);
  out.path = greedy_path(mdp, out.greedy);
  bool heavy = false;
  const std::int64_t horizon = config.eval.horizon.value_or(auto_horizon(gamma, reward_bound(mdp, &heavy)));
  std::uint64_t eval_state = seed;
  std::mt19937_64 eval_rng(splitmix64(eval_state));
  out.stats = monte_carlo_return_stats(mdp, StochasticPolicy::deterministic(mdp.n_actions(), out.greedy),
                                       mdp.start_state(), config.eval.n_rollouts, horizon, config.eval.quantiles,
                                       eval_rng);
  out.stats.reward_truncation = heavy;
  out.state = std::move(st);
  return out;
}

/// Statistic names in output order: "mean", then "q<level>" per quantile level.
inline std::vector<std::string> statistic_names(std::span<const double> levels) {
  std::vector<std::string> names{"mean"};
  for (double q : levels) {
    std::ostringstream os;
    os << 'q' << q;
    names.push_back(os.str());
  }
  return names;
}

inline std::vector<double> statistic_values(const ReturnStats& s) {
  std::vector<double> v{s.mean};
  v.insert(v.end(), s.quantile_values.begin(), s.quantile_values.end());
  return v;
}

struct StatSummary {
  std::string statistic;
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation (n - 1); 0 for a single trial
  std::size_t n = 0;
};

inline StatSummary summarize(std::string name, std::span<const double> xs) {
  StatSummary out{std::move(name), 0.0, 0.0, xs.size()};
  if (xs.empty()) return out;
  for (double x : xs) out.mean += x;
  out.mean /= static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - out.mean) * (x - out.mean);
    out.std = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  }
  return out;
}

struct ExperimentResult {
  ExperimentConfig config;
  std::vector<TrialResult> trials;
  std::vector<StatSummary> summary;

  std::vector<double> column(std::size_t stat) const {
    std::vector<double> out;
    for (const auto& t : trials) out.push_back(statistic_values(t.stats).at(stat));
    return out;
  }
  const StatSummary& find(const std::string& name) const {
    for (const auto& s : summary)
      if (s.statistic == name) return s;
    throw std::out_of_range("no statistic '" + name + "'");
  }
};

/// Runs one trial per seed on up to `workers` threads; results keep seed order.
inline ExperimentResult run_trials(const ExperimentConfig& config, std::span<const std::uint64_t> seeds,
                                   std::size_t workers = 1) {
  config.validate();
  std::vector<std::optional<TrialResult>> slots(seeds.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto work = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < seeds.size();) {
      try {
        slots[i] = run_trial(config, seeds[i]);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = seeds.size();
      }
    }
  };
  workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(seeds.size(), 1));
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(work);
    work();
  }
  if (failure) std::rethrow_exception(failure);

  ExperimentResult out;
  out.config = config;
  for (auto& slot : slots) out.trials.push_back(std::move(*slot));
  const auto names = statistic_names(config.eval.quantiles);
  for (std::size_t k = 0; k < names.size(); ++k) out.summary.push_back(summarize(names[k], out.column(k)));
  return out;
}

inline ExperimentResult run_experiment(const ExperimentConfig& config, std::size_t workers = 1) {
  const auto seeds = trial_seeds(config.master_seed, config.n_trials);
  return run_trials(config, seeds, workers);
}

struct WelchResult {
  double t = 0.0;
  double dof = 0.0;
  double p_value = 1.0;
  bool significant = false;
  /// False when both samples have zero variance.
  bool comparable = true;
};

/// Two-sided Welch t-test with Welch-Satterthwaite degrees of freedom.
inline WelchResult welch_t_test(std::span<const double> a, std::span<const double> b, double level = 0.01) {
  if (a.size() < 2 || b.size() < 2) throw std::invalid_argument("welch_t_test: need at least two values per sample");
  const StatSummary sa = summarize("a", a), sb = summarize("b", b);
  const double va = sa.std * sa.std / static_cast<double>(a.size());
  const double vb = sb.std * sb.std / static_cast<double>(b.size());
  WelchResult out;
  if (va + vb == 0.0) {
    out.comparable = false;
    return out;
  }
  out.t = (sa.mean - sb.mean) / std::sqrt(va + vb);
  out.dof = (va + vb) * (va + vb) /
            (va * va / static_cast<double>(a.size() - 1) + vb * vb / static_cast<double>(b.size() - 1));
  const boost::math::students_t dist(out.dof);
  out.p_value = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(out.t)));
  out.significant = out.p_value < level;
  return out;
}

/// True if the path visits none of `cells`.
inline bool path_avoids(std::span<const std::size_t> path, std::span<const std::size_t> cells) {
  for (std::size_t s : path)
    if (std::find(cells.begin(), cells.end(), s) != cells.end()) return false;
  return true;
}

inline std::string model_label(const AgentSpec& spec) {
  return spec.algorithm == Algorithm::qq_learning ? std::string(to_string(spec.model)) : "none";
}

inline std::string q_label(const AgentSpec& spec) {
  return spec.algorithm == Algorithm::qq_learning ? format_double(spec.q) : "none";
}

inline const char* kResultsHeader = "algorithm,model,q,statistic,mean,std,n_trials,seed";

/// One row per statistic.
inline void write_results_csv(std::ostream& os, const ExperimentResult& r) {
  const auto prec = os.precision(17);
  os << kResultsHeader << '\n';
  for (const auto& s : r.summary)
    os << to_string(r.config.agent.algorithm) << ',' << model_label(r.config.agent) << ',' << q_label(r.config.agent)
       << ',' << s.statistic << ',' << s.mean << ',' << s.std << ',' << s.n << ',' << r.config.master_seed << '\n';
  os.precision(prec);
}

inline const char* kTrialsHeader = "algorithm,model,q,master_seed,trial,seed,statistic,value";

/// Long format: one row per (trial, statistic).
inline void write_trials_csv(std::ostream& os, const ExperimentResult& r) {
  const auto prec = os.precision(17);
  os << kTrialsHeader << '\n';
  const auto names = statistic_names(r.config.eval.quantiles);
  for (std::size_t i = 0; i < r.trials.size(); ++i) {
    const auto values = statistic_values(r.trials[i].stats);
    for (std::size_t k = 0; k < names.size(); ++k)
      os << to_string(r.config.agent.algorithm) << ',' << model_label(r.config.agent) << ','
         << q_label(r.config.agent) << ',' << r.config.master_seed << ',' << i << ',' << r.trials[i].seed << ','
         << names[k] << ',' << values[k] << '\n';
  }
  os.precision(prec);
}

/// Greedy paths as space-separated state indices, with the cliff-row check.
inline void write_paths_csv(std::ostream& os, const ExperimentResult& r) {
  os << "trial,seed,avoids_cliff_row,path\n";
  const auto risky = cliff_adjacent_states(r.config.mdp);
  for (std::size_t i = 0; i < r.trials.size(); ++i) {
    os << i << ',' << r.trials[i].seed << ',' << (path_avoids(r.trials[i].path, risky) ? 1 : 0) << ',';
    for (std::size_t k = 0; k < r.trials[i].path.size(); ++k) os << (k ? " " : "") << r.trials[i].path[k];
    os << '\n';
  }
}

struct ReportRow {
  std::string algorithm, model, q, statistic, master_seed;
  StatSummary summary;
};

/// Re-aggregates a trials file written by write_trials_csv.
inline std::vector<ReportRow> aggregate_trials_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || detail::trim(line) != kTrialsHeader)
    throw std::invalid_argument("trials file: unexpected header");
  std::vector<ReportRow> rows;
  std::map<std::string, std::size_t> index;
  std::vector<std::vector<double>> values;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    std::vector<std::string> f;
    std::istringstream ls(line);
    for (std::string part; std::getline(ls, part, ',');) f.push_back(part);
    if (f.size() != 8) throw std::invalid_argument("trials file: line " + std::to_string(lineno) + " has wrong arity");
    const std::string key = f[0] + ',' + f[1] + ',' + f[2] + ',' + f[3] + ',' + f[6];
    auto [it, fresh] = index.emplace(key, rows.size());
    if (fresh) {
      rows.push_back({f[0], f[1], f[2], f[6], f[3], {}});
      values.emplace_back();
    }
    values[it->second].push_back(detail::parse_double("value", f[7]));
  }
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i].summary = summarize(rows[i].statistic, values[i]);
  return rows;
}

inline void write_report_csv(std::ostream& os, std::span<const ReportRow> rows) {
  const auto prec = os.precision(17);
  os << kResultsHeader << '\n';
  for (const auto& r : rows)
    os << r.algorithm << ',' << r.model << ',' << r.q << ',' << r.statistic << ',' << r.summary.mean << ','
       << r.summary.std << ',' << r.summary.n << ',' << r.master_seed << '\n';
  os.precision(prec);
}

}  // namespace retden
