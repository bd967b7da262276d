#pragma once

// INI-style experiment configuration and the bundled cliff-walk presets.
//
//   [run]       name, n_trials, master_seed, total_steps
//   [mdp]       grid world keys (see read_grid_world)
//   [agent]     algorithm, model, q, target, gradient, optimistic_init
//   [schedules] learning_rate
//   [policy]    kind, schedule
//   [eval]      n_rollouts, horizon, quantiles

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "retden/agents.hpp"
#include "retden/experiment.hpp"
#include "retden/mdp.hpp"

namespace retden {

struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

namespace detail {

inline std::int64_t parse_int(const std::string& key, const std::string& text) {
  std::size_t used = 0;
  long long v = 0;
  try {
    v = std::stoll(trim(text), &used);
  } catch (const std::exception&) {
    throw ConfigError("config: '" + key + "' expects an integer, got '" + text + "'");
  }
  if (used != trim(text).size()) throw ConfigError("config: '" + key + "' expects an integer, got '" + text + "'");
  return v;
}

}  // namespace detail

inline std::string_view to_string(TargetMode m) { return m == TargetMode::off_policy ? "off_policy" : "on_policy"; }
inline std::string_view to_string(GradientKind g) { return g == GradientKind::natural ? "natural" : "ordinary"; }

/// Parses an INI document. Absent keys keep their defaults; unknown keys are errors.
inline ExperimentConfig parse_config(std::istream& is) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::read_ini(is, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }

  const std::set<std::string> sections{"run", "mdp", "agent", "schedules", "policy", "eval", "manifest"};
  for (const auto& [name, _] : tree)
    if (!sections.contains(name)) throw ConfigError("config: unknown section [" + name + "]");

  auto section = [&](const std::string& name) -> const pt::ptree& {
    static const pt::ptree empty;
    const auto it = tree.find(name);
    return it == tree.not_found() ? empty : it->second;
  };
  auto check_keys = [&](const std::string& name, const std::set<std::string>& allowed) {
    for (const auto& [key, _] : section(name))
      if (!allowed.contains(key)) throw ConfigError("config: unknown key '" + key + "' in [" + name + "]");
  };

  ExperimentConfig cfg;
  try {
    check_keys("run", {"name", "n_trials", "master_seed", "total_steps"});
    const auto& run = section("run");
    if (auto v = run.get_optional<std::string>("name")) cfg.name = detail::trim(*v);
    if (auto v = run.get_optional<std::string>("n_trials")) {
      const auto n = detail::parse_int("n_trials", *v);
      if (n <= 0) throw ConfigError("config: n_trials must be positive");
      cfg.n_trials = static_cast<std::size_t>(n);
    }
    if (auto v = run.get_optional<std::string>("master_seed"))
      cfg.master_seed = static_cast<std::uint64_t>(detail::parse_int("master_seed", *v));
    if (auto v = run.get_optional<std::string>("total_steps")) cfg.total_steps = detail::parse_int("total_steps", *v);
    const std::int64_t T = cfg.total_steps;

    for (const auto& [key, value] : section("mdp")) set_grid_world_key(cfg.mdp, key, value.data());

    check_keys("agent", {"algorithm", "model", "q", "target", "gradient", "optimistic_init"});
    const auto& agent = section("agent");
    if (auto v = agent.get_optional<std::string>("algorithm")) cfg.agent.algorithm = parse_algorithm(detail::trim(*v));
    if (auto v = agent.get_optional<std::string>("model")) cfg.agent.model = parse_model_kind(detail::trim(*v));
    if (auto v = agent.get_optional<std::string>("q")) cfg.agent.q = detail::parse_double("q", *v);
    if (auto v = agent.get_optional<std::string>("target")) {
      const auto t = detail::trim(*v);
      if (t == "off_policy") cfg.agent.target = TargetMode::off_policy;
      else if (t == "on_policy") cfg.agent.target = TargetMode::on_policy;
      else throw ConfigError("config: target must be off_policy or on_policy");
    }
    if (auto v = agent.get_optional<std::string>("gradient")) {
      const auto g = detail::trim(*v);
      if (g == "natural") cfg.agent.gradient = GradientKind::natural;
      else if (g == "ordinary") cfg.agent.gradient = GradientKind::ordinary;
      else throw ConfigError("config: gradient must be natural or ordinary");
    }
    if (auto v = agent.get_optional<std::string>("optimistic_init"))
      cfg.agent.optimistic_init = detail::parse_double("optimistic_init", *v);

    check_keys("schedules", {"learning_rate"});
    cfg.agent.learning_rate = parse_schedule(section("schedules").get("learning_rate", "harmonic 30 30"), T);

    check_keys("policy", {"kind", "schedule"});
    const auto& policy = section("policy");
    const auto kind = detail::trim(policy.get("kind", "epsilon_greedy"));
    const auto sched = parse_schedule(policy.get("schedule", "linear 1 0"), T);
    if (kind == "epsilon_greedy") cfg.policy = PolicySpec::epsilon_greedy(sched);
    else if (kind == "softmax") cfg.policy = PolicySpec::softmax(sched);
    else throw ConfigError("config: policy kind must be epsilon_greedy or softmax");

    check_keys("eval", {"n_rollouts", "horizon", "quantiles"});
    const auto& eval = section("eval");
    if (auto v = eval.get_optional<std::string>("n_rollouts"))
      cfg.eval.n_rollouts = detail::parse_int("n_rollouts", *v);
    if (auto v = eval.get_optional<std::string>("horizon")) {
      if (detail::trim(*v) == "auto") cfg.eval.horizon.reset();
      else cfg.eval.horizon = detail::parse_int("horizon", *v);
    }
    if (auto v = eval.get_optional<std::string>("quantiles")) {
      cfg.eval.quantiles.clear();
      std::istringstream qs(*v);
      for (std::string tok; qs >> tok;) cfg.eval.quantiles.push_back(detail::parse_double("quantiles", tok));
    }
    cfg.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return cfg;
}

/// Canonical INI text; parse_config(write_config(c)) == c.
inline void write_config(std::ostream& os, const ExperimentConfig& c) {
  os << "[run]\n"
     << "name = " << c.name << '\n'
     << "n_trials = " << c.n_trials << '\n'
     << "master_seed = " << c.master_seed << '\n'
     << "total_steps = " << c.total_steps << "\n\n";
  os << "[mdp]\n";
  std::ostringstream grid;
  write_grid_world(grid, c.mdp);
  std::istringstream lines(grid.str());
  for (std::string line; std::getline(lines, line);)
    if (!line.empty() && line[0] != '#') os << line << '\n';
  os << '\n';
  os << "[agent]\n"
     << "algorithm = " << to_string(c.agent.algorithm) << '\n'
     << "model = " << to_string(c.agent.model) << '\n'
     << "q = " << format_double(c.agent.q) << '\n'
     << "target = " << to_string(c.agent.target) << '\n'
     << "gradient = " << to_string(c.agent.gradient) << '\n';
  if (c.agent.optimistic_init) os << "optimistic_init = " << format_double(*c.agent.optimistic_init) << '\n';
  os << '\n';
  os << "[schedules]\n"
     << "learning_rate = " << format_schedule(c.agent.learning_rate) << "\n\n";
  os << "[policy]\n"
     << "kind = " << (c.policy.kind == PolicySpec::Kind::softmax ? "softmax" : "epsilon_greedy") << '\n'
     << "schedule = " << format_schedule(c.policy.schedule) << "\n\n";
  os << "[eval]\n"
     << "n_rollouts = " << c.eval.n_rollouts << '\n'
     << "horizon = " << (c.eval.horizon ? std::to_string(*c.eval.horizon) : std::string("auto")) << '\n'
     << "quantiles =";
  for (double q : c.eval.quantiles) os << ' ' << format_double(q);
  os << '\n';
}

/// Names of the bundled presets.
inline std::vector<std::string> preset_names() {
  std::vector<std::string> out;
  for (const char* table : {"table2a", "table2b"}) {
    out.push_back(std::string(table) + "-qlearning");
    out.push_back(std::string(table) + "-qhat");
    for (const char* model : {"gaussian", "laplace", "skewed"})
      for (const char* q : {"q01", "q03", "q05"}) out.push_back(std::string(table) + '-' + model + '-' + q);
  }
  out.push_back("fig3-qlearning");
  out.push_back("fig3-gaussian-q01");
  return out;
}

/// Cliff-walk configurations: table2a (gamma penalty) and table2b (Student-t penalty)
/// with epsilon-greedy exploration; fig3 (deterministic penalty) with a softmax ramp.
inline std::optional<ExperimentConfig> preset(const std::string& name) {
  const auto names = preset_names();
  if (std::find(names.begin(), names.end(), name) == names.end()) return std::nullopt;

  ExperimentConfig c;
  c.name = name;
  const std::int64_t T = 300000;
  c.total_steps = T;
  const bool fig3 = name.starts_with("fig3");
  if (name.starts_with("table2a")) c.mdp.cliff_reward = NegativeGamma(0.5, 20.0);
  else if (name.starts_with("table2b")) c.mdp.cliff_reward = ShiftedStudentT(1.2, 10.0, -10.0);
  else c.mdp.cliff_reward = Deterministic(-10.0);

  if (fig3) {
    c.agent.learning_rate = Schedule::constant(0.1);
    c.policy = PolicySpec::softmax(Schedule::linear(0.0, 2.0, T));
    c.n_trials = 10;
  } else {
    c.agent.learning_rate = Schedule::harmonic(30.0, 30.0, T);
    c.policy = PolicySpec::epsilon_greedy(Schedule::linear(1.0, 0.0, T));
  }

  const std::string rest = name.substr(name.find('-') + 1);
  if (rest == "qlearning") {
    c.agent.algorithm = Algorithm::watkins_q;
  } else if (rest == "qhat") {
    c.agent.algorithm = Algorithm::q_hat;
    c.agent.optimistic_init = c.mdp.goal_reward / (1.0 - c.mdp.discount);
  } else {
    c.agent.algorithm = Algorithm::qq_learning;
    const auto dash = rest.find('-');
    const std::string model = rest.substr(0, dash);
    c.agent.model = model == "gaussian"  ? ModelKind::gaussian
                    : model == "laplace" ? ModelKind::laplace
                                         : ModelKind::skewed_laplace;
    const std::string q = rest.substr(dash + 1);
    c.agent.q = q == "q01" ? 0.1 : q == "q03" ? 0.3 : 0.5;
  }
  return c;
}

/// A preset name or a path to an INI file.
inline ExperimentConfig load_config(const std::string& name_or_path) {
  if (auto p = preset(name_or_path)) return *p;
  std::ifstream in(name_or_path);
  if (!in) throw ConfigError("config: '" + name_or_path + "' is neither a preset nor a readable file");
  return parse_config(in);
}

}  // namespace retden
