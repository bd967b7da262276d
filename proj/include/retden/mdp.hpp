#pragma once

// Finite MDPs with stochastic rewards, plus the grid-world / cliff-walk builder.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <boost/math/distributions/gamma.hpp>
#include <boost/math/distributions/students_t.hpp>

namespace retden {

/// Reward that always takes the same value.
struct Deterministic {
  double value = 0.0;

  explicit Deterministic(double v = 0.0) : value(v) {
    if (!std::isfinite(v)) throw std::invalid_argument("Deterministic: value must be finite");
  }
};

/// Reward equal to minus a gamma(shape, scale) draw; mean is -shape*scale.
struct NegativeGamma {
  double shape;
  double scale;

  NegativeGamma(double k, double theta) : shape(k), scale(theta) {
    if (!(k > 0.0) || !(theta > 0.0) || !std::isfinite(k) || !std::isfinite(theta))
      throw std::invalid_argument("NegativeGamma: shape and scale must be positive");
  }
};

/// location + scale * T with T standard Student-t(dof). dof must exceed 1 so the mean exists.
struct ShiftedStudentT {
  double dof;
  double scale;
  double location;

  ShiftedStudentT(double nu, double s, double loc) : dof(nu), scale(s), location(loc) {
    if (!(nu > 1.0) || !(s > 0.0) || !std::isfinite(nu) || !std::isfinite(s) || !std::isfinite(loc))
      throw std::invalid_argument("ShiftedStudentT: need dof > 1, scale > 0");
  }
};

using RewardSpec = std::variant<Deterministic, NegativeGamma, ShiftedStudentT>;

inline double reward_mean(const RewardSpec& spec) {
  struct {
    double operator()(const Deterministic& d) const { return d.value; }
    double operator()(const NegativeGamma& g) const { return -g.shape * g.scale; }
    double operator()(const ShiftedStudentT& t) const { return t.location; }
  } visitor;
  return std::visit(visitor, spec);
}

/// Infinite for Student-t with dof <= 2.
inline double reward_variance(const RewardSpec& spec) {
  struct {
    double operator()(const Deterministic&) const { return 0.0; }
    double operator()(const NegativeGamma& g) const { return g.shape * g.scale * g.scale; }
    double operator()(const ShiftedStudentT& t) const {
      if (t.dof <= 2.0) return std::numeric_limits<double>::infinity();
      return t.scale * t.scale * t.dof / (t.dof - 2.0);
    }
  } visitor;
  return std::visit(visitor, spec);
}

inline bool is_deterministic(const RewardSpec& spec) {
  return std::holds_alternative<Deterministic>(spec);
}

template <class Rng>
double sample_reward(const RewardSpec& spec, Rng& rng) {
  struct Visitor {
    Rng& rng;
    double operator()(const Deterministic& d) const { return d.value; }
    double operator()(const NegativeGamma& g) const {
      std::gamma_distribution<double> dist(g.shape, g.scale);
      return -dist(rng);
    }
    double operator()(const ShiftedStudentT& t) const {
      std::student_t_distribution<double> dist(t.dof);
      return t.location + t.scale * dist(rng);
    }
  };
  return std::visit(Visitor{rng}, spec);
}

/// Quantile of the reward distribution; used to place reward quadrature nodes.
inline double reward_quantile(const RewardSpec& spec, double p) {
  struct {
    double p;
    double operator()(const Deterministic& d) const { return d.value; }
    double operator()(const NegativeGamma& g) const {
      boost::math::gamma_distribution<double> dist(g.shape, g.scale);
      return -boost::math::quantile(dist, 1.0 - p);
    }
    double operator()(const ShiftedStudentT& t) const {
      boost::math::students_t_distribution<double> dist(t.dof);
      return t.location + t.scale * boost::math::quantile(dist, p);
    }
  } visitor{p};
  return std::visit(visitor, spec);
}

/// Shortest text that reads back to the same double.
inline std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

/// Text form: "const V", "gamma SHAPE SCALE" (negated draw), "student_t DOF SCALE LOCATION".
inline std::string format_reward_spec(const RewardSpec& spec) {
  std::ostringstream os;
  struct {
    std::ostringstream& os;
    void operator()(const Deterministic& d) const { os << "const " << format_double(d.value); }
    void operator()(const NegativeGamma& g) const {
      os << "gamma " << format_double(g.shape) << ' ' << format_double(g.scale);
    }
    void operator()(const ShiftedStudentT& t) const {
      os << "student_t " << format_double(t.dof) << ' ' << format_double(t.scale) << ' ' << format_double(t.location);
    }
  } visitor{os};
  std::visit(visitor, spec);
  return os.str();
}

inline RewardSpec parse_reward_spec(const std::string& text) {
  std::istringstream is(text);
  std::string kind;
  is >> kind;
  std::vector<double> args;
  for (double v; is >> v;) args.push_back(v);
  if (!is.eof()) throw std::invalid_argument("reward spec: unparsable arguments in '" + text + "'");
  auto need = [&](std::size_t n) {
    if (args.size() != n)
      throw std::invalid_argument("reward spec '" + kind + "' expects " + std::to_string(n) +
                                  " numbers, got '" + text + "'");
  };
  if (kind == "const") {
    need(1);
    return Deterministic(args[0]);
  }
  if (kind == "gamma") {
    need(2);
    return NegativeGamma(args[0], args[1]);
  }
  if (kind == "student_t") {
    need(3);
    return ShiftedStudentT(args[0], args[1], args[2]);
  }
  throw std::invalid_argument("unknown reward spec kind '" + kind + "'");
}

/// One observed transition (s, a, r, s').
struct TransitionSample {
  std::size_t state = 0;
  std::size_t action = 0;
  double reward = 0.0;
  std::size_t next_state = 0;
};

/// Finite MDP with a dense transition tensor and a reward spec per (s, a, s').
/// Immutable after construction.
class TabularMdp {
 public:
  struct Outcome {
    std::size_t next_state;
    double probability;
  };

  TabularMdp(std::size_t n_states, std::size_t n_actions, std::vector<double> transition,
             std::vector<RewardSpec> rewards, double discount, std::size_t start_state,
             std::optional<std::size_t> goal_state = std::nullopt,
             std::vector<std::uint8_t> goal_arrivals = {})
      : n_states_(n_states),
        n_actions_(n_actions),
        transition_(std::move(transition)),
        rewards_(std::move(rewards)),
        discount_(discount),
        start_state_(start_state),
        goal_state_(goal_state),
        goal_arrivals_(std::move(goal_arrivals)) {
    if (n_states_ == 0 || n_actions_ == 0)
      throw std::invalid_argument("TabularMdp: need at least one state and one action");
    const std::size_t cube = n_states_ * n_actions_ * n_states_;
    if (transition_.size() != cube || rewards_.size() != cube)
      throw std::invalid_argument("TabularMdp: transition/reward tensors have the wrong size");
    if (!(discount_ >= 0.0 && discount_ < 1.0))
      throw std::invalid_argument("TabularMdp: discount must lie in [0, 1)");
    if (start_state_ >= n_states_) throw std::invalid_argument("TabularMdp: start state out of range");
    if (goal_state_ && *goal_state_ >= n_states_)
      throw std::invalid_argument("TabularMdp: goal state out of range");
    if (!goal_arrivals_.empty() && goal_arrivals_.size() != cube)
      throw std::invalid_argument("TabularMdp: goal arrival flags have the wrong size");

    outcome_offsets_.reserve(n_states_ * n_actions_ + 1);
    outcome_offsets_.push_back(0);
    for (std::size_t s = 0; s < n_states_; ++s) {
      for (std::size_t a = 0; a < n_actions_; ++a) {
        double total = 0.0;
        for (std::size_t s2 = 0; s2 < n_states_; ++s2) {
          const double p = transition_[index(s, a, s2)];
          if (!(p >= 0.0 && p <= 1.0))
            throw std::invalid_argument("TabularMdp: transition probability outside [0, 1] at (" +
                                        std::to_string(s) + ", " + std::to_string(a) + ", " +
                                        std::to_string(s2) + ")");
          total += p;
          if (p > 0.0) outcomes_.push_back({s2, p});
        }
        if (std::abs(total - 1.0) > 1e-12)
          throw std::invalid_argument("TabularMdp: transition row (" + std::to_string(s) + ", " +
                                      std::to_string(a) + ") sums to " + std::to_string(total));
        outcome_offsets_.push_back(outcomes_.size());
      }
    }
  }

  std::size_t n_states() const noexcept { return n_states_; }
  std::size_t n_actions() const noexcept { return n_actions_; }
  double discount() const noexcept { return discount_; }
  std::size_t start_state() const noexcept { return start_state_; }
  std::optional<std::size_t> goal_state() const noexcept { return goal_state_; }

  double transition(std::size_t s, std::size_t a, std::size_t s2) const {
    check(s, a);
    if (s2 >= n_states_) throw std::out_of_range("TabularMdp: successor out of range");
    return transition_[index(s, a, s2)];
  }

  const RewardSpec& reward(std::size_t s, std::size_t a, std::size_t s2) const {
    check(s, a);
    if (s2 >= n_states_) throw std::out_of_range("TabularMdp: successor out of range");
    return rewards_[index(s, a, s2)];
  }

  /// Successors with nonzero probability, in increasing state order.
  std::span<const Outcome> outcomes(std::size_t s, std::size_t a) const {
    check(s, a);
    const std::size_t row = s * n_actions_ + a;
    return std::span<const Outcome>(outcomes_.data() + outcome_offsets_[row],
                                    outcome_offsets_[row + 1] - outcome_offsets_[row]);
  }

  /// True when (s, a, s2) is a move into the goal that was rerouted to s2.
  bool arrives_at_goal(std::size_t s, std::size_t a, std::size_t s2) const {
    if (goal_arrivals_.empty()) return false;
    return goal_arrivals_[index(s, a, s2)] != 0;
  }

  const std::vector<RewardSpec>& reward_specs() const noexcept { return rewards_; }

 private:
  std::size_t index(std::size_t s, std::size_t a, std::size_t s2) const noexcept {
    return (s * n_actions_ + a) * n_states_ + s2;
  }
  void check(std::size_t s, std::size_t a) const {
    if (s >= n_states_ || a >= n_actions_)
      throw std::out_of_range("TabularMdp: state/action index out of range");
  }

  std::size_t n_states_;
  std::size_t n_actions_;
  std::vector<double> transition_;
  std::vector<RewardSpec> rewards_;
  double discount_;
  std::size_t start_state_;
  std::optional<std::size_t> goal_state_;
  std::vector<std::uint8_t> goal_arrivals_;
  std::vector<Outcome> outcomes_;
  std::vector<std::size_t> outcome_offsets_;
};

/// Samples s' from p_T(.|s,a), then r from the reward spec of (s, a, s').
template <class Rng>
TransitionSample step(const TabularMdp& mdp, std::size_t state, std::size_t action, Rng& rng) {
  const auto outcomes = mdp.outcomes(state, action);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double u = unif(rng);
  std::size_t next = outcomes.back().next_state;
  double acc = 0.0;
  for (const auto& o : outcomes) {
    acc += o.probability;
    if (u < acc) {
      next = o.next_state;
      break;
    }
  }
  return {state, action, sample_reward(mdp.reward(state, action, next), rng), next};
}

// ---------------------------------------------------------------------------
// Grid worlds

enum GridAction : std::size_t { north = 0, south = 1, east = 2, west = 3 };
inline constexpr std::size_t kGridActions = 4;

struct Cell {
  std::size_t row = 0;
  std::size_t col = 0;
  friend bool operator==(const Cell&, const Cell&) = default;
};

/// Layout of a slippery grid world with a cliff edge. States are numbered row-major,
/// row 0 at the top. Stepping off the grid from a cliff-edge cell is a fall: the agent
/// stays put and receives cliff_reward. Moving into the goal teleports to the start.
struct GridWorldSpec {
  std::size_t rows = 3;
  std::size_t cols = 6;
  Cell start{2, 0};
  Cell goal{2, 5};
  std::vector<Cell> cliff_edge{{2, 1}, {2, 2}, {2, 3}, {2, 4}};
  double slip_main = 0.7;
  double slip_other = 0.1;
  RewardSpec cliff_reward = Deterministic(-10.0);
  double goal_reward = 12.0;
  double discount = 0.95;

  std::size_t state_of(Cell c) const { return c.row * cols + c.col; }
  Cell cell_of(std::size_t s) const { return {s / cols, s % cols}; }
};

/// Cells from which a fall is possible; the "risky row" of the default cliff walk.
inline std::vector<std::size_t> cliff_adjacent_states(const GridWorldSpec& spec) {
  std::vector<std::size_t> out;
  for (const auto& c : spec.cliff_edge) out.push_back(spec.state_of(c));
  std::sort(out.begin(), out.end());
  return out;
}

inline TabularMdp build_grid_world(const GridWorldSpec& spec) {
  if (spec.rows == 0 || spec.cols == 0) throw std::invalid_argument("grid world: empty grid");
  const auto in_grid = [&](Cell c) { return c.row < spec.rows && c.col < spec.cols; };
  if (!in_grid(spec.start) || !in_grid(spec.goal))
    throw std::invalid_argument("grid world: start/goal outside the grid");
  if (spec.start == spec.goal) throw std::invalid_argument("grid world: start equals goal");
  for (const auto& c : spec.cliff_edge)
    if (!in_grid(c)) throw std::invalid_argument("grid world: cliff cell outside the grid");
  if (!(spec.slip_main >= 0.0 && spec.slip_main <= 1.0 && spec.slip_other >= 0.0 &&
        spec.slip_other <= 1.0))
    throw std::invalid_argument("grid world: slip probabilities must lie in [0, 1]");
  if (std::abs(spec.slip_main + 3.0 * spec.slip_other - 1.0) > 1e-12)
    throw std::invalid_argument("grid world: slip_main + 3*slip_other must equal 1");

  const std::size_t n = spec.rows * spec.cols;
  const std::size_t cube = n * kGridActions * n;
  std::vector<double> p(cube, 0.0);
  std::vector<RewardSpec> rewards(cube, Deterministic(0.0));
  std::vector<std::uint8_t> arrivals(cube, 0);
  std::vector<std::uint8_t> assigned(cube, 0);
  const std::size_t start = spec.state_of(spec.start);
  const std::size_t goal = spec.state_of(spec.goal);
  const auto is_cliff = [&](Cell c) {
    return std::find(spec.cliff_edge.begin(), spec.cliff_edge.end(), c) != spec.cliff_edge.end();
  };

  for (std::size_t s = 0; s < n; ++s) {
    const Cell here = spec.cell_of(s);
    for (std::size_t a = 0; a < kGridActions; ++a) {
      for (std::size_t dir = 0; dir < kGridActions; ++dir) {
        const double prob = dir == a ? spec.slip_main : spec.slip_other;
        if (prob == 0.0) continue;
        long r = static_cast<long>(here.row), c = static_cast<long>(here.col);
        switch (dir) {
          case north: --r; break;
          case south: ++r; break;
          case east: ++c; break;
          default: --c; break;
        }
        const bool off = r < 0 || c < 0 || r >= static_cast<long>(spec.rows) ||
                         c >= static_cast<long>(spec.cols);
        std::size_t next = s;
        RewardSpec reward = Deterministic(0.0);
        bool arrival = false;
        if (off) {
          if (is_cliff(here)) reward = spec.cliff_reward;
        } else {
          next = spec.state_of({static_cast<std::size_t>(r), static_cast<std::size_t>(c)});
          if (next == goal) {
            next = start;
            reward = Deterministic(spec.goal_reward);
            arrival = true;
          }
        }
        const std::size_t idx = (s * kGridActions + a) * n + next;
        if (assigned[idx] && (format_reward_spec(rewards[idx]) != format_reward_spec(reward) ||
                              arrivals[idx] != static_cast<std::uint8_t>(arrival)))
          throw std::invalid_argument("grid world: two moves reach the same successor with "
                                      "different rewards; layout is ambiguous");
        p[idx] += prob;
        rewards[idx] = reward;
        arrivals[idx] = arrival;
        assigned[idx] = 1;
      }
    }
  }
  return TabularMdp(n, kGridActions, std::move(p), std::move(rewards), spec.discount, start, goal,
                    std::move(arrivals));
}

/// The 6x3 cliff walk: start bottom-left, goal bottom-right, cliff under the cells between them.
inline TabularMdp build_cliff_walk(const RewardSpec& cliff_reward, double goal_reward = 12.0,
                                   double slip_main = 0.7, double slip_other = 0.1,
                                   double discount = 0.95) {
  GridWorldSpec spec;
  spec.cliff_reward = cliff_reward;
  spec.goal_reward = goal_reward;
  spec.slip_main = slip_main;
  spec.slip_other = slip_other;
  spec.discount = discount;
  return build_grid_world(spec);
}

// Plain-text environment description, one "key = value" per line:
//   rows, cols, start = "R C", goal = "R C", cliff = "R C; R C; ...",
//   slip_main, slip_other, cliff_reward = <reward spec>, goal_reward, discount

inline void write_grid_world(std::ostream& os, const GridWorldSpec& spec) {
  os << "rows = " << spec.rows << '\n'
     << "cols = " << spec.cols << '\n'
     << "start = " << spec.start.row << ' ' << spec.start.col << '\n'
     << "goal = " << spec.goal.row << ' ' << spec.goal.col << '\n'
     << "cliff = ";
  for (std::size_t i = 0; i < spec.cliff_edge.size(); ++i)
    os << (i ? "; " : "") << spec.cliff_edge[i].row << ' ' << spec.cliff_edge[i].col;
  os << '\n'
     << "slip_main = " << format_double(spec.slip_main) << '\n'
     << "slip_other = " << format_double(spec.slip_other) << '\n'
     << "cliff_reward = " << format_reward_spec(spec.cliff_reward) << '\n'
     << "goal_reward = " << format_double(spec.goal_reward) << '\n'
     << "discount = " << format_double(spec.discount) << '\n';
}

namespace detail {
inline std::string trim(std::string s) {
  const auto ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(ws) - b + 1);
}

inline Cell parse_cell(const std::string& text) {
  std::istringstream is(text);
  Cell c;
  if (!(is >> c.row >> c.col)) throw std::invalid_argument("bad cell '" + text + "'");
  std::string rest;
  if (is >> rest) throw std::invalid_argument("bad cell '" + text + "'");
  return c;
}

inline double parse_double(const std::string& key, const std::string& text) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    throw std::invalid_argument("'" + key + "': expected a number, got '" + text + "'");
  }
  if (used != text.size()) throw std::invalid_argument("'" + key + "': trailing characters in '" + text + "'");
  return v;
}
}  // namespace detail

/// Applies a single key/value pair; throws on unknown keys.
inline void set_grid_world_key(GridWorldSpec& spec, const std::string& key, const std::string& value) {
  using detail::parse_double;
  if (key == "rows") spec.rows = static_cast<std::size_t>(parse_double(key, value));
  else if (key == "cols") spec.cols = static_cast<std::size_t>(parse_double(key, value));
  else if (key == "start") spec.start = detail::parse_cell(value);
  else if (key == "goal") spec.goal = detail::parse_cell(value);
  else if (key == "cliff") {
    spec.cliff_edge.clear();
    std::istringstream is(value);
    for (std::string part; std::getline(is, part, ';');)
      if (!detail::trim(part).empty()) spec.cliff_edge.push_back(detail::parse_cell(part));
  } else if (key == "slip_main") spec.slip_main = parse_double(key, value);
  else if (key == "slip_other") spec.slip_other = parse_double(key, value);
  else if (key == "cliff_reward") spec.cliff_reward = parse_reward_spec(value);
  else if (key == "goal_reward") spec.goal_reward = parse_double(key, value);
  else if (key == "discount") spec.discount = parse_double(key, value);
  else throw std::invalid_argument("grid world: unknown key '" + key + "'");
}

inline GridWorldSpec read_grid_world(std::istream& is) {
  GridWorldSpec spec;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    line = detail::trim(line.substr(0, line.find('#')));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("grid world line " + std::to_string(lineno) + ": expected key = value");
    set_grid_world_key(spec, detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
  }
  build_grid_world(spec);  // validates
  return spec;
}

}  // namespace retden
