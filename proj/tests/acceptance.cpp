// Acceptance run: one PASS/FAIL line per criterion. Pass criterion numbers as
// arguments to run a subset; the exit status is nonzero if any selected one fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "retden/retden.hpp"

using namespace retden;

namespace {

struct Outcome {
  bool pass;
  std::string detail;
};

std::string fmt(double v, int prec = 4) {
  std::ostringstream os;
  os << std::setprecision(prec) << v;
  return os.str();
}

std::size_t workers() { return std::max(1u, std::thread::hardware_concurrency()); }

ExperimentResult run_preset(const std::string& name) {
  const auto cfg = *preset(name);
  return run_experiment(cfg, workers());
}

const StatSummary& stat(const ExperimentResult& r, const std::string& name) {
  for (const auto& s : r.summary)
    if (s.statistic == name) return s;
  throw std::runtime_error("missing statistic " + name);
}

std::vector<double> column(const ExperimentResult& r, const std::string& name) {
  const auto names = statistic_names(r.config.eval.quantiles);
  const auto k = static_cast<std::size_t>(std::find(names.begin(), names.end(), name) - names.begin());
  std::vector<double> out;
  for (const auto& t : r.trials) out.push_back(statistic_values(t.stats).at(k));
  return out;
}

std::string mean_std(const StatSummary& s) { return fmt(s.mean) + " +- " + fmt(s.std); }

// 1. closed-form updates vs quadrature of the expected score
Outcome criterion1() {
  const auto t0 = std::chrono::steady_clock::now();
  const UpdateRules rules;
  double worst = 0.0;
  std::size_t failures = 0;
  std::uint64_t seed = 101;
  for (ModelKind m : {ModelKind::gaussian, ModelKind::laplace, ModelKind::skewed_laplace}) {
    const auto check = check_update_rule(m, rules[m], 100, splitmix64(seed), 1e-5);
    worst = std::max(worst, check.worst);
    failures += check.failures.size();
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {failures == 0 && secs < 60.0,
          "300 contexts, worst relative difference " + fmt(worst) + ", " + fmt(secs, 3) + " s"};
}

// 2. Gaussian mu table vs plain Q-learning at rate alpha/gamma
Outcome criterion2() {
  const auto mdp = build_cliff_walk(NegativeGamma(0.5, 20.0));
  const double gamma = mdp.discount();
  AgentSpec spec;
  spec.model = ModelKind::gaussian;
  spec.q = 0.5;
  spec.learning_rate = Schedule::harmonic(30.0, 30.0, 10000);
  AgentState st = make_agent_state(spec, mdp.n_states(), mdp.n_actions());

  std::vector<double> q(mdp.n_states() * mdp.n_actions(), 0.0);
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<std::size_t> pick_a(0, mdp.n_actions() - 1);
  std::size_t s = mdp.start_state();
  for (std::int64_t t = 0; t < 10000; ++t) {
    const std::size_t a = pick_a(rng);
    const auto sample = step(mdp, s, a, rng);
    agent_step(spec, st, sample, gamma);

    const double alpha = 1.0 / (30.0 + 30.0 * static_cast<double>(t) / 10000.0);
    double best = q[sample.next_state * 4];
    for (std::size_t b = 1; b < 4; ++b) best = std::max(best, q[sample.next_state * 4 + b]);
    double& cell = q[sample.state * 4 + sample.action];
    cell = cell + (alpha / gamma) * (sample.reward + gamma * best - cell);
    s = sample.next_state;
  }
  double worst = 0.0;
  for (std::size_t k = 0; k < q.size(); ++k)
    worst = std::max(worst, std::abs(std::get<GaussianParams>(st.params->at(k / 4, k % 4)).mu - q[k]));
  return {worst <= 1e-12, "10000 steps, max |mu - Q| = " + fmt(worst)};
}

// 3. cdf(quantile(q)) == q
Outcome criterion3() {
  std::mt19937_64 rng(303);
  double worst = 0.0;
  for (ModelKind m : {ModelKind::gaussian, ModelKind::laplace, ModelKind::skewed_laplace})
    for (int k = 0; k < 50; ++k) {
      const DensityParams p = random_params(m, rng);
      for (int i = 1; i <= 99; ++i) {
        const double q = i / 100.0;
        worst = std::max(worst, std::abs(cdf(p, quantile(p, q)) - q));
      }
    }
  const double z = quantile(DensityParams(GaussianParams(0.0, 1.0)), 0.975);
  return {worst <= 1e-9 && std::abs(z - 1.959964) <= 1e-5,
          "worst |cdf(quantile(q)) - q| = " + fmt(worst) + ", N(0,1) 0.975-quantile = " + fmt(z, 8)};
}

// 4. analytic Fisher matrices vs quadrature of the score outer product
Outcome criterion4() {
  std::mt19937_64 rng(404);
  QuadratureOptions qo;
  qo.tolerance = 1e-12;
  double worst = 0.0;
  for (ModelKind m : {ModelKind::gaussian, ModelKind::laplace, ModelKind::skewed_laplace})
    for (int k = 0; k < 50; ++k) {
      const DensityParams p = random_params(m, rng);
      worst = std::max(worst, (fisher_information(p) - numeric_fisher_information(p, qo)).cwiseAbs().maxCoeff());
    }
  return {worst <= 1e-6, "150 parameter sets, worst entrywise difference " + fmt(worst)};
}

// 5. grid fixed point vs the Bellman linear system
Outcome criterion5() {
  std::mt19937_64 rng(505);
  const double gamma = 0.8, tol = 1e-6;
  const GridSpec grid{-6.0, 6.0, 1201};
  const TabularMdp mdp = random_mdp(3, 2, gamma, rng);
  const StochasticPolicy policy = StochasticPolicy::uniform(3, 2);
  const std::size_t bound = fixed_point_iteration_bound(gamma, tol, 5);
  FixedPointResult fp{ConditionalGridTable(grid, 3, 2, GridDensity::point_mass(grid, 0.0)), 0, 0.0};
  try {
    fp = iterate_to_fixed_point(mdp, policy, zero_return_table(mdp, grid), tol, 5);
  } catch (const std::exception& e) {
    return {false, e.what()};
  }

  // Q = R + gamma P_pi Q, assembled here from the transition tensor
  Eigen::MatrixXd m = Eigen::MatrixXd::Identity(6, 6);
  Eigen::VectorXd r = Eigen::VectorXd::Zero(6);
  for (std::size_t s = 0; s < 3; ++s)
    for (std::size_t a = 0; a < 2; ++a)
      for (std::size_t s2 = 0; s2 < 3; ++s2) {
        const double p = mdp.transition(s, a, s2);
        r[s * 2 + a] += p * std::get<Deterministic>(mdp.reward(s, a, s2)).value;
        for (std::size_t b = 0; b < 2; ++b) m(s * 2 + a, s2 * 2 + b) -= gamma * p * 0.5;
      }
  const Eigen::VectorXd q = m.fullPivLu().solve(r);
  double worst = 0.0;
  for (std::size_t k = 0; k < 6; ++k)
    worst = std::max(worst, std::abs(grid_stats(fp.table.at(k / 2, k % 2)).mean - q[k]) / grid.width());
  return {worst <= 2.0 && fp.iterations <= bound, "mean error " + fmt(worst) + " bins, " +
                                                      std::to_string(fp.iterations) + " iterations (bound " +
                                                      std::to_string(bound) + ")"};
}

// 6. Laplace location increment bounded by (alpha/gamma) b
Outcome criterion6() {
  std::mt19937_64 rng(606);
  std::uniform_real_distribution<double> unit(0.0, 1.0), center(-50.0, 50.0), scale(1e-3, 20.0), gamma(0.05, 0.999),
      rate(1e-4, 1.0);
  const RewardSpec heavy = ShiftedStudentT(1.2, 10.0, -10.0);
  const RewardSpec gam = NegativeGamma(0.5, 20.0);
  std::size_t violations = 0;
  double worst_ratio = 0.0;
  for (int i = 0; i < 1000000; ++i) {
    const double u = unit(rng);
    const double r = u < 0.4 ? sample_reward(heavy, rng) : u < 0.7 ? sample_reward(gam, rng) : center(rng);
    const double b = scale(rng);
    // current location at zero, so the new location is the increment itself
    TdContext ctx{r, gamma(rng), rate(rng), LaplaceParams(0.0, b), {{1.0, LaplaceParams(center(rng), scale(rng))}}};
    const double dm = std::get<LaplaceParams>(ng_update(ctx)).m;
    const double bound = (ctx.learning_rate / ctx.discount) * b;
    if (!(std::abs(dm) <= bound)) ++violations;
    worst_ratio = std::max(worst_ratio, std::abs(dm) / bound);
  }
  return {violations == 0,
          "1e6 contexts, " + std::to_string(violations) + " violations, max |dm| / bound = " + fmt(worst_ratio, 17)};
}

// 7. deterministic-penalty cliff walk: Gaussian q=0.1 avoids the cliff row, Watkins uses it
Outcome criterion7() {
  const auto gauss = run_preset("fig3-gaussian-q01");
  const auto watkins = run_preset("fig3-qlearning");
  const auto risky = cliff_adjacent_states(gauss.config.mdp);
  std::size_t both = 0, g_avoid = 0, w_use = 0;
  for (std::size_t i = 0; i < gauss.trials.size(); ++i) {
    const bool ga = path_avoids(gauss.trials[i].path, risky);
    const bool wu = !path_avoids(watkins.trials[i].path, risky);
    g_avoid += ga;
    w_use += wu;
    both += ga && wu;
  }
  return {both >= 8, std::to_string(both) + "/" + std::to_string(gauss.trials.size()) +
                         " trials satisfy both (Gaussian avoids in " + std::to_string(g_avoid) +
                         ", Watkins uses the cliff row in " + std::to_string(w_use) + ")"};
}

// 8. gamma penalty: 0.01-quantile ordering, signs and Welch test
Outcome criterion8() {
  const auto gauss = run_preset("table2a-gaussian-q01");
  const auto watkins = run_preset("table2a-qlearning");
  const auto& g = stat(gauss, "q0.01");
  const auto& w = stat(watkins, "q0.01");
  const auto welch = welch_t_test(column(gauss, "q0.01"), column(watkins, "q0.01"));
  const bool ordering = g.mean > w.mean;
  const bool signs = g.mean > 0.0 && w.mean < 0.0;
  return {ordering && signs && welch.significant,
          "q0.01 Gaussian " + mean_std(g) + " vs Watkins " + mean_std(w) + "; ordering " +
              (ordering ? "holds" : "fails") + ", signs " + (signs ? "hold" : "fail") + ", Welch t = " +
              fmt(welch.t) + " p = " + fmt(welch.p_value)};
}

// 9. Student-t penalty: Laplace q=0.1 learner has the best positive 0.1-quantile
Outcome criterion9() {
  const auto lap = run_preset("table2b-laplace-q01");
  const auto gauss = run_preset("table2b-gaussian-q01");
  const auto watkins = run_preset("table2b-qlearning");
  const auto& l = stat(lap, "q0.1");
  const auto& g = stat(gauss, "q0.1");
  const auto& w = stat(watkins, "q0.1");
  return {l.mean > 0.0 && l.mean > g.mean && l.mean > w.mean,
          "q0.1 Laplace " + mean_std(l) + ", Gaussian " + mean_std(g) + ", Watkins " + mean_std(w)};
}

// 10. Q-hat mean returns collapse into [-1, 1]
Outcome criterion10() {
  const auto a = run_preset("table2a-qhat");
  const auto b = run_preset("table2b-qhat");
  const auto& ma = stat(a, "mean");
  const auto& mb = stat(b, "mean");
  const auto inside = [](double x) { return x >= -1.0 && x <= 1.0; };
  return {inside(ma.mean) && inside(mb.mean), "mean return gamma penalty " + mean_std(ma) + ", Student-t penalty " +
                                                  mean_std(mb)};
}

// 11. iterated Gaussian updates against a fixed two-point mixture match its moments
Outcome criterion11() {
  const double gamma = 0.9, reward = 0.5, w = 0.3;
  const double a = -2.0, b = 3.0, width = 1e-3;
  const std::vector<TargetComponent> target{{w, GaussianParams(a, width)}, {1.0 - w, GaussianParams(b, width)}};
  // pushforward r + gamma * eta of each component
  const double xa = reward + gamma * a, xb = reward + gamma * b, spread = gamma * width;
  const double mean = w * xa + (1.0 - w) * xb;
  const double second = w * (xa * xa + spread * spread) + (1.0 - w) * (xb * xb + spread * spread);

  DensityParams cur = GaussianParams(0.0, 1.0);
  for (int i = 0; i < 20000; ++i) cur = ng_update(TdContext{reward, gamma, 0.01, cur, target});
  const auto p = std::get<GaussianParams>(cur);
  const double err_mean = std::abs(p.mu - mean);
  const double err_second = std::abs(p.mu * p.mu + p.sigma * p.sigma - second);
  return {err_mean <= 1e-3 && err_second <= 1e-3,
          "mean error " + fmt(err_mean) + ", second-moment error " + fmt(err_second)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::map<int, std::function<Outcome()>> criteria{
      {1, criterion1}, {2, criterion2}, {3, criterion3},   {4, criterion4},   {5, criterion5},  {6, criterion6},
      {7, criterion7}, {8, criterion8}, {9, criterion9}, {10, criterion10}, {11, criterion11}};
  std::vector<int> selected;
  for (int i = 1; i < argc; ++i) selected.push_back(std::atoi(argv[i]));
  if (selected.empty())
    for (const auto& [k, _] : criteria) selected.push_back(k);

  int failed = 0;
  for (int k : selected) {
    const auto it = criteria.find(k);
    if (it == criteria.end()) {
      std::cerr << "unknown criterion " << k << '\n';
      return 2;
    }
    Outcome o{false, ""};
    try {
      o = it->second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    std::cout << "criterion " << k << ": " << (o.pass ? "PASS" : "FAIL") << "  " << o.detail << std::endl;
    failed += !o.pass;
  }
  return failed == 0 ? 0 : 1;
}
