#include <cmath>
#include <random>
#include <sstream>
#include <vector>

#include <gtest/gtest.h>

#include "retden/bellman.hpp"
#include "retden/experiment.hpp"
#include "retden/oracle_check.hpp"

using namespace retden;

namespace {

TabularMdp single_state(double reward, double gamma) {
  return TabularMdp(1, 1, {1.0}, {Deterministic(reward)}, gamma, 0);
}

double total_mass(const ConditionalGridTable& t) {
  double worst = 0.0;
  for (const auto& e : t.entries) worst = std::max(worst, std::abs(e.total() - 1.0));
  return worst;
}

}  // namespace

TEST(Bellman, PointMassAtFixedPointStays) {
  const GridSpec g{-0.05, 40.05, 401};  // centers 0, 0.1, ..., 40
  const auto mdp = single_state(1.0, 0.95);
  const ConditionalGridTable t(g, 1, 1, GridDensity::point_mass(g, 20.0));
  const auto out = apply_bellman_operator(t, mdp, StochasticPolicy::uniform(1, 1));
  EXPECT_GT(out.at(0, 0).mass[200], 1.0 - 1e-9);
}

TEST(Bellman, ConstantRewardChainConvergesToGeometricSum) {
  const GridSpec g{-0.05, 40.05, 401};
  const auto mdp = single_state(1.0, 0.95);
  const auto fp = iterate_to_fixed_point(mdp, StochasticPolicy::uniform(1, 1), zero_return_table(mdp, g), 1e-8);
  const auto st = grid_stats(fp.table.at(0, 0), std::vector<double>{0.1, 0.5, 0.9});
  EXPECT_NEAR(st.mean, 20.0, g.width());
  for (double q : st.quantiles) EXPECT_NEAR(q, 20.0, g.width());
}

TEST(Bellman, WidthContracts) {
  const GridSpec g{-10.0, 10.0, 4001};
  const double gamma = 0.8, w = 2.0;
  const auto mdp = single_state(0.5, gamma);
  const ConditionalGridTable t(g, 1, 1, GridDensity::discretize(g, GaussianParams(0.0, w)));
  const auto out = apply_bellman_operator(t, mdp, StochasticPolicy::uniform(1, 1));
  const auto st = grid_stats(out.at(0, 0));
  EXPECT_NEAR(std::sqrt(st.variance), gamma * w, g.width());
  EXPECT_NEAR(st.mean, 0.5, 1e-9);
}

TEST(Bellman, MeanPushforwardAndMassConservation) {
  std::mt19937_64 rng(41);
  const auto mdp = random_mdp(3, 2, 0.7, rng);
  const GridSpec g{-8.0, 8.0, 1601};
  ConditionalGridTable t(g, 3, 2, GridDensity(g));
  std::uniform_real_distribution<double> mu(-2.0, 2.0), sd(0.2, 1.0);
  for (auto& e : t.entries) e = GridDensity::discretize(g, GaussianParams(mu(rng), sd(rng)));
  const StochasticPolicy policy(3, 2, {0.2, 0.8, 0.5, 0.5, 1.0, 0.0});
  const auto out = apply_bellman_operator(t, mdp, policy);
  EXPECT_LT(total_mass(out), 1e-9);
  for (std::size_t s = 0; s < 3; ++s)
    for (std::size_t a = 0; a < 2; ++a) {
      double expected = 0.0;
      for (const auto& o : mdp.outcomes(s, a)) {
        expected += o.probability * reward_mean(mdp.reward(s, a, o.next_state));
        for (std::size_t b = 0; b < 2; ++b)
          expected += o.probability * 0.7 * policy(o.next_state, b) * grid_stats(t.at(o.next_state, b)).mean;
      }
      EXPECT_NEAR(grid_stats(out.at(s, a)).mean, expected, 1e-9);
    }
}

TEST(Bellman, StochasticRewardMeanPushforward) {
  const GridSpec g{-200.0, 50.0, 2501};
  const auto mdp = TabularMdp(1, 1, {1.0}, {NegativeGamma(0.5, 20.0)}, 0.5, 0);
  const ConditionalGridTable t(g, 1, 1, GridDensity::point_mass(g, 0.0));
  BellmanOptions opt;
  opt.overflow_tolerance = 1e-3;
  const auto out = apply_bellman_operator(t, mdp, StochasticPolicy::uniform(1, 1), opt);
  EXPECT_NEAR(grid_stats(out.at(0, 0)).mean, -10.0, 0.05);
}

TEST(Bellman, SupportOverflowReportsExtension) {
  const GridSpec g{-1.0, 1.0, 21};
  const auto mdp = single_state(5.0, 0.5);
  const ConditionalGridTable t(g, 1, 1, GridDensity::point_mass(g, 0.0));
  try {
    apply_bellman_operator(t, mdp, StochasticPolicy::uniform(1, 1));
    FAIL() << "expected SupportOverflow";
  } catch (const SupportOverflow& e) {
    EXPECT_NEAR(e.escaped_mass, 1.0, 1e-12);
    EXPECT_GE(e.required_hi, 5.0);
  }
}

TEST(Bellman, RejectsUndiscountedOrMismatchedInputs) {
  const GridSpec g{-1.0, 1.0, 21};
  const auto mdp = single_state(0.0, 0.0);
  const ConditionalGridTable t(g, 1, 1, GridDensity::point_mass(g, 0.0));
  EXPECT_THROW(apply_bellman_operator(t, mdp, StochasticPolicy::uniform(1, 1)), std::invalid_argument);
  const auto ok = single_state(0.0, 0.5);
  EXPECT_THROW(apply_bellman_operator(t, ok, StochasticPolicy::uniform(1, 2)), std::invalid_argument);
}

TEST(Bellman, NonConvergenceIsReported) {
  const GridSpec g{-0.05, 40.05, 401};
  const auto mdp = single_state(1.0, 0.95);
  EXPECT_THROW(iterate_to_fixed_point(mdp, StochasticPolicy::uniform(1, 1), zero_return_table(mdp, g), 1e-12, 0),
               std::runtime_error);
}

TEST(FixedPoint, MeansMatchLinearSystem) {
  std::mt19937_64 rng(42);
  for (int k = 0; k < 3; ++k) {
    const auto mdp = random_mdp(3, 2, 0.8, rng);
    const auto policy = StochasticPolicy::uniform(3, 2);
    const GridSpec g{-6.0, 6.0, 1201};
    const auto fp = iterate_to_fixed_point(mdp, policy, zero_return_table(mdp, g), 1e-7);
    const Eigen::VectorXd q = exact_q_values(mdp, policy);
    for (std::size_t s = 0; s < 3; ++s)
      for (std::size_t a = 0; a < 2; ++a)
        EXPECT_NEAR(grid_stats(fp.table.at(s, a)).mean, q[static_cast<Eigen::Index>(2 * s + a)], 2 * g.width());
    // one more sweep barely moves it
    EXPECT_LT(max_mass_change(fp.table, apply_bellman_operator(fp.table, mdp, policy)), 1e-7);
  }
}

TEST(FixedPoint, GaussianMomentMatchIsStationary) {
  std::mt19937_64 rng(43);
  const auto mdp = random_mdp(3, 2, 0.8, rng);
  const auto policy = StochasticPolicy::uniform(3, 2);
  const GridSpec g{-6.0, 6.0, 1201};
  const double tol = 1e-7;
  const auto fp = iterate_to_fixed_point(mdp, policy, zero_return_table(mdp, g), tol);
  const auto pushed = apply_bellman_operator(fp.table, mdp, policy);
  for (std::size_t s = 0; s < 3; ++s)
    for (std::size_t a = 0; a < 2; ++a) {
      const auto st = grid_stats(pushed.at(s, a));
      const GaussianParams matched(st.mean, std::sqrt(st.variance));
      EXPECT_LT(grid_natural_gradient(matched, pushed.at(s, a)).norm(), 10 * tol);
    }
}

TEST(FixedPoint, CliffWalkMedianMatchesMonteCarlo) {
  const auto mdp = build_cliff_walk(Deterministic(-10.0));
  std::vector<std::size_t> safe(18, static_cast<std::size_t>(GridAction::north));
  for (std::size_t c = 0; c < 5; ++c) safe[c] = static_cast<std::size_t>(GridAction::east);
  safe[5] = safe[11] = static_cast<std::size_t>(GridAction::south);
  const auto policy = StochasticPolicy::deterministic(4, safe);
  const double margin = 5.0;
  const GridSpec g{-10.0 / 0.05 - margin, 12.0 / 0.05 + margin, 4001};
  const auto fp = iterate_to_fixed_point(mdp, policy, zero_return_table(mdp, g), 1e-6);
  const auto start = mdp.start_state();
  const double grid_median = grid_stats(fp.table.at(start, safe[start]), std::vector<double>{0.5}).quantiles[0];

  std::mt19937_64 rng(44);
  const auto mc = monte_carlo_return_stats(mdp, policy, start, 100000, auto_horizon(0.95, 12.0),
                                           std::vector<double>{0.5}, rng);
  EXPECT_NEAR(grid_median, mc.quantile_values[0], 2 * g.width());
}

TEST(GridStats, PointMass) {
  const GridSpec g{0.0, 10.0, 10};
  const auto st = grid_stats(GridDensity::point_mass(g, 3.5), std::vector<double>{0.01, 0.5, 0.99});
  EXPECT_DOUBLE_EQ(st.mean, 3.5);
  for (double q : st.quantiles) EXPECT_NEAR(q, 3.5, 0.5 * g.width());
}

TEST(GridStats, StandardNormal) {
  const GridSpec g{-10.0, 10.0, 4001};
  const auto st = grid_stats(GridDensity::discretize(g, GaussianParams(0.0, 1.0)), std::vector<double>{0.975});
  EXPECT_NEAR(st.mean, 0.0, 1e-3);
  EXPECT_NEAR(st.quantiles[0], 1.959964, 2 * g.width());
}

TEST(GridStats, Uniform) {
  const GridSpec g{0.0, 1.0, 50};
  GridDensity d(g);
  for (auto& m : d.mass) m = 1.0 / 50.0;
  EXPECT_NEAR(grid_stats(d, std::vector<double>{0.25}).quantiles[0], 0.25, 0.5 * g.width());
  EXPECT_THROW(grid_stats(d, std::vector<double>{1.0}), std::domain_error);
}

TEST(Kl, SelfIsNearZero) {
  const GridSpec g{-60.0, 60.0, 24001};
  for (const DensityParams& p : {DensityParams(GaussianParams(0.5, 1.5)), DensityParams(LaplaceParams(-1.0, 0.8)),
                                 DensityParams(SkewedLaplaceParams(0.0, 1.0, 0.3))})
    EXPECT_LT(std::abs(kl_to_model(GridDensity::discretize(g, p), p)), 1e-5) << format_params(p);
}

TEST(Kl, ShiftedGaussianApproachesHalf) {
  double previous = 1.0;
  for (std::size_t n : {201u, 801u, 3201u}) {
    const GridSpec g{-12.0, 12.0, n};
    const double kl = kl_to_model(GridDensity::discretize(g, GaussianParams(1.0, 1.0)), GaussianParams(0.0, 1.0));
    EXPECT_LE(std::abs(kl - 0.5), previous);
    previous = std::abs(kl - 0.5);
  }
  EXPECT_LT(previous, 1e-4);
}

TEST(Kl, NonNegative) {
  std::mt19937_64 rng(45);
  const GridSpec g{-30.0, 30.0, 2001};
  for (int i = 0; i < 20; ++i) {
    const auto p = random_params(ModelKind::laplace, rng), q = random_params(ModelKind::gaussian, rng);
    EXPECT_GE(kl_to_model(GridDensity::discretize(g, p), q), -1e-9);
  }
}

TEST(RewardNodes, PreserveMean) {
  const auto nodes = reward_nodes(NegativeGamma(0.5, 20.0), RewardQuadrature{});
  double mean = 0.0, w = 0.0;
  for (const auto& [x, p] : nodes) {
    mean += x * p;
    w += p;
  }
  EXPECT_NEAR(w, 1.0, 1e-12);
  EXPECT_NEAR(mean, -10.0, 0.05);
}

TEST(GridExport, Rows) {
  const GridSpec g{0.0, 1.0, 2};
  const ConditionalGridTable t(g, 1, 2, GridDensity::point_mass(g, 0.1));
  std::ostringstream os;
  write_grid_table_csv(os, t);
  EXPECT_EQ(os.str(), "state,action,bin_center,mass\n0,0,0.25,1\n0,0,0.75,0\n0,1,0.25,1\n0,1,0.75,0\n");
}
