#include <gtest/gtest.h>

#include "advreg/attack.hpp"
#include "advreg/oracle.hpp"
#include "support.hpp"

using namespace advreg;
using advreg::testing::Rng;

namespace {

LinearModel line(std::vector<double> w, double b) {
  LinearModel m;
  m.weights = Eigen::Map<Vector>(w.data(), static_cast<Eigen::Index>(w.size()));
  m.bias = b;
  return m;
}

AttackInstance zero_instance(std::size_t d, std::size_t budget, double box = 10.0) {
  AttackInstance inst;
  inst.y = Vector::Zero(static_cast<Eigen::Index>(d));
  inst.critical = {0};
  for (SensorId s = 0; s < d; ++s) inst.attackable.push_back(s);
  inst.budget = budget;
  inst.box_lower = Vector::Constant(static_cast<Eigen::Index>(d), -box);
  inst.box_upper = Vector::Constant(static_cast<Eigen::Index>(d), box);
  return inst;
}

ThresholdConfig uniform_tau(const PredictorBank& bank, double value) {
  ThresholdConfig tau;
  for (const auto& d : bank.detectors) tau.tau[d.sensor] = value;
  return tau;
}

// s1 predicted by s2 (w = 1, b = 0).
PredictorBank follower_bank() {
  PredictorBank bank;
  bank.detectors.push_back({0, {1}, line({1.0}, 0.0)});
  return bank;
}

PredictorBank mutual_bank() {
  PredictorBank bank = follower_bank();
  bank.detectors.push_back({1, {0}, line({1.0}, 0.0)});
  return bank;
}

void expect_invariants(const PredictorBank& bank, const ThresholdConfig& tau, const AttackInstance& inst,
                       const AttackResult& r) {
  ASSERT_EQ(static_cast<std::size_t>(r.delta.size()), inst.width());
  ASSERT_EQ(r.alpha.size(), inst.width());
  std::size_t support = 0;
  for (SensorId s = 0; s < inst.width(); ++s) {
    const double d = r.delta(static_cast<Eigen::Index>(s));
    if (d != 0.0) {
      ++support;
      EXPECT_TRUE(r.alpha[s]);
      EXPECT_TRUE(inst.is_attackable(s));
    }
    EXPECT_LE(std::abs(d), inst.eta_at(s) + 1e-9);
    EXPECT_NEAR(r.y_tilde(static_cast<Eigen::Index>(s)), inst.y(static_cast<Eigen::Index>(s)) + d, 1e-12);
  }
  EXPECT_LE(support, inst.budget);
  EXPECT_LE(r.n_attacked(), inst.budget);
  EXPECT_EQ(r.objective, r.y_tilde(static_cast<Eigen::Index>(r.target)));
  if (r.feasible) { EXPECT_LE(stealth_margin(bank, tau, r.y_tilde), kStealthTolerance); }
}

double better(Direction dir, double a, double b) { return dir == Direction::Minimize ? std::min(a, b) : std::max(a, b); }

}  // namespace

TEST(BuildMilp, SingleStealthRowBinds) {
  const PredictorBank bank = follower_bank();
  const ThresholdConfig tau = uniform_tau(bank, 1.0);
  const AttackInstance inst = zero_instance(2, 1);
  const MILPSolution sol = solve_milp(build_attack_milp(bank, tau, inst, 0));
  ASSERT_TRUE(sol.optimal());
  EXPECT_NEAR(sol.objective, -1.0, 1e-9);

  const AttackResult r = attack_linear(bank, tau, inst);
  EXPECT_NEAR(r.objective, -1.0, 1e-9);
  EXPECT_NEAR(r.delta(1), 0.0, 0.0);
  EXPECT_EQ(r.n_attacked(), 1u);
  expect_invariants(bank, tau, inst, r);
}

TEST(BuildMilp, SecondSensorAtItsBoxExtendsTheAttack) {
  const PredictorBank bank = follower_bank();
  const ThresholdConfig tau = uniform_tau(bank, 1.0);
  AttackInstance inst = zero_instance(2, 2);
  // Uniform box: s1 itself stops at its own bound.
  EXPECT_NEAR(attack_linear(bank, tau, inst).objective, -10.0, 1e-9);
  // Wider box on s1: s2 pinned at -10, stealth allows one more unit.
  inst.box_lower(0) = -20.0;
  inst.box_upper(0) = 20.0;
  const AttackResult r = attack_linear(bank, tau, inst);
  EXPECT_NEAR(r.objective, -11.0, 1e-9);
  EXPECT_NEAR(r.y_tilde(1), -10.0, 1e-9);
  expect_invariants(bank, tau, inst, r);
}

TEST(BuildMilp, MutualDetectorsNeedTwoSensors) {
  const PredictorBank bank = mutual_bank();
  const ThresholdConfig tau = uniform_tau(bank, 1.0);
  EXPECT_NEAR(attack_linear(bank, tau, zero_instance(2, 1)).objective, -1.0, 1e-9);
  EXPECT_NEAR(attack_linear(bank, tau, zero_instance(2, 2)).objective, -10.0, 1e-9);
  EXPECT_NEAR(*oracle_attack_enumerate(bank, tau, zero_instance(2, 1), 0), -1.0, 1e-9);
  EXPECT_NEAR(*oracle_attack_enumerate(bank, tau, zero_instance(2, 2), 0), -10.0, 1e-9);
}

TEST(BuildMilp, Errors) {
  const PredictorBank bank = follower_bank();
  const ThresholdConfig tau = uniform_tau(bank, 1.0);
  EXPECT_THROW(build_attack_milp(bank, tau, zero_instance(2, 1), 1), ArgumentError);

  PredictorBank nn;
  Rng rng(1);
  nn.detectors.push_back({0, {1}, advreg::testing::random_network(rng, 1, {3})});
  EXPECT_THROW(build_attack_milp(nn, tau, zero_instance(2, 1), 0), TypeError);
  EXPECT_THROW(attack_linear(nn, tau, zero_instance(2, 1)), TypeError);

  AttackInstance over = zero_instance(2, 3);
  EXPECT_THROW(attack_linear(bank, tau, over), ArgumentError);
}

TEST(BuildMilp, TwoSidedActivationUnderMaximize) {
  const PredictorBank bank = follower_bank();
  const ThresholdConfig tau = uniform_tau(bank, 1.0);
  AttackInstance inst = zero_instance(3, 1);
  inst.direction = Direction::Maximize;
  const AttackResult r = attack_linear(bank, tau, inst);
  EXPECT_NEAR(r.objective, 1.0, 1e-9);
  inst.direction = Direction::Minimize;
  const AttackResult m = attack_linear(bank, tau, inst);
  // A negative perturbation still counts against the budget.
  EXPECT_EQ(m.n_attacked(), 1u);
  EXPECT_NEAR(m.objective, -1.0, 1e-9);
}

TEST(AttackLinear, DetectorFreeTargetLimitedByEta) {
  PredictorBank bank;
  bank.detectors.push_back({1, {2}, line({1.0}, 0.0)});
  ThresholdConfig tau = uniform_tau(bank, 0.5);
  AttackInstance inst = zero_instance(3, 1);
  inst.y(0) = 4.0;
  inst.eta = Vector::Constant(3, kInfinity);
  inst.eta(0) = 2.0;
  const AttackResult r = attack_linear(bank, tau, inst);
  EXPECT_NEAR(r.objective, 2.0, 1e-9);
  expect_invariants(bank, tau, inst, r);
}

TEST(AttackLinear, ZeroBudgetIsNoop) {
  const PredictorBank bank = mutual_bank();
  const ThresholdConfig tau = uniform_tau(bank, 1.0);
  AttackInstance inst = zero_instance(2, 0);
  inst.y << 3.0, 3.5;
  inst.critical = {0, 1};
  const AttackResult r = attack_linear(bank, tau, inst);
  EXPECT_EQ(r.delta.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(r.objective, 3.0);
  EXPECT_TRUE(r.feasible);
  EXPECT_EQ(*oracle_attack_enumerate(bank, tau, inst, 0), 3.0);
}

TEST(AttackLinear, EarlierTargetWinsTies) {
  const PredictorBank bank = mutual_bank();
  const ThresholdConfig tau = uniform_tau(bank, 1.0);
  AttackInstance inst = zero_instance(2, 1);
  inst.critical = {1, 0};
  const AttackResult r = attack_linear(bank, tau, inst);
  EXPECT_EQ(r.target, 1u);
  ASSERT_EQ(r.per_target.size(), 2u);
  EXPECT_NEAR(r.per_target[0].objective, r.per_target[1].objective, 1e-9);
}

TEST(AttackLinear, AlarmingCleanReadingReportsInfeasible) {
  const PredictorBank bank = follower_bank();
  const ThresholdConfig tau = uniform_tau(bank, 0.5);
  AttackInstance inst = zero_instance(2, 0);
  inst.y << 0.0, 3.0;
  const AttackResult r = attack_linear(bank, tau, inst);
  EXPECT_FALSE(r.feasible);
  EXPECT_EQ(r.delta.cwiseAbs().maxCoeff(), 0.0);
}

TEST(AttackLinear, MatchesSubsetEnumeration) {
  Rng rng(101);
  for (int trial = 0; trial < 80; ++trial) {
    const std::size_t d = 2 + rng.index(6);
    const PredictorBank bank = advreg::testing::random_linear_bank(rng, d, 1 + rng.index(d));
    AttackInstance inst = advreg::testing::random_instance(rng, d, rng.index(4));
    const ThresholdConfig tau = advreg::testing::slack_thresholds(rng, bank, inst.y);
    const AttackResult r = attack_linear(bank, tau, inst);
    ASSERT_TRUE(r.feasible);
    ASSERT_TRUE(r.optimal);
    std::optional<double> best;
    for (SensorId target : inst.critical) {
      const auto v = oracle_attack_enumerate(bank, tau, inst, target);
      ASSERT_TRUE(v.has_value());
      best = best ? better(inst.direction, *best, *v) : *v;
    }
    // Targets compete by deviation; compare deviations.
    double best_gain = -kInfinity;
    for (SensorId target : inst.critical) {
      const double dev = *oracle_attack_enumerate(bank, tau, inst, target) - inst.y(static_cast<Eigen::Index>(target));
      best_gain = std::max(best_gain, inst.direction == Direction::Minimize ? -dev : dev);
    }
    const double got = inst.direction == Direction::Minimize ? -r.deviation() : r.deviation();
    EXPECT_NEAR(got, best_gain, 1e-6) << "trial " << trial;
    for (const auto& t : r.per_target)
      EXPECT_NEAR(t.objective, *oracle_attack_enumerate(bank, tau, inst, t.target), 1e-6) << "trial " << trial;
    expect_invariants(bank, tau, inst, r);
  }
}

TEST(AttackLinear, MonotoneInBudgetAndThresholds) {
  Rng rng(102);
  for (int trial = 0; trial < 15; ++trial) {
    const std::size_t d = 3 + rng.index(4);
    const PredictorBank bank = advreg::testing::random_linear_bank(rng, d, d);
    AttackInstance inst = advreg::testing::random_instance(rng, d, 0);
    inst.critical = {inst.critical.front()};
    inst.direction = Direction::Minimize;
    const ThresholdConfig tau = advreg::testing::slack_thresholds(rng, bank, inst.y);
    double previous = kInfinity;
    for (std::size_t b = 0; b <= std::min<std::size_t>(5, d); ++b) {
      inst.budget = b;
      const double value = attack_linear(bank, tau, inst).objective;
      EXPECT_LE(value, previous + 1e-9);
      previous = value;
    }
    ThresholdConfig wider = tau;
    for (auto& [s, v] : wider.tau) v *= 1.5;
    EXPECT_LE(attack_linear(bank, wider, inst).objective, attack_linear(bank, tau, inst).objective + 1e-9);
  }
}

TEST(AttackLinear, UnconstrainedAttackerReachesBox) {
  Rng rng(103);
  const std::size_t d = 5;
  const PredictorBank bank = advreg::testing::random_linear_bank(rng, d, d);
  AttackInstance inst = advreg::testing::random_instance(rng, d, d);
  inst.eta = Vector();
  inst.critical = {2};
  inst.direction = Direction::Minimize;
  const ThresholdConfig tau = uniform_tau(bank, 1e6);
  const AttackResult r = attack_linear(bank, tau, inst);
  EXPECT_NEAR(r.objective, inst.box_lower(2), 1e-6);
}

TEST(AttackNN, ConstantPredictorsReachBound) {
  Rng rng(104);
  PredictorBank bank;
  for (SensorId s = 0; s < 3; ++s) {
    NeuralModel nn = advreg::testing::random_network(rng, 2, {4});
    nn.layers[0].weights.setZero();
    std::vector<SensorId> features;
    for (SensorId j = 0; j < 3; ++j)
      if (j != s) features.push_back(j);
    bank.detectors.push_back({s, features, nn});
  }
  AttackInstance inst = zero_instance(3, 1);
  inst.critical = {0, 1};
  inst.eta = Vector::Constant(3, 2.0);
  const ThresholdConfig tau = uniform_tau(bank, 1e3);
  Alg1Config cfg;
  const AttackResult r = attack_nn(bank, tau, inst, cfg);
  EXPECT_NEAR(r.objective, -2.0, 1e-9);
  EXPECT_TRUE(r.feasible);
  // One accepted step, then the radius shrinks from epsilon0 to epsilon_min.
  for (const auto& t : r.per_target) EXPECT_LE(t.iterations, 12u);
  expect_invariants(bank, tau, inst, r);
}

TEST(AttackNN, WrappedLinearModelsMatchExactAttack) {
  Rng rng(105);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t d = 2 + rng.index(5);
    const PredictorBank bank = advreg::testing::random_linear_bank(rng, d, 1 + rng.index(d));
    PredictorBank wrapped = bank;
    for (auto& det : wrapped.detectors) det.model = as_neural(std::get<LinearModel>(det.model));
    AttackInstance inst = advreg::testing::random_instance(rng, d, rng.index(4));
    const ThresholdConfig tau = advreg::testing::slack_thresholds(rng, bank, inst.y);
    const AttackResult exact = attack_linear(bank, tau, inst);
    const AttackResult iterative = attack_nn(wrapped, tau, inst, Alg1Config{});
    EXPECT_NEAR(iterative.objective, exact.objective, 1e-6) << "trial " << trial;
    expect_invariants(wrapped, tau, inst, iterative);
  }
}

TEST(AttackNN, TanhBankCloseToGridOracle) {
  Rng rng(106);
  int compared = 0;
  for (int trial = 0; trial < 6; ++trial) {
    PredictorBank bank;
    bank.detectors.push_back({0, {1}, advreg::testing::random_network(rng, 1, {4})});
    bank.detectors.push_back({1, {0}, advreg::testing::random_network(rng, 1, {4})});
    AttackInstance inst = zero_instance(2, 2, 2.0);
    inst.y = rng.normal_vector(2, 0.5);
    inst.box_lower = inst.y.array() - 2.0;
    inst.box_upper = inst.y.array() + 2.0;
    ThresholdConfig tau;
    for (const auto& det : bank.detectors) tau.tau[det.sensor] = det.residual(inst.y) + rng.uniform(0.2, 1.0);
    Alg1Config cfg;
    cfg.epsilon0 = 0.4;
    cfg.epsilon_min = cfg.epsilon0 / 1024.0;
    const AttackResult r = attack_nn(bank, tau, inst, cfg);
    ASSERT_TRUE(r.feasible);
    expect_invariants(bank, tau, inst, r);
    const auto grid = oracle_attack_grid(bank, tau, inst, 0, 0.02);
    ASSERT_TRUE(grid.has_value());
    EXPECT_LE(r.objective, *grid + 0.02) << "trial " << trial;
    ++compared;
  }
  EXPECT_EQ(compared, 6);
}

TEST(AttackNN, EnsembleBankStaysStealthy) {
  Rng rng(107);
  for (int trial = 0; trial < 8; ++trial) {
    const std::size_t d = 3 + rng.index(2);
    PredictorBank bank;
    for (SensorId s = 0; s < d; ++s) {
      std::vector<SensorId> features;
      for (SensorId j = 0; j < d; ++j)
        if (j != s) features.push_back(j);
      LinearModel lr;
      lr.weights = rng.normal_vector(static_cast<Eigen::Index>(d - 1), 0.5);
      lr.bias = rng.normal();
      bank.detectors.push_back({s, features, EnsembleModel{advreg::testing::random_network(rng, d - 1, {5}), lr}});
    }
    AttackInstance inst = advreg::testing::random_instance(rng, d, 2);
    const ThresholdConfig tau = advreg::testing::slack_thresholds(rng, bank, inst.y);
    const AttackResult r = attack(bank, tau, inst, Alg1Config{});
    EXPECT_TRUE(r.feasible);
    expect_invariants(bank, tau, inst, r);
  }
}

TEST(AttackNN, ObjectiveNeverWorseThanClean) {
  Rng rng(108);
  for (int trial = 0; trial < 8; ++trial) {
    PredictorBank bank;
    bank.detectors.push_back({0, {1, 2}, advreg::testing::random_network(rng, 2, {3})});
    bank.detectors.push_back({1, {0, 2}, advreg::testing::random_network(rng, 2, {3})});
    AttackInstance inst = advreg::testing::random_instance(rng, 3, 1 + rng.index(3));
    const ThresholdConfig tau = advreg::testing::slack_thresholds(rng, bank, inst.y);
    const AttackResult r = attack_nn(bank, tau, inst, Alg1Config{});
    ASSERT_TRUE(r.feasible);
    const double gain = inst.direction == Direction::Minimize ? -r.deviation() : r.deviation();
    EXPECT_GE(gain, 0.0);
    expect_invariants(bank, tau, inst, r);
  }
}

TEST(AttackJson, CarriesInstanceAndCertificate) {
  const PredictorBank bank = follower_bank();
  const ThresholdConfig tau = uniform_tau(bank, 1.0);
  const AttackInstance inst = zero_instance(2, 1);
  const AttackResult r = attack_linear(bank, tau, inst);
  const nlohmann::json j = to_json(r, inst, {"s1", "s2"});
  EXPECT_EQ(j.at("target"), "s1");
  EXPECT_EQ(j.at("feasible"), true);
  EXPECT_EQ(j.at("instance").at("budget"), 1);
  EXPECT_TRUE(j.at("instance").at("eta")[0].is_null());
  EXPECT_EQ(j.at("per_target").size(), 1u);
}
