#include <gtest/gtest.h>

#include <sstream>

#include "advreg/oracle.hpp"
#include "support.hpp"

using namespace advreg;
using advreg::testing::Rng;

namespace {

Graph complete(std::size_t n) {
  Graph g(n);
  for (std::size_t u = 0; u < n; ++u)
    for (std::size_t v = u + 1; v < n; ++v) g.add_edge(u, v);
  return g;
}

Graph path(std::size_t n) {
  Graph g(n);
  for (std::size_t v = 0; v + 1 < n; ++v) g.add_edge(v, v + 1);
  return g;
}

Graph random_graph(Rng& rng, std::size_t n, double p) {
  Graph g(n);
  for (std::size_t u = 0; u < n; ++u)
    for (std::size_t v = u + 1; v < n; ++v)
      if (rng.coin(p)) g.add_edge(u, v);
  return g;
}

std::size_t greedy_lower_bound(const Graph& g) {
  std::vector<std::size_t> chosen;
  for (std::size_t v = 0; v < g.n; ++v) {
    chosen.push_back(v);
    if (!g.independent(chosen)) chosen.pop_back();
  }
  return chosen.size();
}

}  // namespace

TEST(Mis, SmallGraphs) {
  EXPECT_TRUE(mis_bruteforce(complete(3), 1));
  EXPECT_FALSE(mis_bruteforce(complete(3), 2));
  EXPECT_TRUE(mis_bruteforce(Graph(4), 4));
  EXPECT_TRUE(mis_bruteforce(path(3), 2));
  EXPECT_FALSE(mis_bruteforce(path(3), 3));
  EXPECT_TRUE(mis_bruteforce(path(5), 3));
  EXPECT_FALSE(mis_bruteforce(path(5), 4));
}

TEST(Mis, GreedyIsAlwaysAchievable) {
  Rng rng(41);
  for (int trial = 0; trial < 40; ++trial) {
    const Graph g = random_graph(rng, 1 + rng.index(12), rng.uniform(0.1, 0.7));
    const std::size_t lb = greedy_lower_bound(g);
    for (std::size_t k = 0; k <= lb; ++k) EXPECT_TRUE(mis_bruteforce(g, k));
    // Downward closed in k.
    bool seen_false = false;
    for (std::size_t k = 0; k <= g.n + 1; ++k) {
      const bool ok = mis_bruteforce(g, k);
      if (seen_false) { EXPECT_FALSE(ok); }
      seen_false = seen_false || !ok;
    }
  }
}

TEST(Graph, RejectsBadEdges) {
  Graph g(3);
  EXPECT_THROW(g.add_edge(0, 3), ArgumentError);
  EXPECT_THROW(g.add_edge(1, 1), ArgumentError);
  g.add_edge(2, 0);
  EXPECT_TRUE(g.adjacent(0, 2));
  EXPECT_EQ(g.edges.size(), 1u);
}

TEST(EdgeList, Parses) {
  std::istringstream in("4 3\n0 1\n1 2\n2 3\n");
  const Graph g = read_edge_list(in);
  EXPECT_EQ(g.n, 4u);
  EXPECT_EQ(g.edges.size(), 3u);
  EXPECT_TRUE(g.adjacent(2, 3));

  std::istringstream truncated("3 2\n0 1\n");
  EXPECT_THROW(read_edge_list(truncated), ParseError);
  std::istringstream empty("");
  EXPECT_THROW(read_edge_list(empty), ParseError);
  std::istringstream loop("3 1\n1 1\n");
  EXPECT_THROW(read_edge_list(loop), ParseError);
}

TEST(Reduction, InstanceShape) {
  const ReductionInstance r = mis_reduce(path(4), 2);
  EXPECT_EQ(r.n_sensors, 5u);
  EXPECT_EQ(r.critical, 4u);
  EXPECT_EQ(r.budget, 3u);
  EXPECT_EQ(r.target_value, 3.0);
  for (double t : r.tau) EXPECT_EQ(t, 0.0);
  EXPECT_THROW(mis_reduce(path(4), 0), ArgumentError);
  EXPECT_THROW(mis_reduce(path(4), 5), ArgumentError);
}

TEST(Reduction, DetectorCountsIndependentSupport) {
  const ReductionInstance r = mis_reduce(path(3), 2);
  std::vector<double> reading{3.0, 0.0, 3.0, 3.0};
  for (SensorId s : {0u, 2u, 3u}) EXPECT_EQ(reduction_predict(r, reading, s), 3.0);
  EXPECT_EQ(reduction_predict(r, reading, 1), 0.0);
  reading[1] = 3.0;
  EXPECT_EQ(reduction_predict(r, reading, 0), 0.0);
}

TEST(Reduction, Examples) {
  EXPECT_FALSE(arp_decision_bruteforce(mis_reduce(complete(3), 2)));
  EXPECT_TRUE(arp_decision_bruteforce(mis_reduce(complete(3), 1)));
  EXPECT_TRUE(arp_decision_bruteforce(mis_reduce(Graph(3), 3)));
  EXPECT_TRUE(arp_decision_bruteforce(mis_reduce(path(3), 2)));
  EXPECT_FALSE(arp_decision_bruteforce(mis_reduce(path(3), 3)));
}

TEST(Reduction, EquivalentToIndependentSetExhaustively) {
  // Every graph on up to 5 vertices, every k.
  for (std::size_t n = 1; n <= 5; ++n) {
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t u = 0; u < n; ++u)
      for (std::size_t v = u + 1; v < n; ++v) pairs.emplace_back(u, v);
    for (std::uint32_t mask = 0; mask < (std::uint32_t{1} << pairs.size()); ++mask) {
      Graph g(n);
      for (std::size_t e = 0; e < pairs.size(); ++e)
        if ((mask >> e) & 1u) g.add_edge(pairs[e].first, pairs[e].second);
      for (std::size_t k = 1; k <= n; ++k)
        ASSERT_EQ(arp_decision_bruteforce(mis_reduce(g, k)), mis_bruteforce(g, k)) << "n=" << n << " mask=" << mask << " k=" << k;
    }
  }
}

TEST(Reduction, EquivalentOnRandomLargerGraphs) {
  Rng rng(43);
  for (int trial = 0; trial < 25; ++trial) {
    const Graph g = random_graph(rng, 6 + rng.index(4), rng.uniform(0.2, 0.6));
    const std::size_t k = 1 + rng.index(g.n);
    EXPECT_EQ(arp_decision_bruteforce(mis_reduce(g, k)), mis_bruteforce(g, k)) << "trial " << trial;
  }
}

TEST(AttackOracles, EnumerationRespectsBudgetZero) {
  Rng rng(44);
  const PredictorBank bank = advreg::testing::random_linear_bank(rng, 4, 4);
  AttackInstance inst = advreg::testing::random_instance(rng, 4, 0);
  const ThresholdConfig tau = advreg::testing::slack_thresholds(rng, bank, inst.y);
  const SensorId t = inst.critical.front();
  EXPECT_EQ(*oracle_attack_enumerate(bank, tau, inst, t), inst.y(static_cast<Eigen::Index>(t)));
}

TEST(AttackOracles, EnumerationReportsAlarmingCleanReading) {
  PredictorBank bank;
  LinearModel m;
  m.weights = Vector::Ones(1);
  m.bias = 0.0;
  bank.detectors.push_back({0, {1}, m});
  ThresholdConfig tau;
  tau.tau[0] = 0.1;
  AttackInstance inst;
  inst.y = Vector::Zero(2);
  inst.y(1) = 5.0;
  inst.critical = {0};
  inst.attackable = {1};
  inst.budget = 0;
  inst.box_lower = Vector::Constant(2, -10.0);
  inst.box_upper = Vector::Constant(2, 10.0);
  EXPECT_FALSE(oracle_attack_enumerate(bank, tau, inst, 0).has_value());
  inst.budget = 1;
  // Moving s2 back within 0.1 of s1 restores stealth; s1 itself is not attackable.
  EXPECT_NEAR(*oracle_attack_enumerate(bank, tau, inst, 0), 0.0, 1e-12);
}

TEST(AttackOracles, GridAgreesWithEnumerationOnLinearBanks) {
  Rng rng(45);
  for (int trial = 0; trial < 10; ++trial) {
    const PredictorBank bank = advreg::testing::random_linear_bank(rng, 2, 2);
    AttackInstance inst = advreg::testing::random_instance(rng, 2, 1 + rng.index(2), 1.0);
    inst.eta = Vector();
    inst.direction = Direction::Minimize;
    const ThresholdConfig tau = advreg::testing::slack_thresholds(rng, bank, inst.y);
    const SensorId t = inst.critical.front();
    const double exact = *oracle_attack_enumerate(bank, tau, inst, t);
    const double coarse = *oracle_attack_grid(bank, tau, inst, t, 0.05);
    const double fine = *oracle_attack_grid(bank, tau, inst, t, 0.01);
    EXPECT_LE(exact, fine + 1e-9);
    EXPECT_LE(exact, coarse + 1e-9);
    // Grid error is bounded by a few steps scaled by the detector slopes.
    EXPECT_LE(fine - exact, 0.2) << "trial " << trial;
  }
}
