#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <istream>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "advreg/attack.hpp"
#include "advreg/core.hpp"
#include "advreg/detector.hpp"
#include "advreg/lp.hpp"

namespace advreg {

// --- exact and grid oracles for the attack problem -------------------------------

/// Exact optimum of the linear-detector attack for one target by enumerating
/// every attacked subset of size <= budget and solving the resulting LP over
/// the perturbations alone. Returns the best attacked reading of `target`, or
/// nothing when no subset admits a stealthy reading.
inline std::optional<double> oracle_attack_enumerate(const PredictorBank& bank, const ThresholdConfig& tau,
                                                     const AttackInstance& inst, SensorId target) {
  inst.validate();
  detail::require(inst.attackable.size() <= 20, "enumeration oracle supports at most 20 attackable sensors");
  const auto detectors = affine_detectors(bank);
  const auto& cand = inst.attackable;
  const std::size_t na = cand.size();
  const auto t = static_cast<Eigen::Index>(target);

  std::optional<double> best;
  for (std::uint32_t mask = 0; mask < (std::uint32_t{1} << na); ++mask) {
    if (static_cast<std::size_t>(std::popcount(mask)) > inst.budget) continue;
    std::vector<SensorId> subset;
    for (std::size_t i = 0; i < na; ++i)
      if (mask & (std::uint32_t{1} << i)) subset.push_back(cand[i]);
    const std::size_t nv = subset.size();

    LinearProgram lp(std::max<std::size_t>(nv, 1));
    std::vector<int> slot(inst.width(), -1);
    for (std::size_t v = 0; v < nv; ++v) {
      slot[subset[v]] = static_cast<int>(v);
      const auto [lo, hi] = inst.delta_range(subset[v]);
      lp.lower(static_cast<Eigen::Index>(v)) = lo;
      lp.upper(static_cast<Eigen::Index>(v)) = hi;
    }
    // Residual of detector s at y + delta: c0 + a.delta.
    for (const auto& det : detectors) {
      double c0 = inst.y(static_cast<Eigen::Index>(det.sensor)) - det.map.bias;
      std::vector<std::pair<std::size_t, double>> terms;
      if (slot[det.sensor] >= 0) terms.emplace_back(static_cast<std::size_t>(slot[det.sensor]), 1.0);
      for (std::size_t f = 0; f < det.features.size(); ++f) {
        const double w = det.map.weights(static_cast<Eigen::Index>(f));
        c0 -= w * inst.y(static_cast<Eigen::Index>(det.features[f]));
        if (slot[det.features[f]] >= 0) terms.emplace_back(static_cast<std::size_t>(slot[det.features[f]]), -w);
      }
      const double threshold = tau.at(det.sensor);
      lp.add_row(terms, Sense::LessEqual, threshold - c0);
      for (auto& [i, c] : terms) c = -c;
      lp.add_row(terms, Sense::LessEqual, threshold + c0);
    }
    const bool moves_target = slot[target] >= 0;
    if (moves_target)
      lp.objective(slot[target]) = inst.direction == Direction::Minimize ? 1.0 : -1.0;

    const MILPSolution sol = solve_lp(lp);
    if (!sol.optimal()) continue;
    const double value = inst.y(t) + (moves_target ? sol.x(slot[target]) : 0.0);
    if (!best || (inst.direction == Direction::Minimize ? value < *best : value > *best)) best = value;
  }
  return best;
}

/// Exhaustive grid over the perturbations of at most 3 attackable sensors,
/// checked by exact forward propagation. Grid points are integer multiples of
/// `step` inside each sensor's admissible interval. Returns the best attacked
/// reading of `target` on the grid, or nothing if no grid point is stealthy.
inline std::optional<double> oracle_attack_grid(const PredictorBank& bank, const ThresholdConfig& tau,
                                                const AttackInstance& inst, SensorId target, double step) {
  inst.validate();
  detail::require(step > 0, "grid step must be positive");
  detail::require(inst.attackable.size() <= 3, "grid oracle supports at most 3 attackable sensors");

  std::vector<std::vector<double>> axes;
  for (SensorId s : inst.attackable) {
    const auto [lo, hi] = inst.delta_range(s);
    std::vector<double> axis;
    const auto first = static_cast<long long>(std::ceil(lo / step - 1e-9));
    const auto last = static_cast<long long>(std::floor(hi / step + 1e-9));
    for (long long k = first; k <= last; ++k) axis.push_back(std::clamp(static_cast<double>(k) * step, lo, hi));
    axes.push_back(std::move(axis));
  }

  std::optional<double> best;
  std::vector<std::size_t> index(axes.size(), 0);
  Vector point = inst.y;
  const auto t = static_cast<Eigen::Index>(target);
  for (;;) {
    std::size_t support = 0;
    for (std::size_t i = 0; i < axes.size(); ++i) {
      const double delta = axes[i][index[i]];
      point(static_cast<Eigen::Index>(inst.attackable[i])) = inst.y(static_cast<Eigen::Index>(inst.attackable[i])) + delta;
      if (delta != 0.0) ++support;
    }
    if (support <= inst.budget) {
      bool quiet = true;
      for (const auto& d : bank.detectors) {
        if (d.residual(point) > tau.at(d.sensor)) {
          quiet = false;
          break;
        }
      }
      if (quiet) {
        const double value = point(t);
        if (!best || (inst.direction == Direction::Minimize ? value < *best : value > *best)) best = value;
      }
    }
    std::size_t i = 0;
    for (; i < axes.size(); ++i) {
      if (++index[i] < axes[i].size()) break;
      index[i] = 0;
    }
    if (i == axes.size()) break;
  }
  return best;
}

// --- hardness reduction ------------------------------------------------------------

struct Graph {
  std::size_t n = 0;
  std::set<std::pair<std::size_t, std::size_t>> edges;  // stored with first < second

  Graph() = default;
  explicit Graph(std::size_t vertices) : n(vertices) {}

  void add_edge(std::size_t u, std::size_t v) {
    detail::require(u < n && v < n, "edge endpoint out of range");
    detail::require(u != v, "self-loops are not allowed");
    edges.insert(std::minmax(u, v));
  }

  bool adjacent(std::size_t u, std::size_t v) const { return edges.count(std::minmax(u, v)) > 0; }

  bool independent(const std::vector<std::size_t>& vertices) const {
    for (std::size_t i = 0; i < vertices.size(); ++i)
      for (std::size_t j = i + 1; j < vertices.size(); ++j)
        if (adjacent(vertices[i], vertices[j])) return false;
    return true;
  }
};

/// Edge-list text: first line "n m", then m lines "u v".
inline Graph read_edge_list(std::istream& in) {
  std::size_t n = 0;
  std::size_t m = 0;
  if (!(in >> n >> m)) throw ParseError("edge list needs a header line 'n m'");
  Graph g(n);
  for (std::size_t i = 0; i < m; ++i) {
    std::size_t u = 0;
    std::size_t v = 0;
    if (!(in >> u >> v)) throw ParseError("edge list ended after " + std::to_string(i) + " edges");
    try {
      g.add_edge(u, v);
    } catch (const ArgumentError& e) {
      throw ParseError(std::string("bad edge: ") + e.what(), i + 2, 1);
    }
  }
  return g;
}

/// Attack instance built from a graph and a target independent-set size k:
/// sensors V + {c} (c = index n, the only critical sensor), a detector on
/// every sensor with threshold 0, clean readings 0, budget k + 1 and target
/// value k + 1.
struct ReductionInstance {
  Graph graph;
  std::size_t k = 0;
  std::size_t n_sensors = 0;
  SensorId critical = 0;
  std::vector<double> tau;
  std::vector<double> y;
  std::size_t budget = 0;
  double target_value = 0.0;
};

inline ReductionInstance mis_reduce(const Graph& g, std::size_t k) {
  detail::require(k >= 1 && k <= g.n, "mis_reduce needs 1 <= k <= n");
  ReductionInstance r;
  r.graph = g;
  r.k = k;
  r.n_sensors = g.n + 1;
  r.critical = g.n;
  r.tau.assign(r.n_sensors, 0.0);
  r.y.assign(r.n_sensors, 0.0);
  r.budget = k + 1;
  r.target_value = static_cast<double>(k + 1);
  return r;
}

/// Detector of the reduction: when sensor s reads nonzero and the nonzero
/// sensors form an independent set (c is adjacent to nothing), predicts the
/// size of that set, s included; otherwise predicts 0.
inline double reduction_predict(const ReductionInstance& inst, const std::vector<double>& reading, SensorId s) {
  if (reading[s] == 0.0) return 0.0;
  std::vector<std::size_t> nonzero_vertices;
  std::size_t count = 0;
  for (SensorId j = 0; j < inst.n_sensors; ++j) {
    if (reading[j] == 0.0) continue;
    ++count;
    if (j != inst.critical) nonzero_vertices.push_back(j);
  }
  return inst.graph.independent(nonzero_vertices) ? static_cast<double>(count) : 0.0;
}

/// Decides whether a stealthy attack within budget reaches the target value
/// on c. Attacked readings are restricted to {0, k + 1}.
inline bool arp_decision_bruteforce(const ReductionInstance& inst) {
  detail::require(inst.graph.n <= 10, "brute-force decision supports at most 10 vertices");
  const double high = static_cast<double>(inst.k + 1);
  std::vector<double> reading(inst.n_sensors);
  for (std::uint32_t mask = 0; mask < (std::uint32_t{1} << inst.n_sensors); ++mask) {
    if (static_cast<std::size_t>(std::popcount(mask)) > inst.budget) continue;
    for (SensorId s = 0; s < inst.n_sensors; ++s) reading[s] = (mask >> s) & 1u ? high : inst.y[s];
    if (reading[inst.critical] < inst.target_value) continue;
    bool stealthy = true;
    for (SensorId s = 0; s < inst.n_sensors && stealthy; ++s)
      stealthy = std::abs(reading[s] - reduction_predict(inst, reading, s)) <= inst.tau[s];
    if (stealthy) return true;
  }
  return false;
}

/// True iff some k-vertex subset has no internal edge.
inline bool mis_bruteforce(const Graph& g, std::size_t k) {
  detail::require(g.n <= 20, "brute-force independent set supports at most 20 vertices");
  if (k > g.n) return false;
  std::vector<std::uint32_t> adjacency(g.n, 0);
  for (const auto& [u, v] : g.edges) {
    adjacency[u] |= std::uint32_t{1} << v;
    adjacency[v] |= std::uint32_t{1} << u;
  }
  for (std::uint32_t mask = 0; mask < (std::uint32_t{1} << g.n); ++mask) {
    if (static_cast<std::size_t>(std::popcount(mask)) != k) continue;
    bool ok = true;
    for (std::size_t v = 0; v < g.n && ok; ++v)
      if ((mask >> v) & 1u) ok = (adjacency[v] & mask) == 0;
    if (ok) return true;
  }
  return false;
}

}  // namespace advreg
