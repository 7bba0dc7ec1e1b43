#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <json.hpp>

#include "advreg/core.hpp"
#include "advreg/detector.hpp"
#include "advreg/milp.hpp"
#include "advreg/models.hpp"
#include "advreg/plant.hpp"

namespace advreg {

enum class Direction { Minimize, Maximize };

inline std::string to_string(Direction d) { return d == Direction::Minimize ? "minimize" : "maximize"; }

inline Direction direction_from_string(const std::string& s) {
  if (s == "minimize") return Direction::Minimize;
  if (s == "maximize") return Direction::Maximize;
  throw ArgumentError("unknown attack direction '" + s + "'");
}

/// One timestep's attack problem. All vectors are indexed by dataset column.
struct AttackInstance {
  Vector y;                          // true measurements
  std::vector<SensorId> critical;    // candidate targets
  std::size_t budget = 0;            // max number of modified sensors
  Vector eta;                        // per-column |delta| cap, +inf allowed; empty = all +inf
  std::vector<SensorId> attackable;  // columns the attacker may modify
  Vector box_lower;                  // finite range for the attacked readings
  Vector box_upper;
  Direction direction = Direction::Minimize;

  std::size_t width() const { return static_cast<std::size_t>(y.size()); }

  bool is_attackable(SensorId s) const {
    return std::find(attackable.begin(), attackable.end(), s) != attackable.end();
  }

  double eta_at(SensorId s) const { return eta.size() == 0 ? kInfinity : eta(static_cast<Eigen::Index>(s)); }

  /// Feasible interval for delta_s before any trust region; always contains 0.
  std::pair<double, double> delta_range(SensorId s) const {
    if (!is_attackable(s)) return {0.0, 0.0};
    const auto k = static_cast<Eigen::Index>(s);
    const double cap = eta_at(s);
    double lo = std::max(-cap, box_lower(k) - y(k));
    double hi = std::min(cap, box_upper(k) - y(k));
    return {std::min(lo, 0.0), std::max(hi, 0.0)};
  }

  void validate() const {
    const auto d = y.size();
    detail::require(d > 0 && y.allFinite(), "attack instance needs finite measurements");
    detail::require(box_lower.size() == d && box_upper.size() == d, "box must cover every column");
    detail::require(box_lower.allFinite() && box_upper.allFinite(), "box must be finite");
    detail::require((box_lower.array() <= box_upper.array()).all(), "box lower exceeds upper");
    detail::require(eta.size() == 0 || eta.size() == d, "eta must be empty or cover every column");
    if (eta.size()) detail::require((eta.array() >= 0).all(), "eta must be nonnegative");
    for (SensorId s : attackable) detail::require(s < width(), "attackable index out of range");
    for (SensorId s : critical) detail::require(s < width(), "critical index out of range");
    detail::require(budget <= attackable.size(), "budget exceeds the number of attackable sensors");
  }
};

/// Per-column box: clean range widened by 10x its span on each side.
inline std::pair<Vector, Vector> default_box(const Dataset& clean) {
  const Vector lo = clean.values.colwise().minCoeff().transpose();
  const Vector hi = clean.values.colwise().maxCoeff().transpose();
  Vector span = hi - lo;
  for (Eigen::Index j = 0; j < span.size(); ++j)
    if (!(span(j) > 0)) span(j) = 1.0;
  return {lo - 10.0 * span, hi + 10.0 * span};
}

/// Instance template for a dataset: critical targets, sensors attackable,
/// control inputs fixed, eta unbounded, box from the clean range.
inline AttackInstance make_instance(const Dataset& clean, std::size_t budget, Direction direction = Direction::Minimize) {
  AttackInstance inst;
  inst.y = clean.values.row(0).transpose();
  inst.critical = clean.critical();
  inst.attackable = clean.sensors();
  inst.budget = std::min(budget, inst.attackable.size());
  std::tie(inst.box_lower, inst.box_upper) = default_box(clean);
  inst.direction = direction;
  return inst;
}

struct TargetOutcome {
  SensorId target = 0;
  double objective = 0.0;  // attacked reading of the target
  SolveStatus status = SolveStatus::Infeasible;
  bool feasible = false;
  std::size_t iterations = 0;
};

struct AttackResult {
  Vector y_tilde;
  Vector delta;
  std::vector<bool> alpha;
  SensorId target = 0;
  double objective = 0.0;  // y_tilde[target]
  bool feasible = false;   // every detector residual at y_tilde within tau + 1e-6
  bool optimal = true;     // false when a solver limit was hit
  std::size_t iterations = 0;
  std::size_t nodes = 0;
  std::vector<TargetOutcome> per_target;

  std::size_t n_attacked() const { return static_cast<std::size_t>(std::count(alpha.begin(), alpha.end(), true)); }
  double deviation() const { return delta.size() ? delta(static_cast<Eigen::Index>(target)) : 0.0; }
};

struct Alg1Config {
  double epsilon0 = 0.1;
  double epsilon_min = 0.1 / 1024.0;
  int n_max = 50;
  double big_m = 0.0;                // 0: derived from the instance box
  double acceptance_tol = 1e-7;      // residual slack allowed when accepting an iterate
  double margin = 0.1;               // linearized thresholds tightened by margin * radius

  void validate() const {
    detail::require(epsilon0 > 0 && epsilon_min > 0, "trust radii must be positive");
    detail::require(epsilon_min < epsilon0, "epsilon_min must be below epsilon0");
    detail::require(n_max > 0, "n_max must be positive");
    detail::require(big_m >= 0, "big_m must be nonnegative");
    detail::require(margin >= 0 && std::isfinite(margin), "margin must be finite and nonnegative");
  }
};

/// epsilon0 = 10% of the mean per-sensor clean range, epsilon_min = epsilon0 / 2^10, n_max = 50.
inline Alg1Config default_alg1(const Dataset& clean) {
  const auto sensors = clean.sensors();
  double total = 0.0;
  for (SensorId s : sensors) {
    const auto col = clean.values.col(static_cast<Eigen::Index>(s));
    total += col.maxCoeff() - col.minCoeff();
  }
  Alg1Config cfg;
  const double mean_range = sensors.empty() ? 1.0 : total / static_cast<double>(sensors.size());
  cfg.epsilon0 = mean_range > 0 ? 0.1 * mean_range : 0.1;
  cfg.epsilon_min = cfg.epsilon0 / 1024.0;
  return cfg;
}

inline constexpr double kStealthTolerance = 1e-6;

// --- affine detectors -------------------------------------------------------------

struct AffineDetector {
  SensorId sensor = 0;
  std::vector<SensorId> features;
  AffineMap map;
};

/// Native linear models only; anything else is a type error.
inline std::vector<AffineDetector> affine_detectors(const PredictorBank& bank) {
  std::vector<AffineDetector> out;
  for (const auto& d : bank.detectors) {
    const auto* lm = std::get_if<LinearModel>(&d.model);
    if (!lm) throw TypeError("detector for sensor " + std::to_string(d.sensor) + " is not a linear model");
    out.push_back({d.sensor, d.features, {lm->weights, lm->bias}});
  }
  return out;
}

/// First-order expansion of every detector at the reading `point`.
inline std::vector<AffineDetector> linearize_bank(const PredictorBank& bank, const Eigen::Ref<const Vector>& point) {
  std::vector<AffineDetector> out;
  for (const auto& d : bank.detectors) out.push_back({d.sensor, d.features, taylor_linearize(d.model, d.gather(point))});
  return out;
}

/// Variable layout of the attack MILP for an instance of width d:
/// [y_tilde (d) | delta (d) | alpha (d)].
struct AttackLayout {
  std::size_t width = 0;
  std::size_t reading(SensorId s) const { return s; }
  std::size_t delta(SensorId s) const { return width + s; }
  std::size_t alpha(SensorId s) const { return 2 * width + s; }
};

/// Builds the stealthy-attack MILP for one target. The optional trust region
/// restricts |delta - delta_prev| <= trust_radius componentwise.
inline MILPProblem build_attack_milp(const std::vector<AffineDetector>& detectors, const ThresholdConfig& tau,
                                     const AttackInstance& inst, SensorId target, double trust_radius = kInfinity,
                                     const Vector* delta_prev = nullptr, double big_m = 0.0) {
  inst.validate();
  if (std::find(inst.critical.begin(), inst.critical.end(), target) == inst.critical.end())
    throw ArgumentError("attack target " + std::to_string(target) + " is not a critical sensor");
  detail::require(trust_radius > 0, "trust radius must be positive");
  const std::size_t d = inst.width();
  const AttackLayout at{d};
  MILPProblem p;
  p.lp = LinearProgram(3 * d);

  double needed_m = 0.0;
  for (SensorId s = 0; s < d; ++s) {
    const auto [lo, hi] = inst.delta_range(s);
    needed_m = std::max({needed_m, std::abs(lo), std::abs(hi)});
  }
  double m = 2.0 * needed_m;
  if (big_m > 0) {
    detail::require(big_m >= needed_m, "big_m is smaller than the largest admissible perturbation");
    m = big_m;
  }
  if (!(m > 0)) m = 1.0;

  for (SensorId s = 0; s < d; ++s) {
    const auto k = static_cast<Eigen::Index>(s);
    auto [lo, hi] = inst.delta_range(s);
    if (delta_prev && std::isfinite(trust_radius) && inst.is_attackable(s)) {
      const double prev = (*delta_prev)(k);
      lo = std::max(lo, prev - trust_radius);
      hi = std::min(hi, prev + trust_radius);
    }
    const auto yi = static_cast<Eigen::Index>(at.reading(s));
    const auto di = static_cast<Eigen::Index>(at.delta(s));
    const auto ai = static_cast<Eigen::Index>(at.alpha(s));
    p.lp.lower(di) = lo;
    p.lp.upper(di) = hi;
    p.lp.lower(yi) = inst.y(k) + lo;
    p.lp.upper(yi) = inst.y(k) + hi;
    p.lp.lower(ai) = 0.0;
    p.lp.upper(ai) = inst.is_attackable(s) ? 1.0 : 0.0;
    p.binary_vars.push_back(at.alpha(s));

    // y_tilde = y + delta
    p.lp.add_row({{at.reading(s), 1.0}, {at.delta(s), -1.0}}, Sense::Equal, inst.y(k));
    if (inst.is_attackable(s)) {
      p.lp.add_row({{at.delta(s), 1.0}, {at.alpha(s), -m}}, Sense::LessEqual, 0.0);
      p.lp.add_row({{at.delta(s), -1.0}, {at.alpha(s), -m}}, Sense::LessEqual, 0.0);
    }
  }

  std::vector<std::pair<std::size_t, double>> budget;
  for (SensorId s : inst.attackable) budget.emplace_back(at.alpha(s), 1.0);
  p.lp.add_row(budget, Sense::LessEqual, static_cast<double>(inst.budget));

  for (const auto& det : detectors) {
    detail::require(det.sensor < d, "detector sensor outside the instance");
    const double threshold = tau.at(det.sensor);
    std::vector<std::pair<std::size_t, double>> terms{{at.reading(det.sensor), 1.0}};
    for (std::size_t f = 0; f < det.features.size(); ++f) {
      detail::require(det.features[f] < d, "detector feature outside the instance");
      terms.emplace_back(at.reading(det.features[f]), -det.map.weights(static_cast<Eigen::Index>(f)));
    }
    p.lp.add_row(terms, Sense::LessEqual, threshold + det.map.bias);
    for (auto& [index, coeff] : terms) coeff = -coeff;
    p.lp.add_row(terms, Sense::LessEqual, threshold - det.map.bias);
  }

  p.lp.objective(static_cast<Eigen::Index>(at.delta(target))) = inst.direction == Direction::Minimize ? 1.0 : -1.0;
  return p;
}

inline MILPProblem build_attack_milp(const PredictorBank& bank, const ThresholdConfig& tau, const AttackInstance& inst,
                                     SensorId target, double trust_radius = kInfinity) {
  return build_attack_milp(affine_detectors(bank), tau, inst, target, trust_radius);
}

namespace detail {

/// Signed gain of an attacked reading in the attacker's preferred direction.
inline double gain(Direction dir, double delta) { return dir == Direction::Minimize ? -delta : delta; }

inline AttackResult noop_attack(const PredictorBank& bank, const ThresholdConfig& tau, const AttackInstance& inst,
                                SensorId target) {
  AttackResult r;
  r.y_tilde = inst.y;
  r.delta = Vector::Zero(inst.y.size());
  r.alpha.assign(inst.width(), false);
  r.target = target;
  r.objective = inst.y(static_cast<Eigen::Index>(target));
  r.feasible = stealth_margin(bank, tau, inst.y) <= kStealthTolerance;
  return r;
}

inline AttackResult extract_attack(const MILPSolution& sol, const AttackInstance& inst, SensorId target) {
  const std::size_t d = inst.width();
  const AttackLayout at{d};
  AttackResult r;
  r.delta = Vector::Zero(static_cast<Eigen::Index>(d));
  r.alpha.assign(d, false);
  for (SensorId s = 0; s < d; ++s) {
    const bool on = inst.is_attackable(s) && sol.x(static_cast<Eigen::Index>(at.alpha(s))) > 0.5;
    double delta = sol.x(static_cast<Eigen::Index>(at.delta(s)));
    if (!on || std::abs(delta) < 1e-12) delta = 0.0;
    r.delta(static_cast<Eigen::Index>(s)) = delta;
    r.alpha[s] = delta != 0.0;
  }
  r.y_tilde = inst.y + r.delta;
  r.target = target;
  r.objective = r.y_tilde(static_cast<Eigen::Index>(target));
  return r;
}

/// Picks the target with the largest gain; earlier targets win ties.
inline AttackResult select_best(std::vector<AttackResult>& candidates, const AttackInstance& inst) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < candidates.size(); ++i) {
    const auto& c = candidates[i];
    const auto& b = candidates[best];
    if (c.feasible && (!b.feasible || gain(inst.direction, c.deviation()) > gain(inst.direction, b.deviation()) + 1e-12))
      best = i;
  }
  return candidates[best];
}

}  // namespace detail

/// Exact attack on an affine bank: one MILP per critical target.
inline AttackResult attack_linear(const PredictorBank& bank, const ThresholdConfig& tau, const AttackInstance& inst,
                                  const MILPOptions& options = {}) {
  inst.validate();
  if (!bank.affine()) throw TypeError("attack_linear needs an affine detector bank");
  detail::require(!inst.critical.empty(), "attack needs at least one critical target");
  const auto detectors = linearize_bank(bank, inst.y);

  std::vector<AttackResult> candidates;
  std::vector<TargetOutcome> outcomes;
  bool optimal = true;
  std::size_t nodes = 0;
  std::size_t iterations = 0;
  for (SensorId target : inst.critical) {
    const MILPSolution sol = solve_milp(build_attack_milp(detectors, tau, inst, target), options);
    nodes += sol.nodes_explored;
    iterations += sol.iterations;
    AttackResult r;
    if (sol.status == SolveStatus::IterationLimit) optimal = false;
    if (sol.x.size() > 0 && (sol.status == SolveStatus::Optimal || sol.status == SolveStatus::IterationLimit)) {
      r = detail::extract_attack(sol, inst, target);
      r.feasible = stealth_margin(bank, tau, r.y_tilde) <= kStealthTolerance;
    } else {
      r = detail::noop_attack(bank, tau, inst, target);
      r.feasible = false;
    }
    outcomes.push_back({target, r.objective, sol.status, r.feasible, sol.iterations});
    candidates.push_back(std::move(r));
  }

  const bool any = std::any_of(candidates.begin(), candidates.end(), [](const auto& c) { return c.feasible; });
  AttackResult best = any ? detail::select_best(candidates, inst) : detail::noop_attack(bank, tau, inst, inst.critical.front());
  best.per_target = std::move(outcomes);
  best.optimal = optimal;
  best.nodes = nodes;
  best.iterations = iterations;
  return best;
}

/// Iterative linearization attack for nonlinear banks. Per target: linearize
/// every detector at the current reading, solve the trust-region MILP, and
/// accept the candidate only if the true detectors stay quiet and the target
/// moves; otherwise halve the radius. The radius resets to epsilon0 after each
/// accepted step. The MILP sees thresholds lowered by margin * radius so that
/// steps along a curved stealth boundary are not all rejected; the margin
/// vanishes as the radius shrinks. A bank whose detectors are all affine
/// needs neither trust region nor margin.
inline AttackResult attack_nn(const PredictorBank& bank, const ThresholdConfig& tau, const AttackInstance& inst,
                              const Alg1Config& cfg, const MILPOptions& options = {}) {
  inst.validate();
  cfg.validate();
  detail::require(!inst.critical.empty(), "attack needs at least one critical target");
  const bool exact = bank.affine();

  std::vector<AttackResult> candidates;
  std::vector<TargetOutcome> outcomes;
  bool optimal = true;
  std::size_t total_iterations = 0;
  std::size_t nodes = 0;

  for (SensorId target : inst.critical) {
    AttackResult current = detail::noop_attack(bank, tau, inst, target);
    if (stealth_margin(bank, tau, inst.y) > cfg.acceptance_tol) {
      // Clean reading already alarms; no stealthy starting point.
      current.feasible = false;
      outcomes.push_back({target, current.objective, SolveStatus::Infeasible, false, 0});
      candidates.push_back(std::move(current));
      continue;
    }
    SolveStatus last = SolveStatus::Optimal;
    std::size_t iterations = 0;
    int accepted = 0;
    double radius = cfg.epsilon0;
    while (accepted < cfg.n_max) {
      ThresholdConfig tightened = tau;
      if (!exact)
        for (auto& [s, t] : tightened.tau) t = std::max(0.0, t - cfg.margin * radius);
      const auto linear = linearize_bank(bank, current.y_tilde);
      const MILPSolution sol = solve_milp(
          build_attack_milp(linear, tightened, inst, target, exact ? kInfinity : radius, &current.delta, cfg.big_m),
          options);
      ++iterations;
      nodes += sol.nodes_explored;
      last = sol.status;
      if (sol.status == SolveStatus::IterationLimit) {
        optimal = false;
        break;
      }
      bool improved = false;
      if (sol.status == SolveStatus::Optimal) {
        AttackResult candidate = detail::extract_attack(sol, inst, target);
        if (stealth_margin(bank, tau, candidate.y_tilde) <= cfg.acceptance_tol) {
          const double improvement = detail::gain(inst.direction, candidate.deviation()) -
                                     detail::gain(inst.direction, current.deviation());
          if (improvement >= 0.0) current = std::move(candidate);
          if (exact) break;
          improved = improvement >= 1e-9;
        }
      } else if (exact) {
        break;
      }
      if (improved) {
        ++accepted;
        radius = cfg.epsilon0;
      } else {
        radius /= 2.0;
        if (radius < cfg.epsilon_min) break;
      }
    }
    current.feasible = stealth_margin(bank, tau, current.y_tilde) <= kStealthTolerance;
    current.iterations = iterations;
    total_iterations += iterations;
    outcomes.push_back({target, current.objective, last, current.feasible, iterations});
    candidates.push_back(std::move(current));
  }

  AttackResult best = detail::select_best(candidates, inst);
  best.per_target = std::move(outcomes);
  best.optimal = optimal;
  best.iterations = total_iterations;
  best.nodes = nodes;
  return best;
}

/// attack_linear for affine banks, attack_nn otherwise.
inline AttackResult attack(const PredictorBank& bank, const ThresholdConfig& tau, const AttackInstance& inst,
                           const Alg1Config& cfg, const MILPOptions& options = {}) {
  if (bank.affine()) return attack_linear(bank, tau, inst, options);
  return attack_nn(bank, tau, inst, cfg, options);
}

inline nlohmann::json to_json(const AttackResult& r, const AttackInstance& inst, const std::vector<std::string>& names) {
  auto vec = [](const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  auto name_list = [&](const std::vector<SensorId>& ids) {
    std::vector<std::string> out;
    for (SensorId s : ids) out.push_back(names.at(s));
    return out;
  };
  nlohmann::json targets = nlohmann::json::array();
  for (const auto& t : r.per_target)
    targets.push_back({{"target", names.at(t.target)},
                       {"objective", t.objective},
                       {"status", to_string(t.status)},
                       {"feasible", t.feasible},
                       {"iterations", t.iterations}});
  nlohmann::json eta = nlohmann::json::array();
  for (std::size_t s = 0; s < inst.width(); ++s) {
    const double e = inst.eta_at(s);
    eta.push_back(std::isfinite(e) ? nlohmann::json(e) : nlohmann::json(nullptr));
  }
  return {{"instance",
           {{"y", vec(inst.y)},
            {"critical", name_list(inst.critical)},
            {"attackable", name_list(inst.attackable)},
            {"budget", inst.budget},
            {"eta", eta},
            {"direction", to_string(inst.direction)}}},
          {"per_target", targets},
          {"target", names.at(r.target)},
          {"objective", r.objective},
          {"delta", vec(r.delta)},
          {"attacked", r.n_attacked()},
          {"feasible", r.feasible},
          {"optimal", r.optimal},
          {"solver", {{"nodes", r.nodes}, {"iterations", r.iterations}}}};
}

}  // namespace advreg
