#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "advreg/attack.hpp"
#include "advreg/core.hpp"
#include "advreg/detector.hpp"
#include "advreg/plant.hpp"

namespace advreg {

/// Mean absolute deviation D_s that the best stealthy attack on target s
/// achieves over a horizon of T rows.
struct ImpactReport {
  std::map<SensorId, double> per_sensor;
  SensorId worst_sensor = 0;
  double worst = 0.0;
  std::size_t horizon = 0;
};

struct DefenseConfig {
  double gamma = 0.0;      // false-alarm slack over the baseline
  double epsilon = 0.1;    // initial threshold step
  int n_max = 20;
  std::size_t horizon = 0;  // rows of the trajectory used for impact; 0 = all
  Alg1Config alg1;

  void validate() const {
    detail::require(gamma >= 0.0 && std::isfinite(gamma), "gamma must be finite and nonnegative");
    detail::require(epsilon > 0.0 && std::isfinite(epsilon), "epsilon must be positive");
    detail::require(n_max >= 1, "n_max must be positive");
    alg1.validate();
  }
};

/// Attack each critical target of `inst_template` on every trajectory row and
/// average |y~_s - y_s|. A row where the clean reading already alarms
/// contributes zero.
inline ImpactReport impact(const PredictorBank& bank, const ThresholdConfig& tau, const Dataset& trajectory,
                           const AttackInstance& inst_template, const Alg1Config& alg1 = {},
                           std::size_t horizon = 0) {
  detail::require(trajectory.rows() >= 1, "impact needs at least one trajectory row");
  detail::require(!inst_template.critical.empty(), "impact needs at least one critical sensor");
  const std::size_t rows = horizon == 0 ? trajectory.rows() : horizon;
  detail::require(rows <= trajectory.rows(), "horizon exceeds the trajectory length");

  ImpactReport report;
  report.horizon = rows;
  for (SensorId s : inst_template.critical) {
    double total = 0.0;
    for (std::size_t t = 0; t < rows; ++t) {
      AttackInstance inst = inst_template;
      inst.y = trajectory.values.row(static_cast<Eigen::Index>(t)).transpose();
      inst.critical = {s};
      try {
        const AttackResult r = attack(bank, tau, inst, alg1);
        if (!r.optimal) throw SolverLimitError("solver limit reached");
        if (r.feasible) total += std::abs(r.deviation());
      } catch (const Error& e) {
        const std::string where = " (row " + std::to_string(t) + ", sensor " + std::to_string(s) + ")";
        if (dynamic_cast<const SolverLimitError*>(&e)) throw SolverLimitError(e.what() + where);
        if (dynamic_cast<const ArgumentError*>(&e)) throw ArgumentError(e.what() + where);
        if (dynamic_cast<const TypeError*>(&e)) throw TypeError(e.what() + where);
        throw Error(e.what() + where);
      }
    }
    report.per_sensor[s] = total / static_cast<double>(rows);
  }
  auto worst = report.per_sensor.begin();
  for (auto it = report.per_sensor.begin(); it != report.per_sensor.end(); ++it)
    if (it->second > worst->second) worst = it;
  report.worst_sensor = worst->first;
  report.worst = worst->second;
  return report;
}

inline std::size_t total_false_alarms(const PredictorBank& bank, const ThresholdConfig& tau, const Dataset& clean) {
  std::size_t total = 0;
  for (const auto& [sensor, list] : alarms(bank, clean, tau)) total += list.size();
  return total;
}

struct DefenseIteration {
  int iteration = 0;
  double epsilon = 0.0;
  std::map<SensorId, double> tau;  // candidate evaluated this iteration
  double worst = 0.0;
  SensorId worst_sensor = 0;
  std::size_t false_alarms = 0;
  bool accepted = false;
};

struct DefenseResult {
  ThresholdConfig tau;
  bool improved = false;
  double baseline_worst = 0.0;
  double final_worst = 0.0;
  std::size_t baseline_false_alarms = 0;
  std::size_t final_false_alarms = 0;
  ImpactReport baseline_impact;
  ImpactReport final_impact;
  std::vector<DefenseIteration> log;
};

namespace detail {

inline std::vector<SensorId> near_value(const std::map<SensorId, double>& values, double target) {
  std::vector<SensorId> out;
  for (const auto& [s, v] : values)
    if (std::abs(v - target) <= 1e-9 * (1.0 + std::abs(target))) out.push_back(s);
  return out;
}

}  // namespace detail

/// Threshold search against a best-responding attacker. Each iteration lowers
/// the thresholds of the most impacted critical sensors by epsilon and pays
/// for the extra clean-window alarms by raising the thresholds of the least
/// impacted ones. A candidate is accepted when the worst impact does not grow
/// and total false alarms stay within gamma of the baseline; otherwise epsilon
/// is halved. Returns the accepted thresholds with the lowest worst impact,
/// or the baseline when nothing improved on it.
inline DefenseResult resilient_thresholds(const PredictorBank& bank, const ThresholdConfig& tau_baseline,
                                          const std::map<SensorId, FPCurve>& curves, const Dataset& trajectory,
                                          const Dataset& clean, const AttackInstance& inst_template,
                                          const DefenseConfig& cfg) {
  cfg.validate();
  tau_baseline.validate(bank);
  for (SensorId s : inst_template.critical)
    detail::require(curves.count(s) > 0, "every critical sensor needs a false-alarm curve");

  auto evaluate = [&](const ThresholdConfig& tau) {
    return impact(bank, tau, trajectory, inst_template, cfg.alg1, cfg.horizon);
  };

  DefenseResult result;
  result.tau = tau_baseline;
  result.baseline_impact = evaluate(tau_baseline);
  result.final_impact = result.baseline_impact;
  result.baseline_worst = result.final_worst = result.baseline_impact.worst;
  result.baseline_false_alarms = result.final_false_alarms = total_false_alarms(bank, tau_baseline, clean);
  const double fa_limit = static_cast<double>(result.baseline_false_alarms) + cfg.gamma;
  if (result.baseline_worst <= 1e-12) return result;

  ThresholdConfig current = tau_baseline;
  ImpactReport current_impact = result.baseline_impact;
  double epsilon = cfg.epsilon;

  for (int iteration = 1; iteration <= cfg.n_max; ++iteration) {
    double low = kInfinity;
    for (const auto& [s, v] : current_impact.per_sensor) low = std::min(low, v);
    const auto top = detail::near_value(current_impact.per_sensor, current_impact.worst);
    std::vector<SensorId> bottom;
    for (SensorId s : detail::near_value(current_impact.per_sensor, low))
      if (std::find(top.begin(), top.end(), s) == top.end()) bottom.push_back(s);

    ThresholdConfig candidate = current;
    double added = 0.0;
    for (SensorId s : top) {
      const auto& curve = curves.at(s);
      const double before = current.tau.at(s);
      const double after = std::max(0.0, before - epsilon);
      candidate.tau[s] = after;
      added += static_cast<double>(curve.count_above(after)) - static_cast<double>(curve.count_above(before));
    }
    if (!bottom.empty() && added > 0.0) {
      const double share = added / static_cast<double>(bottom.size());
      for (SensorId s : bottom) {
        const auto& curve = curves.at(s);
        const double before = current.tau.at(s);
        const double budget = std::max(0.0, static_cast<double>(curve.count_above(before)) - share);
        candidate.tau[s] = std::max(before, fp_inverse(curve, budget));
      }
    }

    const ImpactReport next = evaluate(candidate);
    const std::size_t fa = total_false_alarms(bank, candidate, clean);
    const bool accept = next.worst <= current_impact.worst && static_cast<double>(fa) <= fa_limit;
    result.log.push_back({iteration, epsilon, candidate.tau, next.worst, next.worst_sensor, fa, accept});

    if (accept) {
      current = candidate;
      current_impact = next;
      if (next.worst < result.final_worst) {
        result.tau = candidate;
        result.final_impact = next;
        result.final_worst = next.worst;
        result.final_false_alarms = fa;
      }
    } else {
      epsilon /= 2.0;
    }
  }
  result.improved = result.final_worst < result.baseline_worst;
  result.tau.calibration = tau_baseline.calibration;
  result.tau.calibration["defense"] = {{"gamma", cfg.gamma}, {"improved", result.improved}};
  return result;
}

inline nlohmann::json to_json(const DefenseResult& r, const std::vector<std::string>& names) {
  auto named = [&](const std::map<SensorId, double>& m) {
    nlohmann::json out = nlohmann::json::object();
    for (const auto& [s, v] : m) out[names.at(s)] = v;
    return out;
  };
  nlohmann::json log = nlohmann::json::array();
  for (const auto& it : r.log)
    log.push_back({{"iteration", it.iteration},
                   {"epsilon", it.epsilon},
                   {"tau", named(it.tau)},
                   {"worst_impact", it.worst},
                   {"worst_sensor", names.at(it.worst_sensor)},
                   {"false_alarms", it.false_alarms},
                   {"accepted", it.accepted}});
  return {{"improved", r.improved},
          {"baseline", {{"worst_impact", r.baseline_worst},
                        {"false_alarms", r.baseline_false_alarms},
                        {"impact", named(r.baseline_impact.per_sensor)}}},
          {"final", {{"worst_impact", r.final_worst},
                     {"false_alarms", r.final_false_alarms},
                     {"impact", named(r.final_impact.per_sensor)},
                     {"tau", named(r.tau.tau)}}},
          {"horizon", r.baseline_impact.horizon},
          {"iterations", log}};
}

/// iteration,epsilon,worst_impact,false_alarms,accepted; row 0 is the baseline.
inline void write_trace_csv(std::ostream& out, const DefenseResult& r) {
  out << "iteration,epsilon,worst_impact,false_alarms,accepted\n";
  out << "0,0," << detail::format_double(r.baseline_worst) << ',' << r.baseline_false_alarms << ",1\n";
  for (const auto& it : r.log)
    out << it.iteration << ',' << detail::format_double(it.epsilon) << ',' << detail::format_double(it.worst) << ','
        << it.false_alarms << ',' << (it.accepted ? 1 : 0) << '\n';
}

}  // namespace advreg
