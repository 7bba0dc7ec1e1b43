#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "advreg/core.hpp"
#include "advreg/models.hpp"
#include "advreg/plant.hpp"

namespace advreg {

/// One regression detector: predicts `sensor` from the listed feature columns.
struct Detector {
  SensorId sensor = 0;
  std::vector<SensorId> features;
  Predictor model;

  Vector gather(const Eigen::Ref<const Vector>& row) const {
    Vector x(static_cast<Eigen::Index>(features.size()));
    for (std::size_t k = 0; k < features.size(); ++k) x(static_cast<Eigen::Index>(k)) = row(static_cast<Eigen::Index>(features[k]));
    return x;
  }

  double predict_row(const Eigen::Ref<const Vector>& row) const { return predict(model, gather(row)); }

  double residual(const Eigen::Ref<const Vector>& row) const {
    return std::abs(predict_row(row) - row(static_cast<Eigen::Index>(sensor)));
  }
};

struct PredictorBank {
  std::vector<Detector> detectors;
  std::vector<std::string> column_names;  // optional; used for serialization

  std::vector<SensorId> detector_set() const {
    std::vector<SensorId> out;
    for (const auto& d : detectors) out.push_back(d.sensor);
    return out;
  }

  const Detector* find(SensorId sensor) const {
    for (const auto& d : detectors)
      if (d.sensor == sensor) return &d;
    return nullptr;
  }

  std::size_t min_row_width() const {
    std::size_t width = 0;
    for (const auto& d : detectors) {
      width = std::max(width, d.sensor + 1);
      for (SensorId f : d.features) width = std::max(width, f + 1);
    }
    return width;
  }

  bool affine() const {
    return std::all_of(detectors.begin(), detectors.end(), [](const Detector& d) { return is_affine(d.model); });
  }

  void validate() const {
    detail::require(!detectors.empty(), "predictor bank needs at least one detector");
    std::vector<SensorId> seen;
    for (const auto& d : detectors) {
      detail::require(std::find(d.features.begin(), d.features.end(), d.sensor) == d.features.end(),
                      "a detector may not use its own sensor as a feature");
      detail::require(n_features(d.model) == d.features.size(), "detector model width must match feature list");
      detail::require(std::find(seen.begin(), seen.end(), d.sensor) == seen.end(), "duplicate detector sensor");
      seen.push_back(d.sensor);
    }
  }
};

struct ThresholdConfig {
  std::map<SensorId, double> tau;
  nlohmann::json calibration = nlohmann::json::object();

  double at(SensorId s) const {
    auto it = tau.find(s);
    if (it == tau.end()) throw ArgumentError("no threshold for sensor " + std::to_string(s));
    return it->second;
  }

  void validate(const PredictorBank& bank) const {
    detail::require(tau.size() == bank.detectors.size(), "threshold keys must match the detector set");
    for (const auto& d : bank.detectors) detail::require(at(d.sensor) >= 0.0, "thresholds must be nonnegative");
  }
};

/// Empirical clean-data residual sample for one detector.
struct FPCurve {
  SensorId sensor = 0;
  std::vector<double> sorted_residuals;

  std::size_t size() const { return sorted_residuals.size(); }

  /// FP(tau): number of residuals strictly above tau.
  std::size_t count_above(double tau) const {
    return static_cast<std::size_t>(sorted_residuals.end() -
                                    std::upper_bound(sorted_residuals.begin(), sorted_residuals.end(), tau));
  }
};

enum class FeatureLayout { NonCriticalAndControls, AllOther };
enum class DetectorScope { Critical, AllSensors };

inline std::vector<SensorId> feature_columns(const Dataset& data, SensorId sensor, FeatureLayout layout) {
  std::vector<SensorId> out;
  for (std::size_t j = 0; j < data.cols(); ++j) {
    if (j == sensor) continue;
    const auto role = data.columns[j].role;
    if (layout == FeatureLayout::NonCriticalAndControls && role == SensorRole::Critical) continue;
    out.push_back(j);
  }
  return out;
}

inline Vector bank_row_check(const PredictorBank& bank, const Eigen::Ref<const Vector>& row) {
  if (static_cast<std::size_t>(row.size()) < bank.min_row_width())
    throw ArgumentError("row has " + std::to_string(row.size()) + " entries, detectors need " +
                        std::to_string(bank.min_row_width()));
  return row;
}

// --- operations -----------------------------------------------------------------

inline std::map<SensorId, double> residuals(const PredictorBank& bank, const Eigen::Ref<const Vector>& row) {
  bank_row_check(bank, row);
  std::map<SensorId, double> out;
  for (const auto& d : bank.detectors) out[d.sensor] = d.residual(row);
  return out;
}

/// Largest residual excess over threshold, max_s (r_s - tau_s).
inline double stealth_margin(const PredictorBank& bank, const ThresholdConfig& tau,
                             const Eigen::Ref<const Vector>& row) {
  bank_row_check(bank, row);
  double worst = -kInfinity;
  for (const auto& d : bank.detectors) worst = std::max(worst, d.residual(row) - tau.at(d.sensor));
  return worst;
}

inline std::map<SensorId, std::vector<std::size_t>> alarms(const PredictorBank& bank, const Dataset& data,
                                                           const ThresholdConfig& tau) {
  std::map<SensorId, std::vector<std::size_t>> out;
  for (const auto& d : bank.detectors) out[d.sensor];
  for (std::size_t t = 0; t < data.rows(); ++t) {
    const Vector row = data.values.row(static_cast<Eigen::Index>(t)).transpose();
    bank_row_check(bank, row);
    for (const auto& d : bank.detectors)
      if (d.residual(row) > tau.at(d.sensor)) out[d.sensor].push_back(t);
  }
  return out;
}

inline std::map<SensorId, FPCurve> fp_curve(const PredictorBank& bank, const Dataset& clean) {
  if (clean.rows() < 2) throw ArgumentError("fp_curve needs at least 2 clean rows");
  std::map<SensorId, FPCurve> out;
  for (const auto& d : bank.detectors) out[d.sensor].sensor = d.sensor;
  for (std::size_t t = 0; t < clean.rows(); ++t) {
    const Vector row = clean.values.row(static_cast<Eigen::Index>(t)).transpose();
    bank_row_check(bank, row);
    for (const auto& d : bank.detectors) out[d.sensor].sorted_residuals.push_back(d.residual(row));
  }
  for (auto& [sensor, curve] : out) std::sort(curve.sorted_residuals.begin(), curve.sorted_residuals.end());
  return out;
}

/// Smallest tau among {0} and the sample values with FP(tau) <= max_alarms.
inline double fp_inverse(const FPCurve& curve, double max_alarms) {
  const double n = static_cast<double>(curve.size());
  if (!(max_alarms >= 0.0) || max_alarms > n)
    throw ArgumentError("alarm budget must lie in [0, sample size]");
  if (curve.size() == 0 || static_cast<double>(curve.count_above(0.0)) <= max_alarms) return 0.0;
  // FP(r_(i)) is the number of entries after the last copy of r_(i); walk the
  // distinct values from the top until the count would exceed the budget.
  const auto& r = curve.sorted_residuals;
  double answer = r.back();
  for (std::size_t i = r.size(); i-- > 0;) {
    if (static_cast<double>(curve.count_above(r[i])) > max_alarms) break;
    answer = r[i];
  }
  return answer;
}

/// Baseline thresholds for a target mean time between false alarms (in
/// steps) across the union of `n_detectors` detectors: each detector gets an
/// alarm budget of (window_rows / target_period_steps) / n_detectors.
inline ThresholdConfig calibrate_baseline(const std::map<SensorId, FPCurve>& curves, double target_period_steps,
                                          std::size_t n_detectors) {
  detail::require(!curves.empty(), "calibrate_baseline needs at least one curve");
  detail::require(target_period_steps > 0, "target period must be positive");
  detail::require(n_detectors > 0, "n_detectors must be positive");
  ThresholdConfig out;
  const double window = static_cast<double>(curves.begin()->second.size());
  const double budget = window / target_period_steps / static_cast<double>(n_detectors);
  for (const auto& [sensor, curve] : curves) {
    if (budget > static_cast<double>(curve.size())) throw ArgumentError("alarm budget exceeds the reference window");
    out.tau[sensor] = fp_inverse(curve, budget);
  }
  out.calibration = {{"method", "empirical_fp_inverse"},
                     {"window_rows", window},
                     {"target_period_steps", target_period_steps},
                     {"n_detectors", n_detectors},
                     {"per_detector_budget", budget}};
  return out;
}

/// Trains one detector per sensor in `scope` on `train`.
struct TrainedBank {
  PredictorBank bank;
  std::map<SensorId, double> target_scale;  // training std of each detector's sensor
};

inline TrainedBank train_bank(const Dataset& train, ModelFamily family, const TrainConfig& cfg,
                              FeatureLayout layout = FeatureLayout::NonCriticalAndControls,
                              DetectorScope scope = DetectorScope::Critical) {
  train.validate();
  TrainedBank out;
  out.bank.column_names = train.names();
  const auto targets_ids = scope == DetectorScope::Critical ? train.critical() : train.sensors();
  detail::require(!targets_ids.empty(), "no sensors to build detectors for");
  std::uint64_t offset = 0;
  for (SensorId s : targets_ids) {
    Detector d;
    d.sensor = s;
    d.features = feature_columns(train, s, layout);
    detail::require(!d.features.empty(), "detector has no feature columns");
    Matrix x(train.values.rows(), static_cast<Eigen::Index>(d.features.size()));
    std::vector<std::string> names;
    for (std::size_t k = 0; k < d.features.size(); ++k) {
      x.col(static_cast<Eigen::Index>(k)) = train.values.col(static_cast<Eigen::Index>(d.features[k]));
      names.push_back(train.columns[d.features[k]].name);
    }
    const Vector y = train.values.col(static_cast<Eigen::Index>(s));
    TrainConfig local = cfg;
    local.seed = cfg.seed + offset++;
    d.model = fit(family, x, y, local);
    set_feature_names(d.model, names);
    const double mean = y.mean();
    double scale = std::sqrt((y.array() - mean).square().mean());
    out.target_scale[s] = scale > 1e-12 ? scale : 1.0;
    out.bank.detectors.push_back(std::move(d));
  }
  out.bank.validate();
  return out;
}

/// Normalized MSE of each detector on `data`.
inline std::map<SensorId, double> detector_mse(const TrainedBank& trained, const Dataset& data) {
  std::map<SensorId, double> out;
  for (const auto& d : trained.bank.detectors) {
    Matrix x(data.values.rows(), static_cast<Eigen::Index>(d.features.size()));
    for (std::size_t k = 0; k < d.features.size(); ++k)
      x.col(static_cast<Eigen::Index>(k)) = data.values.col(static_cast<Eigen::Index>(d.features[k]));
    out[d.sensor] = normalized_mse(d.model, x, data.values.col(static_cast<Eigen::Index>(d.sensor)),
                                   trained.target_scale.at(d.sensor));
  }
  return out;
}

// --- serialization ------------------------------------------------------------------

inline nlohmann::json to_json(const ThresholdConfig& cfg, const std::vector<std::string>& names) {
  nlohmann::json tau = nlohmann::json::object();
  for (const auto& [sensor, value] : cfg.tau) tau[names.at(sensor)] = value;
  return {{"tau", tau}, {"calibration", cfg.calibration}};
}

inline ThresholdConfig thresholds_from_json(const nlohmann::json& j, const std::vector<std::string>& names) {
  ThresholdConfig cfg;
  try {
    for (const auto& [name, value] : j.at("tau").items()) {
      auto it = std::find(names.begin(), names.end(), name);
      if (it == names.end()) throw ParseError("threshold for unknown sensor '" + name + "'");
      cfg.tau[static_cast<SensorId>(it - names.begin())] = value.get<double>();
    }
    if (j.contains("calibration")) cfg.calibration = j["calibration"];
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed threshold JSON: ") + e.what());
  }
  return cfg;
}

inline nlohmann::json to_json(const Detector& d, const std::vector<std::string>& names) {
  nlohmann::json features = nlohmann::json::array();
  for (SensorId f : d.features) features.push_back(names.at(f));
  return {{"sensor", names.at(d.sensor)}, {"features", features}, {"model", to_json(d.model)}};
}

inline Detector detector_from_json(const nlohmann::json& j, const std::vector<std::string>& names) {
  auto lookup = [&](const std::string& name) {
    auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) throw ParseError("detector references unknown column '" + name + "'");
    return static_cast<SensorId>(it - names.begin());
  };
  try {
    Detector d;
    d.sensor = lookup(j.at("sensor").get<std::string>());
    for (const auto& f : j.at("features")) d.features.push_back(lookup(f.get<std::string>()));
    d.model = predictor_from_json(j.at("model"));
    return d;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed detector JSON: ") + e.what());
  }
}

}  // namespace advreg
