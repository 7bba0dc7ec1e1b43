#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include <json.hpp>

#include "advreg/core.hpp"

namespace advreg {

enum class SensorRole { Critical, NonCritical, ControlInput };

inline std::string to_string(SensorRole role) {
  switch (role) {
    case SensorRole::Critical: return "critical";
    case SensorRole::NonCritical: return "non_critical";
    case SensorRole::ControlInput: return "control";
  }
  return "unknown";
}

inline SensorRole role_from_string(const std::string& name) {
  if (name == "critical") return SensorRole::Critical;
  if (name == "non_critical") return SensorRole::NonCritical;
  if (name == "control") return SensorRole::ControlInput;
  throw ParseError("unknown sensor role '" + name + "'");
}

struct Column {
  std::string name;
  SensorRole role = SensorRole::NonCritical;

  bool operator==(const Column&) const = default;
};

/// Time-indexed matrix of measurements (rows = timesteps) with a role per column.
struct Dataset {
  std::vector<Column> columns;
  Matrix values;          // rows() x columns.size()
  double timestep = 1.0;  // seconds per row

  std::size_t rows() const { return static_cast<std::size_t>(values.rows()); }
  std::size_t cols() const { return columns.size(); }

  std::vector<SensorId> indices_with_role(SensorRole role) const {
    std::vector<SensorId> out;
    for (std::size_t j = 0; j < columns.size(); ++j)
      if (columns[j].role == role) out.push_back(j);
    return out;
  }

  std::vector<SensorId> critical() const { return indices_with_role(SensorRole::Critical); }

  /// All measurement columns (critical and non-critical), in column order.
  std::vector<SensorId> sensors() const {
    std::vector<SensorId> out;
    for (std::size_t j = 0; j < columns.size(); ++j)
      if (columns[j].role != SensorRole::ControlInput) out.push_back(j);
    return out;
  }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    out.reserve(columns.size());
    for (const auto& c : columns) out.push_back(c.name);
    return out;
  }

  SensorId index_of(const std::string& name) const {
    for (std::size_t j = 0; j < columns.size(); ++j)
      if (columns[j].name == name) return j;
    throw ArgumentError("no column named '" + name + "'");
  }

  Dataset slice(std::size_t begin, std::size_t count) const {
    detail::require(begin + count <= rows(), "slice out of range");
    Dataset out{columns, values.middleRows(static_cast<Eigen::Index>(begin),
                                           static_cast<Eigen::Index>(count)),
                timestep};
    return out;
  }

  void validate() const {
    if (values.cols() != static_cast<Eigen::Index>(columns.size()))
      throw ArgumentError("dataset width does not match column list");
    if (rows() < 2) throw ArgumentError("dataset needs at least 2 rows");
    if (!values.allFinite()) throw ArgumentError("dataset contains non-finite values");
    if (!(timestep > 0)) throw ArgumentError("timestep must be positive");
    std::unordered_set<std::string> seen;
    for (const auto& c : columns)
      if (!seen.insert(c.name).second) throw ArgumentError("duplicate column name '" + c.name + "'");
  }

  bool operator==(const Dataset& other) const {
    return columns == other.columns && timestep == other.timestep &&
           values.rows() == other.values.rows() && values.cols() == other.values.cols() &&
           values == other.values;
  }
};

enum class Nonlinearity { None, Tanh, Quadratic };

/// Synthetic plant: a first-order vector autoregression around setpoints with
/// proportional control. Channels listed in `nonlinear_channels` are soft
/// sensors whose reading is a nonlinear function of the other channels'
/// current state.
struct PlantConfig {
  std::size_t n_sensors = 0;
  std::size_t n_controls = 0;
  Matrix coupling;                   // n_sensors x n_sensors
  Vector noise_std;                  // per sensor
  Nonlinearity nonlinearity = Nonlinearity::None;
  std::vector<SensorId> nonlinear_channels;
  double nonlinear_gain = 1.0;
  double nonlinear_input_gain = 1.0;  // scales the argument of the nonlinearity
  Vector setpoints;                  // per sensor
  Vector initial_state;              // per sensor; empty means all zeros
  std::vector<SensorId> critical;    // sensor indices with the Critical role
  std::vector<SensorId> control_targets;  // sensor regulated by each control; empty = k mod n
  double control_gain = 0.5;
  double timestep = 1.0;
  std::uint64_t seed = 0;

  SensorId control_target(std::size_t k) const {
    return control_targets.empty() ? k % n_sensors : control_targets[k];
  }

  bool is_nonlinear(SensorId s) const {
    return nonlinearity != Nonlinearity::None &&
           std::find(nonlinear_channels.begin(), nonlinear_channels.end(), s) !=
               nonlinear_channels.end();
  }

  void validate() const {
    detail::require(n_sensors > 0, "plant needs at least one sensor");
    const auto n = static_cast<Eigen::Index>(n_sensors);
    detail::require(coupling.rows() == n && coupling.cols() == n, "coupling must be n_sensors square");
    detail::require(noise_std.size() == n, "noise_std must have one entry per sensor");
    detail::require(setpoints.size() == n, "setpoints must have one entry per sensor");
    detail::require(initial_state.size() == 0 || initial_state.size() == n,
                    "initial_state must be empty or have one entry per sensor");
    detail::require((noise_std.array() >= 0).all(), "noise_std must be nonnegative");
    detail::require(coupling.allFinite() && setpoints.allFinite(), "plant parameters must be finite");
    detail::require(control_targets.empty() || control_targets.size() == n_controls,
                    "control_targets must have one entry per control");
    for (SensorId t : control_targets) detail::require(t < n_sensors, "control target out of range");
    for (SensorId s : critical) detail::require(s < n_sensors, "critical index out of range");
    for (SensorId s : nonlinear_channels) detail::require(s < n_sensors, "nonlinear channel out of range");
    detail::require(timestep > 0, "timestep must be positive");
    detail::require(std::isfinite(nonlinear_gain) && std::isfinite(nonlinear_input_gain),
                    "nonlinearity gains must be finite");
    if (nonlinearity == Nonlinearity::None && n_sensors > 0) {
      const double radius = coupling.eigenvalues().cwiseAbs().maxCoeff();
      if (!(radius < 1.0)) throw ArgumentError("coupling spectral radius must be < 1");
    }
  }

  std::vector<Column> columns() const {
    std::vector<Column> out;
    for (std::size_t s = 0; s < n_sensors; ++s) {
      const bool crit = std::find(critical.begin(), critical.end(), s) != critical.end();
      out.push_back({"y" + std::to_string(s), crit ? SensorRole::Critical : SensorRole::NonCritical});
    }
    for (std::size_t k = 0; k < n_controls; ++k) out.push_back({"u" + std::to_string(k), SensorRole::ControlInput});
    return out;
  }
};

/// Noise is drawn from std::mt19937_64 through std::normal_distribution.
inline constexpr const char* kPlantRngAlgorithm = "mt19937_64+normal_distribution";

inline Dataset simulate(const PlantConfig& config, std::size_t steps) {
  config.validate();
  detail::require(steps >= 2, "simulate needs at least 2 steps");

  const auto n = static_cast<Eigen::Index>(config.n_sensors);
  const auto m = static_cast<Eigen::Index>(config.n_controls);
  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  Vector state = config.initial_state.size() == n ? config.initial_state : Vector::Zero(n);
  Matrix values(static_cast<Eigen::Index>(steps), n + m);
  Vector previous = state;

  auto shape = [&](double z) {
    switch (config.nonlinearity) {
      case Nonlinearity::Tanh: return config.nonlinear_gain * std::tanh(z);
      case Nonlinearity::Quadratic: return config.nonlinear_gain * z * z;
      case Nonlinearity::None: break;
    }
    return z;
  };

  for (std::size_t t = 0; t < steps; ++t) {
    Vector reading = state;
    for (SensorId s : config.nonlinear_channels) {
      if (!config.is_nonlinear(s)) continue;
      double z = 0.0;
      for (Eigen::Index j = 0; j < n; ++j) {
        if (static_cast<SensorId>(j) == s || config.is_nonlinear(static_cast<SensorId>(j))) continue;
        z += config.coupling(static_cast<Eigen::Index>(s), j) * (state(j) - config.setpoints(j));
      }
      const auto si = static_cast<Eigen::Index>(s);
      reading(si) = config.setpoints(si) + shape(config.nonlinear_input_gain * z);
      if (t > 0) reading(si) += config.noise_std(si) * normal(rng);
    }

    // Control acts on the previous reading; a same-step law would make the
    // regulated sensor an exact linear function of its control column.
    Vector control = Vector::Zero(m);
    if (t > 0) {
      for (Eigen::Index k = 0; k < m; ++k) {
        const auto target = static_cast<Eigen::Index>(config.control_target(static_cast<std::size_t>(k)));
        control(k) = config.control_gain * (config.setpoints(target) - previous(target));
      }
    }
    previous = reading;

    const auto row = static_cast<Eigen::Index>(t);
    values.row(row).head(n) = reading.transpose();
    values.row(row).tail(m) = control.transpose();
    if (!values.row(row).allFinite() || values.row(row).cwiseAbs().maxCoeff() > 1e9)
      throw InstabilityError("plant trajectory diverged at step " + std::to_string(t));

    Vector next = config.setpoints + config.coupling * (reading - config.setpoints);
    for (Eigen::Index k = 0; k < m; ++k) {
      const auto target = static_cast<Eigen::Index>(config.control_target(static_cast<std::size_t>(k)));
      next(target) += 0.5 * control(k);
    }
    for (Eigen::Index s = 0; s < n; ++s) {
      if (config.is_nonlinear(static_cast<SensorId>(s))) continue;
      next(s) += config.noise_std(s) * normal(rng);
    }
    state = std::move(next);
  }

  Dataset out{config.columns(), std::move(values), config.timestep};
  out.validate();
  return out;
}

/// Random plant with the given shape. Coupling entries are Gaussian, rescaled
/// to spectral radius 0.8; setpoints lie in [10, 100]; noise levels vary per
/// channel so detectors end up with heterogeneous residual scales.
inline PlantConfig make_plant_template(std::size_t n_sensors, std::size_t n_controls, std::size_t n_critical,
                                       std::vector<SensorId> nonlinear_channels, double timestep,
                                       std::uint64_t seed) {
  detail::require(n_critical <= n_sensors, "more critical sensors than sensors");
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);

  PlantConfig cfg;
  cfg.n_sensors = n_sensors;
  cfg.n_controls = n_controls;
  const auto n = static_cast<Eigen::Index>(n_sensors);
  cfg.coupling = Matrix(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) cfg.coupling(i, j) = normal(rng);
  const double radius = cfg.coupling.eigenvalues().cwiseAbs().maxCoeff();
  if (radius > 0) cfg.coupling *= 0.8 / radius;
  cfg.noise_std = Vector(n);
  cfg.setpoints = Vector(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    cfg.noise_std(i) = 0.05 + 0.45 * uniform(rng);
    cfg.setpoints(i) = 10.0 + 90.0 * uniform(rng);
  }
  cfg.initial_state = cfg.setpoints;
  for (std::size_t s = 0; s < n_critical; ++s) cfg.critical.push_back(s);
  if (!nonlinear_channels.empty()) {
    cfg.nonlinearity = Nonlinearity::Tanh;
    cfg.nonlinear_gain = 2.0;
    // Deviations from setpoint are noise-sized; without this the tanh stays
    // in its linear range.
    cfg.nonlinear_input_gain = 8.0;
    cfg.nonlinear_channels = std::move(nonlinear_channels);
  }
  cfg.timestep = timestep;
  cfg.seed = seed;
  return cfg;
}

/// 8 sensors + 2 controls, 2 critical, one tanh channel.
inline PlantConfig desk_template(std::uint64_t seed) { return make_plant_template(8, 2, 2, {1}, 36.0, seed); }

/// 41 measurement channels + 12 manipulated variables, 5 critical, 36 s per step.
inline PlantConfig paper_scale_template(std::uint64_t seed) {
  return make_plant_template(41, 12, 5, {1, 3}, 36.0, seed);
}

// --- CSV and role-map I/O ---------------------------------------------------

inline nlohmann::json role_map_json(const Dataset& data) {
  nlohmann::json cols = nlohmann::json::array();
  for (const auto& c : data.columns) cols.push_back({{"name", c.name}, {"role", to_string(c.role)}});
  return {{"columns", cols}, {"timestep_seconds", data.timestep}};
}

struct RoleMap {
  std::unordered_map<std::string, SensorRole> roles;
  double timestep = 1.0;
};

inline RoleMap parse_role_map(const nlohmann::json& doc) {
  RoleMap out;
  if (!doc.is_object() || !doc.contains("columns") || !doc["columns"].is_array())
    throw ParseError("role map needs a 'columns' array");
  for (const auto& entry : doc["columns"]) {
    if (!entry.contains("name") || !entry.contains("role")) throw ParseError("role map entry needs name and role");
    out.roles[entry["name"].get<std::string>()] = role_from_string(entry["role"].get<std::string>());
  }
  if (doc.contains("timestep_seconds")) out.timestep = doc["timestep_seconds"].get<double>();
  if (!(out.timestep > 0)) throw ParseError("timestep_seconds must be positive");
  return out;
}

inline RoleMap load_role_map(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open role map '" + path + "'");
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("invalid role map JSON: ") + e.what());
  }
  return parse_role_map(doc);
}

inline void write_csv(const Dataset& data, std::ostream& out) {
  for (std::size_t j = 0; j < data.cols(); ++j) out << (j ? "," : "") << data.columns[j].name;
  out << '\n';
  for (Eigen::Index t = 0; t < data.values.rows(); ++t) {
    for (Eigen::Index j = 0; j < data.values.cols(); ++j)
      out << (j ? "," : "") << detail::format_double(data.values(t, j));
    out << '\n';
  }
}

inline void write_csv(const Dataset& data, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path + "'");
  write_csv(data, out);
}

namespace detail {
inline std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  for (;;) {
    const auto comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      cells.push_back(line.substr(start));
      return cells;
    }
    cells.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}
}  // namespace detail

/// Rows and columns in error messages are 1-based; row 1 is the header.
inline Dataset read_csv(std::istream& in, const RoleMap& roles) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty CSV");
  if (!line.empty() && line.back() == '\r') line.pop_back();

  Dataset data;
  data.timestep = roles.timestep;
  std::size_t column = 0;
  for (auto cell : detail::split_commas(line)) {
    ++column;
    std::string name(cell);
    auto it = roles.roles.find(name);
    if (it == roles.roles.end()) throw ParseError("column '" + name + "' missing from role map", 1, column);
    data.columns.push_back({name, it->second});
  }

  std::vector<double> flat;
  std::size_t row = 1;
  std::size_t n_rows = 0;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = detail::split_commas(line);
    if (cells.size() != data.columns.size())
      throw ParseError("ragged row: expected " + std::to_string(data.columns.size()) + " cells, got " +
                           std::to_string(cells.size()),
                       row, std::min(cells.size(), data.columns.size()) + 1);
    for (std::size_t j = 0; j < cells.size(); ++j) {
      double value = 0.0;
      if (!detail::parse_double(cells[j], value) || !std::isfinite(value))
        throw ParseError("non-numeric cell '" + std::string(cells[j]) + "'", row, j + 1);
      flat.push_back(value);
    }
    ++n_rows;
  }
  const auto width = static_cast<Eigen::Index>(data.columns.size());
  data.values = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      flat.data(), static_cast<Eigen::Index>(n_rows), width);
  data.validate();
  return data;
}

inline Dataset load_csv(const std::string& path, const RoleMap& roles) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'");
  return read_csv(in, roles);
}

inline Dataset load_csv(const std::string& path, const std::string& role_map_path) {
  return load_csv(path, load_role_map(role_map_path));
}

/// Sequential block split: the first ceil(fraction * T) rows train, the rest test.
inline std::pair<Dataset, Dataset> split_sequential(const Dataset& data, double train_fraction) {
  detail::require(train_fraction > 0.0 && train_fraction < 1.0, "train_fraction must lie in (0, 1)");
  const std::size_t total = data.rows();
  const auto n_train = static_cast<std::size_t>(std::ceil(train_fraction * static_cast<double>(total) - 1e-9));
  if (n_train < 2 || total - n_train < 2)
    throw ArgumentError("split leaves a block with fewer than 2 rows");
  return {data.slice(0, n_train), data.slice(n_train, total - n_train)};
}

}  // namespace advreg
