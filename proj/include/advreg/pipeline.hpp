#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "advreg/attack.hpp"
#include "advreg/core.hpp"
#include "advreg/defense.hpp"
#include "advreg/detector.hpp"
#include "advreg/models.hpp"
#include "advreg/plant.hpp"

namespace advreg {

inline constexpr const char* kExperimentFormat = "advreg-experiment/1";

struct PlantSource {
  std::string templ = "desk";  // desk, paper_scale, custom
  std::size_t steps = 2000;
  // custom shape
  std::size_t n_sensors = 8;
  std::size_t n_controls = 2;
  std::size_t n_critical = 2;
  std::vector<SensorId> nonlinear_channels = {1};
  double timestep = 36.0;
  // external data instead of simulation
  std::string csv;
  std::string role_map;
};

struct ExperimentConfig {
  std::uint64_t seed = 1;
  std::string output_dir = "advreg_run";
  PlantSource plant;
  ModelFamily family = ModelFamily::Linear;
  TrainConfig train;
  double train_fraction = 0.7;
  double target_period_seconds = 3600.0;
  std::size_t budget = 3;
  std::vector<std::size_t> budget_sweep = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15};
  std::optional<double> eta;
  Direction direction = Direction::Minimize;
  std::size_t attack_horizon = 5;
  std::optional<Alg1Config> alg1;  // unset: scaled to the clean data
  DefenseConfig defense;
  std::optional<double> defense_epsilon;  // unset: a quarter of the mean baseline threshold

  void validate() const {
    detail::require(plant.steps >= 4, "plant.steps must be at least 4");
    detail::require(plant.templ == "desk" || plant.templ == "paper_scale" || plant.templ == "custom",
                    "plant.template must be desk, paper_scale or custom");
    detail::require(plant.csv.empty() == plant.role_map.empty(), "plant.csv and plant.role_map go together");
    detail::require(train_fraction > 0 && train_fraction < 1, "train_fraction must lie in (0, 1)");
    detail::require(target_period_seconds > 0, "target_period_seconds must be positive");
    detail::require(attack_horizon >= 1, "attack.horizon must be positive");
    detail::require(!eta || *eta >= 0, "attack.eta must be nonnegative");
    train.validate();
    if (alg1) alg1->validate();
    defense.validate();
  }
};

namespace detail {

template <typename T>
void read_if(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key) && !j[key].is_null()) out = j[key].get<T>();
}

inline const nlohmann::json& section(const nlohmann::json& j, const char* key) {
  static const nlohmann::json empty = nlohmann::json::object();
  if (!j.contains(key)) return empty;
  if (!j[key].is_object()) throw ParseError(std::string("config section '") + key + "' must be an object");
  return j[key];
}

}  // namespace detail

inline ExperimentConfig experiment_from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  try {
    if (!j.is_object()) throw ParseError("experiment config must be a JSON object");
    if (j.contains("format_version") && j["format_version"] != kExperimentFormat)
      throw ParseError("unsupported config format " + j["format_version"].dump());
    detail::read_if(j, "seed", c.seed);
    detail::read_if(j, "output_dir", c.output_dir);
    if (j.contains("model_family")) c.family = family_from_string(j["model_family"].get<std::string>());

    const auto& p = detail::section(j, "plant");
    detail::read_if(p, "template", c.plant.templ);
    detail::read_if(p, "steps", c.plant.steps);
    detail::read_if(p, "n_sensors", c.plant.n_sensors);
    detail::read_if(p, "n_controls", c.plant.n_controls);
    detail::read_if(p, "n_critical", c.plant.n_critical);
    detail::read_if(p, "nonlinear_channels", c.plant.nonlinear_channels);
    detail::read_if(p, "timestep", c.plant.timestep);
    detail::read_if(p, "csv", c.plant.csv);
    detail::read_if(p, "role_map", c.plant.role_map);

    const auto& t = detail::section(j, "train");
    detail::read_if(t, "epochs", c.train.epochs);
    detail::read_if(t, "learning_rate", c.train.learning_rate);
    detail::read_if(t, "hidden_layers", c.train.hidden_layers);
    detail::read_if(t, "train_fraction", c.train_fraction);

    const auto& cal = detail::section(j, "calibration");
    detail::read_if(cal, "target_period_seconds", c.target_period_seconds);

    const auto& a = detail::section(j, "attack");
    detail::read_if(a, "budget", c.budget);
    detail::read_if(a, "budget_sweep", c.budget_sweep);
    if (a.contains("eta") && !a["eta"].is_null()) c.eta = a["eta"].get<double>();
    if (a.contains("direction")) c.direction = direction_from_string(a["direction"].get<std::string>());
    detail::read_if(a, "horizon", c.attack_horizon);
    if (a.contains("alg1")) {
      Alg1Config alg;
      const auto& g = a["alg1"];
      detail::read_if(g, "epsilon0", alg.epsilon0);
      alg.epsilon_min = alg.epsilon0 / 1024.0;
      detail::read_if(g, "epsilon_min", alg.epsilon_min);
      detail::read_if(g, "n_max", alg.n_max);
      detail::read_if(g, "big_m", alg.big_m);
      detail::read_if(g, "margin", alg.margin);
      c.alg1 = alg;
    }

    const auto& d = detail::section(j, "defense");
    detail::read_if(d, "gamma", c.defense.gamma);
    if (d.contains("epsilon") && !d["epsilon"].is_null()) c.defense_epsilon = d["epsilon"].get<double>();
    detail::read_if(d, "n_max", c.defense.n_max);
    detail::read_if(d, "horizon", c.defense.horizon);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("invalid experiment config: ") + e.what());
  }
  return c;
}

inline ExperimentConfig load_experiment(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ArgumentError("cannot open config '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("config '" + path + "' is not valid JSON: " + e.what());
  }
  return experiment_from_json(j);
}

/// Stages of the experiment. Each reads its inputs from the output directory
/// and writes its artifacts there, so any stage can be rerun on its own.
class Pipeline {
 public:
  explicit Pipeline(ExperimentConfig config) : cfg_(std::move(config)), dir_(cfg_.output_dir) { cfg_.validate(); }

  const std::filesystem::path& dir() const { return dir_; }

  /// data.csv and roles.json.
  void simulate() const {
    std::filesystem::create_directories(dir_);
    Dataset data;
    if (!cfg_.plant.csv.empty()) {
      data = load_csv(cfg_.plant.csv, cfg_.plant.role_map);
    } else {
      data = advreg::simulate(plant_config(), cfg_.plant.steps);
    }
    write_csv(data, (dir_ / "data.csv").string());
    write_json(dir_ / "roles.json", role_map_json(data));
  }

  /// models/bank.json, models/<sensor>.json and mse.csv.
  void train() const {
    const Dataset data = load_data();
    const auto [train_part, test_part] = split_sequential(data, cfg_.train_fraction);
    TrainConfig tc = cfg_.train;
    tc.seed = cfg_.seed;
    const TrainedBank trained = train_bank(train_part, cfg_.family, tc);

    std::filesystem::create_directories(dir_ / "models");
    const auto names = data.names();
    nlohmann::json index = {{"format_version", "advreg-bank/1"},
                            {"family", to_string(cfg_.family)},
                            {"detectors", nlohmann::json::array()},
                            {"target_scale", nlohmann::json::object()}};
    for (const auto& d : trained.bank.detectors) {
      index["detectors"].push_back(names[d.sensor]);
      index["target_scale"][names[d.sensor]] = trained.target_scale.at(d.sensor);
      write_json(dir_ / "models" / (names[d.sensor] + ".json"), to_json(d, names));
    }
    write_json(dir_ / "models" / "bank.json", index);

    const auto train_mse = detector_mse(trained, train_part);
    const auto test_mse = detector_mse(trained, test_part);
    std::ostringstream csv;
    csv << "sensor,family,train_nmse,test_nmse\n";
    for (const auto& d : trained.bank.detectors)
      csv << names[d.sensor] << ',' << to_string(cfg_.family) << ',' << detail::format_double(train_mse.at(d.sensor))
          << ',' << detail::format_double(test_mse.at(d.sensor)) << '\n';
    write_text(dir_ / "mse.csv", csv.str());
  }

  /// thresholds.json: per-detector alarm budget so the bank raises one false
  /// alarm per target period on the held-out clean block.
  void calibrate() const {
    const Dataset data = load_data();
    const PredictorBank bank = load_bank(data);
    const Dataset clean = holdout(data);
    const double period_steps = cfg_.target_period_seconds / data.timestep;
    const auto tau = calibrate_baseline(fp_curve(bank, clean), period_steps, bank.detectors.size());
    write_json(dir_ / "thresholds.json", to_json(tau, data.names()));
  }

  /// attack.json, attack_trajectory.csv and attack_sweep.csv. `thresholds`
  /// names a file in the output directory.
  void attack(const std::string& thresholds = "thresholds.json") const {
    const Dataset data = load_data();
    const PredictorBank bank = load_bank(data);
    const ThresholdConfig tau = load_thresholds(data, thresholds);
    const Dataset clean = holdout(data);
    const auto names = data.names();
    const Alg1Config alg1 = alg1_for(clean);
    const std::size_t horizon = std::min(cfg_.attack_horizon, clean.rows());
    const AttackInstance base = instance(clean, cfg_.budget);

    std::ostringstream trajectory;
    trajectory << "t,target,objective,clean,n_attacked,feasible\n";
    nlohmann::json first;
    for (std::size_t t = 0; t < horizon; ++t) {
      AttackInstance inst = base;
      inst.y = clean.values.row(static_cast<Eigen::Index>(t)).transpose();
      const AttackResult r = run_attack(bank, tau, inst, alg1, t);
      if (t == 0) first = to_json(r, inst, names);
      trajectory << t << ',' << names[r.target] << ',' << detail::format_double(r.objective) << ','
                 << detail::format_double(inst.y(static_cast<Eigen::Index>(r.target))) << ',' << r.n_attacked()
                 << ',' << (r.feasible ? 1 : 0) << '\n';
    }
    write_text(dir_ / "attack_trajectory.csv", trajectory.str());

    const ImpactReport report = impact(bank, tau, clean, base, alg1, horizon);
    nlohmann::json per_sensor = nlohmann::json::object();
    for (const auto& [s, v] : report.per_sensor) per_sensor[names[s]] = v;
    write_json(dir_ / "attack.json", {{"thresholds", thresholds},
                                      {"budget", base.budget},
                                      {"horizon", horizon},
                                      {"impact", per_sensor},
                                      {"worst_sensor", names[report.worst_sensor]},
                                      {"worst_impact", report.worst},
                                      {"first_row", first}});

    std::ostringstream sweep;
    sweep << "budget,sensor,impact\n";
    for (std::size_t b : cfg_.budget_sweep) {
      if (b > base.attackable.size()) continue;
      AttackInstance inst = base;
      inst.budget = b;
      const ImpactReport rb = impact(bank, tau, clean, inst, alg1, horizon);
      for (const auto& [s, v] : rb.per_sensor) sweep << b << ',' << names[s] << ',' << detail::format_double(v) << '\n';
    }
    write_text(dir_ / "attack_sweep.csv", sweep.str());
  }

  /// defense.json, defense_trace.csv and thresholds_resilient.json.
  void defend() const {
    const Dataset data = load_data();
    const PredictorBank bank = load_bank(data);
    const ThresholdConfig tau = load_thresholds(data, "thresholds.json");
    const Dataset clean = holdout(data);
    const auto names = data.names();

    DefenseConfig dc = cfg_.defense;
    dc.alg1 = alg1_for(clean);
    if (dc.horizon == 0) dc.horizon = std::min(cfg_.attack_horizon, clean.rows());
    if (cfg_.defense_epsilon) {
      dc.epsilon = *cfg_.defense_epsilon;
    } else {
      double total = 0.0;
      for (const auto& [s, v] : tau.tau) total += v;
      const double mean = total / static_cast<double>(tau.tau.size());
      if (mean > 0) dc.epsilon = 0.25 * mean;
    }
    const AttackInstance base = instance(clean, cfg_.budget);
    const DefenseResult result = resilient_thresholds(bank, tau, fp_curve(bank, clean), clean, clean, base, dc);
    nlohmann::json doc = to_json(result, names);
    doc["gamma"] = dc.gamma;
    doc["budget"] = base.budget;
    write_json(dir_ / "defense.json", doc);
    std::ostringstream trace;
    write_trace_csv(trace, result);
    write_text(dir_ / "defense_trace.csv", trace.str());
    write_json(dir_ / "thresholds_resilient.json", to_json(result.tau, names));
  }

  /// report.json and summary.csv collated from the other stages.
  void report() const {
    const auto mse_text = read_text(dir_ / "mse.csv");
    const nlohmann::json attack_doc = read_json(dir_ / "attack.json");
    const nlohmann::json defense_doc = read_json(dir_ / "defense.json");

    nlohmann::json mse = nlohmann::json::object();
    std::istringstream lines(mse_text);
    std::string line;
    std::getline(lines, line);
    while (std::getline(lines, line)) {
      std::vector<std::string> cells;
      std::stringstream ss(line);
      for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
      if (cells.size() != 4) throw ParseError("malformed mse.csv line '" + line + "'");
      double value = 0.0;
      if (!detail::parse_double(cells[3], value)) throw ParseError("malformed mse.csv value '" + cells[3] + "'");
      mse[cells[0]] = value;
    }
    const nlohmann::json doc = {{"test_nmse", mse},
                                {"attack", {{"budget", attack_doc.at("budget")},
                                            {"impact", attack_doc.at("impact")},
                                            {"worst_impact", attack_doc.at("worst_impact")}}},
                                {"defense", {{"improved", defense_doc.at("improved")},
                                             {"baseline", defense_doc.at("baseline")},
                                             {"final", defense_doc.at("final")}}}};
    write_json(dir_ / "report.json", doc);

    std::ostringstream csv;
    csv << "metric,value\n";
    for (const auto& [name, value] : mse.items()) csv << "test_nmse." << name << ',' << value.dump() << '\n';
    csv << "attack.worst_impact," << attack_doc.at("worst_impact").dump() << '\n';
    csv << "defense.baseline_worst_impact," << defense_doc["baseline"]["worst_impact"].dump() << '\n';
    csv << "defense.final_worst_impact," << defense_doc["final"]["worst_impact"].dump() << '\n';
    csv << "defense.baseline_false_alarms," << defense_doc["baseline"]["false_alarms"].dump() << '\n';
    csv << "defense.final_false_alarms," << defense_doc["final"]["false_alarms"].dump() << '\n';
    write_text(dir_ / "summary.csv", csv.str());
  }

  PlantConfig plant_config() const {
    const auto& p = cfg_.plant;
    if (p.templ == "desk") return desk_template(cfg_.seed);
    if (p.templ == "paper_scale") return paper_scale_template(cfg_.seed);
    return make_plant_template(p.n_sensors, p.n_controls, p.n_critical, p.nonlinear_channels, p.timestep, cfg_.seed);
  }

  Dataset load_data() const {
    require_file(dir_ / "data.csv");
    require_file(dir_ / "roles.json");
    return load_csv((dir_ / "data.csv").string(), (dir_ / "roles.json").string());
  }

  Dataset holdout(const Dataset& data) const { return split_sequential(data, cfg_.train_fraction).second; }

  PredictorBank load_bank(const Dataset& data) const {
    const auto names = data.names();
    const nlohmann::json index = read_json(dir_ / "models" / "bank.json");
    PredictorBank bank;
    bank.column_names = names;
    try {
      for (const auto& name : index.at("detectors"))
        bank.detectors.push_back(
            detector_from_json(read_json(dir_ / "models" / (name.get<std::string>() + ".json")), names));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("malformed models/bank.json: ") + e.what());
    }
    bank.validate();
    return bank;
  }

  ThresholdConfig load_thresholds(const Dataset& data, const std::string& file) const {
    return thresholds_from_json(read_json(dir_ / file), data.names());
  }

 private:
  AttackInstance instance(const Dataset& clean, std::size_t budget) const {
    AttackInstance inst = make_instance(clean, budget, cfg_.direction);
    if (cfg_.eta) inst.eta = Vector::Constant(static_cast<Eigen::Index>(clean.cols()), *cfg_.eta);
    return inst;
  }

  Alg1Config alg1_for(const Dataset& clean) const { return cfg_.alg1 ? *cfg_.alg1 : default_alg1(clean); }

  static AttackResult run_attack(const PredictorBank& bank, const ThresholdConfig& tau, const AttackInstance& inst,
                                 const Alg1Config& alg1, std::size_t t) {
    const AttackResult r = advreg::attack(bank, tau, inst, alg1);
    if (!r.optimal) throw SolverLimitError("attack solver hit its node limit at row " + std::to_string(t));
    return r;
  }

  static void require_file(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path))
      throw DependencyError("missing artifact '" + path.string() + "'; run the earlier stage first");
  }

  static std::string read_text(const std::filesystem::path& path) {
    require_file(path);
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }

  static nlohmann::json read_json(const std::filesystem::path& path) {
    const std::string text = read_text(path);
    try {
      return nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("'" + path.string() + "' is not valid JSON: " + e.what());
    }
  }

  static void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write '" + path.string() + "'");
    out << text;
  }

  static void write_json(const std::filesystem::path& path, const nlohmann::json& doc) {
    write_text(path, doc.dump(2) + "\n");
  }

  ExperimentConfig cfg_;
  std::filesystem::path dir_;
};

}  // namespace advreg
