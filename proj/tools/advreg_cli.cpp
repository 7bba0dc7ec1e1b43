// advreg: simulate, train, calibrate, attack, defend and report from the command line.

#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "advreg/pipeline.hpp"

namespace {

enum ExitCode { kOk = 0, kConfig = 2, kDependency = 3, kSolverLimit = 4, kNumerical = 5 };

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<std::size_t> budget;
  std::optional<double> gamma;
  std::string family;
  std::string thresholds = "thresholds.json";
};

advreg::ExperimentConfig resolve(const Overrides& o) {
  advreg::ExperimentConfig cfg = o.config.empty() ? advreg::ExperimentConfig{} : advreg::load_experiment(o.config);
  if (o.seed) cfg.seed = *o.seed;
  if (!o.out.empty()) cfg.output_dir = o.out;
  if (o.budget) cfg.budget = *o.budget;
  if (o.gamma) cfg.defense.gamma = *o.gamma;
  if (!o.family.empty()) cfg.family = advreg::family_from_string(o.family);
  return cfg;
}

int run(const std::string& command, const Overrides& o) {
  const advreg::Pipeline p(resolve(o));
  if (command == "simulate") p.simulate();
  if (command == "train") p.train();
  if (command == "calibrate") p.calibrate();
  if (command == "attack") p.attack(o.thresholds);
  if (command == "defend") p.defend();
  if (command == "report") p.report();
  if (command == "all") {
    p.simulate();
    p.train();
    p.calibrate();
    p.attack();
    p.defend();
    p.report();
  }
  std::cout << command << ": wrote " << p.dir().string() << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Attack and defense experiments on regression-based anomaly detectors"};
  app.require_subcommand(1, 1);
  Overrides o;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "Experiment config (JSON)")->check(CLI::ExistingFile);
    sub->add_option("--seed", o.seed, "Seed for every stochastic stage");
    sub->add_option("--out", o.out, "Output directory");
  };

  for (const char* name : {"simulate", "train", "calibrate", "attack", "defend", "report", "all"}) {
    auto* sub = app.add_subcommand(name);
    common(sub);
    const std::string n = name;
    if (n == "train" || n == "all") sub->add_option("--family", o.family, "linear, neural or ensemble");
    if (n == "attack" || n == "defend" || n == "all") sub->add_option("--budget", o.budget, "Attack budget B");
    if (n == "defend" || n == "all") sub->add_option("--gamma", o.gamma, "False-alarm slack")->check(CLI::NonNegativeNumber);
    if (n == "attack") sub->add_option("--thresholds", o.thresholds, "Threshold file in the output directory");
  }
  app.get_subcommand("simulate")->description("Write data.csv and roles.json");
  app.get_subcommand("train")->description("Fit one detector per critical sensor; write models/ and mse.csv");
  app.get_subcommand("calibrate")->description("Write baseline thresholds.json for the target false-alarm period");
  app.get_subcommand("attack")->description("Write attack.json, attack_trajectory.csv and attack_sweep.csv");
  app.get_subcommand("defend")->description("Write defense.json, defense_trace.csv and thresholds_resilient.json");
  app.get_subcommand("report")->description("Collate report.json and summary.csv");
  app.get_subcommand("all")->description("Run every stage in order");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    return run(command, o);
  } catch (const advreg::DependencyError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kDependency;
  } catch (const advreg::SolverLimitError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kSolverLimit;
  } catch (const advreg::InstabilityError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kNumerical;
  } catch (const advreg::TrainingDiverged& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kConfig;
  }
}
