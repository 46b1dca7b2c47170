// Command-line front end: SER grid generation, model training, experiment
// runs, report aggregation and dataset logging.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "whatif/config.hpp"
#include "whatif/errors.hpp"
#include "whatif/experiment.hpp"
#include "whatif/numfmt.hpp"
#include "whatif/phy_sim.hpp"
#include "whatif/quantile_net.hpp"
#include "whatif/report.hpp"

namespace {

using namespace whatif;
using namespace whatif::harness;

struct ConfigFlags {
  std::string path;
  std::map<std::string, std::string> overrides;
};

void add_config_flags(CLI::App* cmd, ConfigFlags& f) {
  cmd->add_option("-c,--config", f.path, "key = value experiment file")->check(CLI::ExistingFile);
  for (const auto& key : config_keys()) cmd->add_option("--" + key, f.overrides[key], "override " + key);
}

ExperimentConfig resolve(const ConfigFlags& f) {
  ExperimentConfig cfg = f.path.empty() ? ExperimentConfig{} : load_config(f.path);
  for (const auto& [key, value] : f.overrides)
    if (!value.empty()) apply_config_entry(cfg, key, value);
  cfg.validate();
  return cfg;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Counterfactual KPI prediction sets for wireless what-if analysis"};
  app.require_subcommand(1);

  auto* ser = app.add_subcommand("ser-table", "build and save the PHY symbol-error-rate grid");
  int n_mc = 10000;
  std::uint64_t ser_seed = 2024;
  std::string ser_out = "ser_table.csv";
  ser->add_option("--n_mc", n_mc, "symbols per grid cell")->capture_default_str();
  ser->add_option("--seed", ser_seed, "grid seed")->capture_default_str();
  ser->add_option("-o,--out", ser_out, "output CSV")->capture_default_str();

  auto* train = app.add_subcommand("train", "fit a quantile model on target-app data and checkpoint it");
  ConfigFlags train_flags;
  std::string model_out = "model.txt";
  add_config_flags(train, train_flags);
  train->add_option("-o,--out", model_out, "checkpoint path")->capture_default_str();

  auto* run = app.add_subcommand("run", "run an experiment and write its reports");
  ConfigFlags run_flags;
  std::string run_out = "report";
  bool quiet = false;
  add_config_flags(run, run_flags);
  run->add_option("-o,--out", run_out, "report directory")->capture_default_str();
  run->add_flag("-q,--quiet", quiet, "no progress or summary on stderr");

  auto* report = app.add_subcommand("report", "aggregate per-trial CSVs into box-plot statistics");
  std::vector<std::string> report_in;
  std::string report_out = "aggregate.csv";
  report->add_option("inputs", report_in, "per-trial CSV files")->required()->check(CLI::ExistingFile);
  report->add_option("-o,--out", report_out, "aggregate CSV")->capture_default_str();

  auto* log = app.add_subcommand("log", "simulate a logged dataset under the logging policy");
  ConfigFlags log_flags;
  std::size_t log_n = 1000;
  std::string log_out = "dataset.csv";
  add_config_flags(log, log_flags);
  log->add_option("-n,--samples", log_n, "number of logged samples")->capture_default_str();
  log->add_option("-o,--out", log_out, "dataset CSV")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (ser->parsed()) {
      const auto table = phy::SerTable::build(n_mc, ser_seed);
      auto out = open_out(ser_out);
      table.save_csv(out);
    } else if (train->parsed()) {
      const auto cfg = resolve(train_flags);
      const auto env = make_environment(cfg);
      if (env->fixed_predictor(env->parse_app(cfg.target_app.empty() ? env->app_names().back() : cfg.target_app)))
        std::cerr << "note: this environment evaluates with its analytic predictor; the checkpoint is unused by run\n";
      Rng rng = training_stream(cfg.base_seed, 0);
      const auto model = train_model(*env, cfg, rng);
      auto out = open_out(model_out);
      qnet::save_checkpoint(model, out);
    } else if (run->parsed()) {
      const auto cfg = resolve(run_flags);
      const auto env = make_environment(cfg);
      const ProgressFn progress = [&](std::size_t done, std::size_t total) {
        if (!quiet && (done % 10 == 0 || done == total)) std::cerr << "\rtrial " << done << '/' << total << std::flush;
      };
      const auto rep = run_experiment(cfg, *env, progress);
      if (!quiet) std::cerr << '\n';
      emit_report(rep, run_out);
      if (!quiet)
        for (auto m : cfg.methods) {
          const auto name = method_name(m);
          std::cerr << name << ": mean coverage " << format_double(rep.mean_coverage(name))
                    << ", mean inefficiency " << format_double(rep.mean_inefficiency(name)) << '\n';
        }
    } else if (report->parsed()) {
      std::vector<TrialRow> rows;
      for (const auto& path : report_in) {
        std::ifstream in(path);
        if (!in) throw IoError("cannot open '" + path + "'");
        auto part = read_trial_csv(in);
        rows.insert(rows.end(), part.begin(), part.end());
      }
      auto out = open_out(report_out);
      write_aggregate_csv(aggregate(rows), out);
    } else if (log->parsed()) {
      const auto cfg = resolve(log_flags);
      const auto env = make_environment(cfg);
      Rng rng(cfg.base_seed);
      const auto data = log_dataset(*env, log_n, rng);
      auto out = open_out(log_out);
      write_dataset_csv(*env, data, out);
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "whatif: %s\n", e.what());
    return 1;
  }
  return 0;
}
