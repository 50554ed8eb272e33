#include "hetsgd/runner.hpp"

#include "CLI11.hpp"

#include <fstream>
#include <iostream>
#include <stdexcept>
#include <string>
#include <vector>

int main(int argc, char** argv) {
  CLI::App app{"Deterministic simulator for distributed SGD on heterogeneous clusters"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_path;
  std::vector<std::string> config_paths;

  auto* run_cmd = app.add_subcommand(
      "run", "Run one experiment; write the trajectory CSV and print the summary");
  run_cmd->add_option("--config", config_path, "experiment config file")->required();
  run_cmd->add_option("--out", out_path, "trajectory CSV output path")->required();

  auto* compare_cmd = app.add_subcommand(
      "compare", "Run several configs on the shared dataset and tabulate speedups");
  compare_cmd->add_option("--configs", config_paths, "experiment config files")->required();
  compare_cmd->add_option("--out", out_path, "comparison table output path")->required();

  auto* verify_cmd = app.add_subcommand(
      "verify-theory", "Check the closed-form bound consistency grid (no simulation)");
  verify_cmd->add_option("--config", config_path, "experiment config file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (run_cmd->parsed()) {
      const auto cfg = hetsgd::load_config(config_path);
      const auto result = hetsgd::run_experiment(cfg);
      hetsgd::emit_csv(result.records, result.workers, out_path);
      std::cout << hetsgd::format_summary(result.summary);
    } else if (compare_cmd->parsed()) {
      std::vector<hetsgd::ExperimentConfig> cfgs;
      cfgs.reserve(config_paths.size());
      for (const auto& path : config_paths) cfgs.push_back(hetsgd::load_config(path));
      const auto result = hetsgd::compare_policies(cfgs);
      std::ofstream out(out_path);
      if (!out) throw std::runtime_error("compare: cannot open '" + out_path + "' for writing");
      out << result.table;
      if (!out.good()) throw std::runtime_error("compare: write failed for '" + out_path + "'");
      for (std::size_t i = 0; i < result.runs.size(); ++i) {
        const auto& member = result.runs[i];
        hetsgd::emit_csv(member.records, member.workers,
                         out_path + "." + std::to_string(i + 1) + "." + member.summary.policy +
                             ".csv");
      }
      std::cout << result.table;
    } else {
      const auto cfg = hetsgd::load_config(config_path);
      const auto report = hetsgd::theory_grid_report(cfg);
      std::cout << report.text;
      if (!report.ok) return 1;
    }
  } catch (const std::exception& e) {
    std::string msg = e.what();
    for (char& ch : msg)
      if (ch == '\n') ch = ' ';
    std::cerr << "error: " << msg << std::endl;
    return 1;
  }
  return 0;
}
