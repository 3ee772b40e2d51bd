#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "rsd/cli.hpp"

int main(int argc, char** argv) {
  rsd::cli::Options opts;
  opts.log = rsd::cli::parse_log_level(std::getenv("RSD_LOG"));

  CLI::App app{"Redundant sensor analysis and design for Kalman filtering networks"};
  app.set_version_flag("--version", std::string(RSD_VERSION));
  app.require_subcommand(1);

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("-c,--config", opts.config_path, "JSON configuration file")->required();
    sub->add_option("--out", opts.out, "write the JSON report to this path");
    sub->add_flag("--json", opts.json_stdout, "print the JSON report instead of the summary");
  };

  CLI::App* validate = app.add_subcommand("validate", "check the standing assumptions");
  add_common(validate);

  CLI::App* dare = app.add_subcommand("dare", "steady-state covariances of every network");
  add_common(dare);
  dare->add_option("--method", opts.method, "DARE solver")
      ->check(CLI::IsMember({"fixed", "symplectic", "both"}))
      ->capture_default_str();

  CLI::App* analyze = app.add_subcommand("analyze", "effect of the redundant sensors");
  add_common(analyze);

  CLI::App* design = app.add_subcommand("design", "optimize the redundant sensor rows");
  add_common(design);
  design->add_option("--csv-dir", opts.csv_dir, "directory for gamma_trajectory.csv");

  CLI::App* simulate = app.add_subcommand("simulate", "Monte-Carlo filtering of every network");
  add_common(simulate);
  simulate->add_option("--csv-dir", opts.csv_dir, "directory for trajectory and histogram CSVs");
  simulate->add_option("--steps", opts.steps, "simulation steps")->check(CLI::PositiveNumber);
  simulate->add_option("--trials", opts.trials, "independent trials")->check(CLI::PositiveNumber);
  simulate->add_option("--seed", opts.seed, "random seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? rsd::cli::kOk : rsd::cli::kConfigError;
  }
  opts.command = app.get_subcommands().front()->get_name();
  return rsd::cli::run(opts, std::cout, std::cerr).exit_code;
}
