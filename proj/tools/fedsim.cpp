#include <cstdint>
#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "fedsim/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Federated averaging simulator for non-IID partitions"};
  app.require_subcommand(1);

  std::string config, grid, out_dir = "out";
  std::size_t jobs = 1;
  std::uint64_t seed = 0;
  bool corrupt = false;

  auto* run = app.add_subcommand("run", "Run one experiment configuration");
  run->add_option("--config", config, "Experiment config (JSON)")->required();
  run->add_option("--out", out_dir, "Output directory")->capture_default_str();
  run->add_option("--jobs", jobs, "Worker threads")->capture_default_str();

  auto* gridcmd = app.add_subcommand("grid", "Grid search over config fields");
  gridcmd->add_option("--config", config, "Base experiment config (JSON)")->required();
  gridcmd->add_option("--grid", grid, "Grid file (JSON)")->required();
  gridcmd->add_option("--out", out_dir, "Output directory")->capture_default_str();
  gridcmd->add_option("--jobs", jobs, "Worker threads")->capture_default_str();

  auto* check = app.add_subcommand("check", "Run the built-in verification suite");
  check->add_option("--seed", seed, "Seed for randomized checks")->capture_default_str();
  check->add_flag("--debug-corrupt-gradient", corrupt,
                  "Inject a gradient fault (the gradient check must fail)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : fedsim::kExitConfigError;
  }

  if (jobs < 1) jobs = 1;
  if (*run) return fedsim::cmd_run(config, out_dir, jobs, std::cout, std::cerr);
  if (*gridcmd) return fedsim::cmd_grid(config, grid, out_dir, jobs, std::cout, std::cerr);
  return fedsim::cmd_check(seed, corrupt, std::cout);
}
