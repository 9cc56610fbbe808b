#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "dfgmvi/experiment.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Gaussian-mixture variational inference experiment runner"};
  app.require_subcommand(1);

  std::string config_file;
  std::string output_dir = "out";
  int threads = 0;
  std::int64_t seed = -1;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("config", config_file, "experiment config file")->required();
    cmd->add_option("--output-dir", output_dir, "artifact directory");
    cmd->add_option("--threads", threads, "worker threads (0 = auto)");
    cmd->add_option("--seed", seed, "override the config's seed list with one seed");
  };

  CLI::App* cmd_run = app.add_subcommand("run", "run the configured experiment");
  add_common(cmd_run);
  CLI::App* cmd_sweep =
      app.add_subcommand("sweep", "step-size / stencil-radius sensitivity sweep");
  add_common(cmd_sweep);
  CLI::App* cmd_list = app.add_subcommand("list-problems", "print the problem catalog");

  CLI11_PARSE(app, argc, argv);

  if (cmd_list->parsed()) {
    for (const auto& id : dfgmvi::list_problem_ids()) std::cout << id << "\n";
    return 0;
  }

  dfgmvi::CliOverrides ov;
  if (threads > 0) ov.threads = threads;
  if (seed >= 0) ov.seed = static_cast<std::uint64_t>(seed);

  try {
    if (cmd_run->parsed()) {
      dfgmvi::run_experiment(config_file, output_dir, ov);
    } else {
      dfgmvi::sensitivity_sweep(config_file, output_dir, ov);
    }
  } catch (const dfgmvi::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    std::error_code ec;
    std::filesystem::create_directories(output_dir, ec);
    if (!ec) {
      std::ofstream diag(std::filesystem::path(output_dir) / "error.txt");
      diag << e.what() << "\n";
    }
    return 2;
  }
  return 0;
}
