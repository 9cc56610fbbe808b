#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dfgmvi/baselines.hpp"
#include "dfgmvi/navier_stokes.hpp"
#include "dfgmvi/problems.hpp"
#include "dfgmvi/solver.hpp"

namespace dfgmvi {

/// Configuration errors are reported before any artifact is written.
class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct MethodSpec {
  std::string name;  // dfgmvi | ngf | ngf-d | wgf | bbvi | mcmc
  SolverConfig solver;           // dfgmvi
  BaselineRunConfig baseline;    // flow baselines
  McmcConfig mcmc;               // mcmc
  double kde_bandwidth_mult = 1.0;
};

struct NsSettings {
  ns::NSConfig config;
  std::uint64_t truth_seed = 7;
  std::uint64_t noise_seed = 101;
  bool paper_scale = false;
};

struct ExperimentConfig {
  int version = 1;
  std::string problem_id;
  std::vector<std::uint64_t> seeds{0};
  int threads = 0;  // 0 = default_thread_count()
  int tv_every = 1;       // 0 disables the per-iteration TV column
  int snapshot_every = 50;
  std::vector<MethodSpec> methods;
  std::optional<NsSettings> ns_settings;
};

/// Parses the strict key-value experiment file; unknown keys or sections are
/// rejected with ConfigError.
ExperimentConfig parse_experiment_config(const std::filesystem::path& path);

struct CliOverrides {
  std::optional<std::filesystem::path> output_dir;
  std::optional<int> threads;
  std::optional<std::uint64_t> seed;
};

/// Runs every method/seed combination and writes trace.csv, mixture
/// snapshots, density.csv and report.json under the output directory.
/// Returns 0; throws ConfigError for configuration problems and
/// std::exception for runtime failures.
void run_experiment(const std::filesystem::path& config_path,
                    const std::filesystem::path& output_dir, const CliOverrides& ov);

/// Hyperparameter sweep on the bimodal-banana 2D target: three
/// finite-difference radii at dt = 0.5 and three step sizes at the default
/// radius, one TV curve each plus a summary file.
void sensitivity_sweep(const std::filesystem::path& config_path,
                       const std::filesystem::path& output_dir, const CliOverrides& ov);

std::vector<std::string> list_problem_ids();

/// Resolves any problem id, including "ns:desk" / "ns:paper" which carry
/// their own synthetic-truth generation.
ForwardProblem resolve_problem(const std::string& id, const std::optional<NsSettings>& ns,
                               int threads);

/// TV between a mixture and a reference grid; mixtures of dimension > 2 are
/// marginalized onto the first two coordinates.
double mixture_tv(const GaussianMixture& mix, const GridDensity& reference);

}  // namespace dfgmvi
