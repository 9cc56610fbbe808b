#include "dfgmvi/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "dfgmvi/io.hpp"
#include "dfgmvi/metrics.hpp"
#include "dfgmvi/parallel.hpp"

namespace dfgmvi {

namespace {

// ---------------------------------------------------------------- parsing

struct RawConfig {
  // section -> ordered key/value pairs; "" is the global section
  std::vector<std::pair<std::string, std::vector<std::pair<std::string, std::string>>>>
      sections;
};

RawConfig read_raw(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path.string());
  RawConfig raw;
  raw.sections.push_back({"", {}});
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    auto last = line.find_last_not_of(" \t\r");
    std::string body = line.substr(first, last - first + 1);
    if (body.front() == '[') {
      if (body.back() != ']' || body.size() < 3) {
        throw ConfigError("line " + std::to_string(lineno) + ": malformed section");
      }
      raw.sections.push_back({body.substr(1, body.size() - 2), {}});
      continue;
    }
    auto sep = body.find_first_of(" \t=");
    if (sep == std::string::npos) {
      throw ConfigError("line " + std::to_string(lineno) + ": expected 'key value'");
    }
    std::string key = body.substr(0, sep);
    auto vstart = body.find_first_not_of(" \t=", sep);
    if (vstart == std::string::npos) {
      throw ConfigError("line " + std::to_string(lineno) + ": missing value for '" +
                        key + "'");
    }
    raw.sections.back().second.emplace_back(key, body.substr(vstart));
  }
  return raw;
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': cannot parse number '" + v + "'");
  }
}

long parse_int(const std::string& key, const std::string& v) {
  long x = 0;
  auto res = std::from_chars(v.data(), v.data() + v.size(), x);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
    throw ConfigError("key '" + key + "': cannot parse integer '" + v + "'");
  }
  return x;
}

std::vector<std::uint64_t> parse_seed_list(const std::string& v) {
  std::vector<std::uint64_t> seeds;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    seeds.push_back(static_cast<std::uint64_t>(parse_int("seeds", item)));
  }
  if (seeds.empty()) throw ConfigError("seeds: empty list");
  return seeds;
}

QuadratureKind parse_quadrature(const std::string& v) {
  if (v == "meanpoint") return QuadratureKind::MeanPoint;
  if (v == "unscented") return QuadratureKind::Unscented;
  if (v == "montecarlo") return QuadratureKind::MonteCarlo;
  throw ConfigError("unknown quadrature rule '" + v + "'");
}

/// Applies `handler(key, value)`; the handler returns false for keys it does
/// not know, which is a hard error (strict schema).
void consume(const std::string& section,
             const std::vector<std::pair<std::string, std::string>>& kv,
             const std::function<bool(const std::string&, const std::string&)>& handler) {
  for (const auto& [k, v] : kv) {
    if (!handler(k, v)) {
      throw ConfigError("unknown key '" + k + "' in section [" +
                        (section.empty() ? "global" : section) + "]");
    }
  }
}

MethodSpec default_method(const std::string& name) {
  MethodSpec m;
  m.name = name;
  m.solver.K = 40;
  m.solver.n_iters = 200;
  m.baseline.K = 40;
  m.baseline.n_iters = 200;
  m.baseline.dt_policy.adaptive = true;
  return m;
}

}  // namespace

ExperimentConfig parse_experiment_config(const std::filesystem::path& path) {
  RawConfig raw = read_raw(path);
  ExperimentConfig cfg;
  bool have_version = false, have_problem = false;

  static const std::set<std::string> known_sections = {
      "", "dfgmvi", "ngf", "ngf-d", "wgf", "bbvi", "mcmc", "ns"};

  for (const auto& [section, kv] : raw.sections) {
    if (!known_sections.count(section)) {
      throw ConfigError("unknown section [" + section + "]");
    }
    if (section.empty()) {
      consume(section, kv, [&](const std::string& k, const std::string& v) {
        if (k == "version") {
          cfg.version = static_cast<int>(parse_int(k, v));
          if (cfg.version != 1) throw ConfigError("unsupported config version");
          have_version = true;
        } else if (k == "problem") {
          cfg.problem_id = v;
          have_problem = true;
        } else if (k == "seeds") {
          cfg.seeds = parse_seed_list(v);
        } else if (k == "threads") {
          cfg.threads = static_cast<int>(parse_int(k, v));
        } else if (k == "tv_every") {
          cfg.tv_every = static_cast<int>(parse_int(k, v));
        } else if (k == "snapshot_every") {
          cfg.snapshot_every = static_cast<int>(parse_int(k, v));
        } else {
          return false;
        }
        return true;
      });
      continue;
    }
    if (section == "ns") {
      NsSettings ns = cfg.ns_settings.value_or(NsSettings{});
      consume(section, kv, [&](const std::string& k, const std::string& v) {
        if (k == "grid_n") ns.config.grid_n = static_cast<int>(parse_int(k, v));
        else if (k == "kl_modes") ns.config.kl_modes = static_cast<int>(parse_int(k, v));
        else if (k == "obs_nx1") ns.config.obs_nx1 = static_cast<int>(parse_int(k, v));
        else if (k == "obs_nx2") ns.config.obs_nx2 = static_cast<int>(parse_int(k, v));
        else if (k == "noise_std") ns.config.noise_std = parse_double(k, v);
        else if (k == "viscosity") ns.config.viscosity = parse_double(k, v);
        else if (k == "solver_dt") ns.config.solver_dt = parse_double(k, v);
        else if (k == "truth_seed") ns.truth_seed = parse_int(k, v);
        else if (k == "noise_seed") ns.noise_seed = parse_int(k, v);
        else return false;
        return true;
      });
      cfg.ns_settings = ns;
      continue;
    }

    MethodSpec m = default_method(section);
    if (section == "dfgmvi") {
      consume(section, kv, [&](const std::string& k, const std::string& v) {
        if (k == "K") m.solver.K = static_cast<int>(parse_int(k, v));
        else if (k == "dt") m.solver.dt = parse_double(k, v);
        else if (k == "alpha") m.solver.alpha = parse_double(k, v);
        else if (k == "iterations") m.solver.n_iters = static_cast<int>(parse_int(k, v));
        else if (k == "weight_floor") m.solver.weight_floor = parse_double(k, v);
        else return false;
        return true;
      });
    } else if (section == "ngf" || section == "ngf-d") {
      consume(section, kv, [&](const std::string& k, const std::string& v) {
        if (k == "K") m.baseline.K = static_cast<int>(parse_int(k, v));
        else if (k == "iterations") m.baseline.n_iters = static_cast<int>(parse_int(k, v));
        else if (k == "quadrature") {
          m.baseline.quadrature.phi_rule = parse_quadrature(v);
          m.baseline.quadrature.logrho_rule = m.baseline.quadrature.phi_rule;
        } else if (k == "logrho_quadrature") {
          m.baseline.quadrature.logrho_rule = parse_quadrature(v);
        } else if (k == "mc_samples") {
          m.baseline.quadrature.mc_samples = static_cast<int>(parse_int(k, v));
        } else if (k == "dt_policy") {
          if (v == "fixed") m.baseline.dt_policy.adaptive = false;
          else if (v == "adaptive") m.baseline.dt_policy.adaptive = true;
          else throw ConfigError("dt_policy must be fixed or adaptive");
        } else if (k == "dt") m.baseline.dt_policy.dt = parse_double(k, v);
        else if (k == "dt_max") m.baseline.dt_policy.dt_max = parse_double(k, v);
        else if (k == "beta") m.baseline.dt_policy.beta = parse_double(k, v);
        else if (k == "weight_floor") m.baseline.weight_floor = parse_double(k, v);
        else return false;
        return true;
      });
      m.baseline.diagonal = (section == "ngf-d");
    } else if (section == "wgf") {
      consume(section, kv, [&](const std::string& k, const std::string& v) {
        if (k == "K") m.baseline.K = static_cast<int>(parse_int(k, v));
        else if (k == "iterations") m.baseline.n_iters = static_cast<int>(parse_int(k, v));
        else if (k == "dt") m.baseline.wgf_dt = parse_double(k, v);
        else if (k == "weight_floor") m.baseline.weight_floor = parse_double(k, v);
        else return false;
        return true;
      });
    } else if (section == "bbvi") {
      consume(section, kv, [&](const std::string& k, const std::string& v) {
        if (k == "K") m.baseline.K = static_cast<int>(parse_int(k, v));
        else if (k == "iterations") m.baseline.n_iters = static_cast<int>(parse_int(k, v));
        else if (k == "samples") m.baseline.bbvi_samples = static_cast<int>(parse_int(k, v));
        else if (k == "dt_policy") {
          if (v == "fixed") m.baseline.dt_policy.adaptive = false;
          else if (v == "adaptive") m.baseline.dt_policy.adaptive = true;
          else throw ConfigError("dt_policy must be fixed or adaptive");
        } else if (k == "dt") m.baseline.dt_policy.dt = parse_double(k, v);
        else if (k == "dt_max") m.baseline.dt_policy.dt_max = parse_double(k, v);
        else if (k == "beta") m.baseline.dt_policy.beta = parse_double(k, v);
        else if (k == "weight_floor") m.baseline.weight_floor = parse_double(k, v);
        else return false;
        return true;
      });
    } else if (section == "mcmc") {
      consume(section, kv, [&](const std::string& k, const std::string& v) {
        if (k == "walkers") m.mcmc.walkers = static_cast<int>(parse_int(k, v));
        else if (k == "sweeps") m.mcmc.n_sweeps = static_cast<int>(parse_int(k, v));
        else if (k == "stretch_a") m.mcmc.stretch_a = parse_double(k, v);
        else if (k == "keep_last") m.mcmc.keep_last = static_cast<int>(parse_int(k, v));
        else if (k == "kde_bandwidth_mult") m.kde_bandwidth_mult = parse_double(k, v);
        else return false;
        return true;
      });
    }
    cfg.methods.push_back(std::move(m));
  }

  if (!have_version) throw ConfigError("missing required key 'version'");
  if (!have_problem) throw ConfigError("missing required key 'problem'");
  if (cfg.methods.empty()) throw ConfigError("no method section given");
  if (cfg.tv_every < 0 || cfg.snapshot_every < 0) {
    throw ConfigError("tv_every/snapshot_every must be nonnegative");
  }
  return cfg;
}

// ----------------------------------------------------------------- running

namespace {

struct SeedResult {
  std::vector<TraceRow> rows;
  std::map<int, GaussianMixture> snapshots;
  GaussianMixture final_mixture;
  std::optional<GridDensity> final_density;
  long f_evals = 0;
  long diag_f_evals = 0;
  double final_tv = std::numeric_limits<double>::quiet_NaN();
  double wall_s = 0.0;
  int positivity_events = 0;
};

std::vector<GridAxis> density_axes(const ForwardProblem& problem) {
  if (problem.reference) return problem.reference->axes;
  if (problem.n_theta == 1) return {GridAxis{-5.0, 5.0, 2001}};
  return {GridAxis{-4.0, 4.0, 400}, GridAxis{-4.0, 4.0, 400}};
}

GaussianMixture view_2d(const GaussianMixture& mix) {
  if (mix.dim() <= 2) return mix;
  return marginal(mix, {0, 1});
}

SeedResult run_one_seed(const MethodSpec& spec, const ForwardProblem& problem,
                        std::uint64_t seed, int tv_every, int snapshot_every,
                        int threads) {
  SeedResult res;
  auto axes = density_axes(problem);
  const bool have_ref = static_cast<bool>(problem.reference);

  auto tv_of = [&](const GaussianMixture& mix) -> double {
    return tv_distance(grid_density(view_2d(mix), axes), *problem.reference);
  };

  auto t0 = std::chrono::steady_clock::now();
  if (spec.name == "mcmc") {
    McmcConfig mc = spec.mcmc;
    mc.rng_seed = seed;
    McmcTrace trace = run_mcmc(problem, mc);
    res.f_evals = trace.phi_eval_count;
    GridDensity dens = kde(trace.kept_particles, axes, spec.kde_bandwidth_mult);
    if (have_ref) res.final_tv = tv_distance(dens, *problem.reference);
    res.final_density = std::move(dens);
    TraceRow row;
    row.iteration = mc.n_sweeps;
    row.weights = Vector();
    if (have_ref) row.tv = res.final_tv;
    res.rows.push_back(row);
  } else if (spec.name == "dfgmvi") {
    SolverConfig sc = spec.solver;
    sc.rng_seed = seed;
    sc.threads = threads;
    sc.snapshot_every = snapshot_every;
    SolverTrace trace = run(problem, sc);
    res.snapshots = std::move(trace.snapshots);
    res.final_mixture = trace.final_mixture;
    res.f_evals = trace.f_eval_count;
    res.diag_f_evals = trace.diag_f_eval_count;
    for (int i = 0; i < static_cast<int>(trace.weights_history.size()); ++i) {
      TraceRow row;
      row.iteration = i;
      row.weights = trace.weights_history[i];
      if (i < static_cast<int>(trace.residuals.size())) {
        row.grad_residual = trace.residuals[i].max_grad();
        row.hess_residual = trace.residuals[i].max_hess();
        row.spread = trace.residuals[i].spread;
      }
      res.rows.push_back(std::move(row));
    }
    if (have_ref && tv_every > 0) {
      // TV per recorded iteration; recomputed from snapshots when sparse.
      for (auto& row : res.rows) {
        if (row.iteration % tv_every == 0 || row.iteration == sc.n_iters) {
          auto it = res.snapshots.find(row.iteration);
          if (it != res.snapshots.end()) row.tv = tv_of(it->second);
        }
      }
    }
    if (have_ref) {
      res.final_tv = tv_of(trace.final_mixture);
      res.rows.back().tv = res.final_tv;
    }
    res.final_density = grid_density(view_2d(trace.final_mixture), axes);
  } else {
    BaselineRunConfig bc = spec.baseline;
    bc.rng_seed = seed;
    BaselineMethod method = BaselineMethod::NgfVi;
    if (spec.name == "ngf-d") method = BaselineMethod::NgfViDiagonal;
    else if (spec.name == "wgf") method = BaselineMethod::WgfVi;
    else if (spec.name == "bbvi") method = BaselineMethod::Bbvi;
    BaselineTrace trace = run_baseline(method, problem, bc);
    res.final_mixture = trace.final_mixture;
    res.f_evals = trace.phi_eval_count;
    res.positivity_events = trace.positivity_events;
    for (int i = 0; i < static_cast<int>(trace.weights_history.size()); ++i) {
      TraceRow row;
      row.iteration = i;
      row.weights = trace.weights_history[i];
      row.grad_residual = trace.residuals[i].max_grad();
      row.hess_residual = trace.residuals[i].max_hess();
      row.spread = trace.residuals[i].spread;
      res.rows.push_back(std::move(row));
    }
    if (have_ref) {
      res.final_tv = tv_of(trace.final_mixture);
      res.rows.back().tv = res.final_tv;
    }
    res.final_density = grid_density(view_2d(trace.final_mixture), axes);
    res.snapshots.emplace(static_cast<int>(trace.weights_history.size()) - 1,
                          trace.final_mixture);
  }
  auto t1 = std::chrono::steady_clock::now();
  res.wall_s = std::chrono::duration<double>(t1 - t0).count();
  return res;
}

void validate_artifacts(const std::filesystem::path& dir, std::size_t expected_rows) {
  // Light schema validation after writing: the trace parses and has the
  // expected row count, snapshots parse back as mixtures.
  std::ifstream in(dir / "trace.csv", std::ios::binary);
  if (!in) throw std::runtime_error("artifact missing: " + (dir / "trace.csv").string());
  std::string line;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    if (!line.empty()) ++rows;
  }
  if (rows != expected_rows + 1) {
    throw std::runtime_error("trace.csv row count mismatch in " + dir.string());
  }
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.path().extension() == ".json" &&
        entry.path().filename().string().rfind("mixture_", 0) == 0) {
      read_mixture_json(entry.path());
    }
  }
}

std::string seed_dir_name(std::uint64_t seed) { return "seed_" + std::to_string(seed); }

}  // namespace

ForwardProblem resolve_problem(const std::string& id, const std::optional<NsSettings>& ns,
                               int threads) {
  if (id.rfind("ns", 0) == 0 && (id == "ns" || id == "ns:desk" || id == "ns:paper")) {
    NsSettings s = ns.value_or(NsSettings{});
    if (id == "ns:paper") {
      s.config.grid_n = std::max(s.config.grid_n, 128);
      s.config.kl_modes = std::max(s.config.kl_modes, 128);
      s.config.solver_dt = std::min(s.config.solver_dt, 0.0025);
    }
    s.config.validate();
    ns::KLBasis basis = ns::KLBasis::truncated(s.config.kl_modes);
    Rng truth_rng(s.truth_seed);
    Vector theta_truth =
        std::sqrt(2.0) * std::numbers::pi * truth_rng.normal_vector(s.config.kl_modes);
    Vector y = ns::synthesize_observations(theta_truth, s.config, basis, s.noise_seed);
    ForwardProblem p = ns::make_ns_problem(s.config, basis, y);
    p.id = id;
    (void)threads;
    return p;
  }
  return problem_by_id(id);
}

std::vector<std::string> list_problem_ids() {
  auto ids = catalog_ids();
  ids.push_back("ns:desk");
  ids.push_back("ns:paper");
  return ids;
}

double mixture_tv(const GaussianMixture& mix, const GridDensity& reference) {
  GaussianMixture v = view_2d(mix);
  return tv_distance(grid_density(v, reference.axes), reference);
}

void run_experiment(const std::filesystem::path& config_path,
                    const std::filesystem::path& output_dir, const CliOverrides& ov) {
  ExperimentConfig cfg = parse_experiment_config(config_path);
  if (ov.seed) cfg.seeds = {*ov.seed};
  if (ov.threads) cfg.threads = *ov.threads;
  const int threads = cfg.threads > 0 ? cfg.threads : default_thread_count();

  ForwardProblem problem = resolve_problem(cfg.problem_id, cfg.ns_settings, threads);

  // Seeds run concurrently; every file is written afterwards from this
  // thread only.
  const int seed_workers =
      cfg.seeds.size() > 1 ? std::min<int>(threads, static_cast<int>(cfg.seeds.size())) : 1;
  const int inner_threads = seed_workers > 1 ? 1 : threads;

  struct Job {
    const MethodSpec* spec;
    std::uint64_t seed;
    SeedResult result;
    std::exception_ptr error;
  };
  std::vector<Job> jobs;
  for (const auto& m : cfg.methods) {
    for (auto s : cfg.seeds) jobs.push_back({&m, s, {}, nullptr});
  }
  parallel_for(jobs.size(), [&](std::size_t i) {
    try {
      jobs[i].result = run_one_seed(*jobs[i].spec, problem, jobs[i].seed, cfg.tv_every,
                                    cfg.snapshot_every, inner_threads);
    } catch (...) {
      jobs[i].error = std::current_exception();
    }
  }, seed_workers);
  for (auto& j : jobs) {
    if (j.error) std::rethrow_exception(j.error);
  }

  std::filesystem::create_directories(output_dir);
  nlohmann::json report;
  report["version"] = 1;
  report["problem"] = cfg.problem_id;
  report["config"] = config_path.filename().string();
  auto& methods_json = report["methods"] = nlohmann::json::object();

  for (auto& j : jobs) {
    std::filesystem::path dir = output_dir / j.spec->name / seed_dir_name(j.seed);
    std::filesystem::create_directories(dir);
    write_trace_csv(dir / "trace.csv", j.result.rows);
    for (const auto& [iter, mix] : j.result.snapshots) {
      char name[32];
      std::snprintf(name, sizeof(name), "mixture_%03d.json", iter);
      write_mixture_json(dir / name, mix);
    }
    if (j.result.final_density) write_grid_csv(dir / "density.csv", *j.result.final_density);
    validate_artifacts(dir, j.result.rows.size());

    nlohmann::json entry;
    entry["final_tv"] = j.result.final_tv;
    entry["f_evals"] = j.result.f_evals;
    entry["diag_f_evals"] = j.result.diag_f_evals;
    entry["wall_s"] = j.result.wall_s;
    entry["positivity_events"] = j.result.positivity_events;
    methods_json[j.spec->name]["seeds"][std::to_string(j.seed)] = entry;
  }

  std::ofstream out(output_dir / "report.json", std::ios::binary);
  if (!out) throw std::runtime_error("cannot write report.json");
  out << report.dump(2) << "\n";
}

void sensitivity_sweep(const std::filesystem::path& config_path,
                       const std::filesystem::path& output_dir, const CliOverrides& ov) {
  ExperimentConfig cfg = parse_experiment_config(config_path);
  if (ov.seed) cfg.seeds = {*ov.seed};
  const int threads =
      (ov.threads ? *ov.threads : (cfg.threads > 0 ? cfg.threads : default_thread_count()));

  ForwardProblem problem = multi_2d('E');
  struct Setting {
    std::string tag;
    double alpha;
    double dt;
  };
  const std::vector<Setting> settings = {
      {"alpha_1e-1", 1e-1, 0.5}, {"alpha_1e-3", 1e-3, 0.5}, {"alpha_1e-5", 1e-5, 0.5},
      {"dt_0.25", 1e-3, 0.25},   {"dt_0.5", 1e-3, 0.5},     {"dt_0.75", 1e-3, 0.75}};

  std::filesystem::create_directories(output_dir);
  std::ofstream summary(output_dir / "sweep_summary.csv", std::ios::binary);
  if (!summary) throw std::runtime_error("cannot write sweep_summary.csv");
  summary << "setting,alpha,dt,seed,final_tv\r\n";

  for (const auto& s : settings) {
    for (std::uint64_t seed : cfg.seeds) {
      SolverConfig sc;
      sc.K = 40;
      sc.n_iters = 200;
      sc.alpha = s.alpha;
      sc.dt = s.dt;
      sc.rng_seed = seed;
      sc.threads = threads;
      sc.snapshot_every = 0;

      std::vector<TraceRow> rows;
      SolverTrace trace = run(problem, sc, [&](int iter, const GaussianMixture& mix) {
        TraceRow row;
        row.iteration = iter;
        row.weights = mix.weights;
        row.tv = mixture_tv(mix, *problem.reference);
        rows.push_back(std::move(row));
      });
      for (std::size_t i = 0; i < rows.size(); ++i) {
        if (i < trace.residuals.size()) {
          rows[i].grad_residual = trace.residuals[i].max_grad();
          rows[i].hess_residual = trace.residuals[i].max_hess();
          rows[i].spread = trace.residuals[i].spread;
        }
      }
      std::filesystem::path dir =
          output_dir / s.tag / (cfg.seeds.size() > 1 ? seed_dir_name(seed) : "");
      std::filesystem::create_directories(dir);
      write_trace_csv(dir / "trace.csv", rows);
      summary << s.tag << ',' << format_double(s.alpha) << ',' << format_double(s.dt)
              << ',' << seed << ',' << format_double(*rows.back().tv) << "\r\n";
    }
  }
}

}  // namespace dfgmvi
