#include "dfgmvi/solver.hpp"

#include <chrono>
#include <cmath>
#include <mutex>

#include "dfgmvi/parallel.hpp"
#include "dfgmvi/rng.hpp"

namespace dfgmvi {

namespace {
void require(bool cond, const char* msg) {
  if (!cond) throw std::invalid_argument(msg);
}
}  // namespace

void SolverConfig::validate() const {
  require(dt > 0.0 && dt < 1.0, "SolverConfig: dt must lie in (0,1)");
  require(alpha > 0.0, "SolverConfig: alpha must be positive");
  require(K >= 1, "SolverConfig: K must be positive");
  require(n_iters >= 0, "SolverConfig: n_iters must be nonnegative");
  require(weight_floor > 0.0 && weight_floor < 1.0 / K,
          "SolverConfig: weight_floor must lie in (0, 1/K)");
}

Vector normalize_weights(const Vector& log_w, double floor) {
  require(log_w.allFinite(), "normalize_weights: nonfinite log-weight");
  Vector w = (log_w.array() - log_w.maxCoeff()).exp();
  w = w.cwiseMax(floor);
  return w / w.sum();
}

namespace detail {

std::vector<QuadratureData> component_quadratures(const GaussianMixture& mix,
                                                  const ForwardMap& F,
                                                  const SolverConfig& cfg,
                                                  long& eval_count) {
  const int K = mix.size();
  const Eigen::Index n = mix.dim();
  const std::size_t per = static_cast<std::size_t>(2 * n + 1);

  std::vector<Vector> points;
  points.reserve(per * K);
  for (int k = 0; k < K; ++k) {
    auto pts = quadrature_points(mix.components[k].mean, mix.components[k].cov_chol,
                                 cfg.alpha);
    points.insert(points.end(), pts.begin(), pts.end());
  }

  std::vector<Vector> values(points.size());
  parallel_for(points.size(), [&](std::size_t i) { values[i] = F(points[i]); },
               cfg.threads);
  eval_count += static_cast<long>(points.size());

  std::vector<QuadratureData> quads;
  quads.reserve(K);
  for (int k = 0; k < K; ++k) {
    std::vector<Vector> slice(values.begin() + k * per, values.begin() + (k + 1) * per);
    quads.push_back(assemble_quadrature(slice, cfg.alpha));
  }
  return quads;
}

StationarityRecord residual_record(const GaussianMixture& mix,
                                   const std::vector<QuadratureData>& quads) {
  const int K = mix.size();
  StationarityRecord rec;
  rec.grad_norms.resize(K);
  rec.hess_norms.resize(K);
  Vector level(K);
  for (int k = 0; k < K; ++k) {
    const auto& L = mix.components[k].cov_chol;
    auto [log_rho, score] = gm_expect_meanpoint(mix, k);
    Vector g = expect_grad_phi(L, quads[k]) + score;
    Matrix H = expect_hess_phi(L, quads[k]) + gm_expect_hess_log(mix, k);
    rec.grad_norms[k] = g.norm();
    rec.hess_norms[k] = H.norm();
    level[k] = log_rho + expect_phi(quads[k]);
  }
  rec.spread = level.maxCoeff() - level.minCoeff();
  return rec;
}

GaussianMixture step_with_quadratures(const GaussianMixture& mix,
                                      const std::vector<QuadratureData>& quads,
                                      const SolverConfig& cfg) {
  const int K = mix.size();
  const Eigen::Index n = mix.dim();
  const double dt = cfg.dt;

  GaussianMixture out;
  out.components.resize(K);
  Vector log_w_new(K);

  std::exception_ptr failure;
  std::mutex failure_mutex;
  parallel_for(static_cast<std::size_t>(K), [&](std::size_t ks) {
    const int k = static_cast<int>(ks);
    try {
      const auto& comp = mix.components[k];
      const Matrix& L = comp.cov_chol;

      auto [log_rho, score] = gm_expect_meanpoint(mix, k);
      Matrix hess = expect_hess_phi(L, quads[k]) + gm_expect_hess_log(mix, k);
      Vector grad = expect_grad_phi(L, quads[k]) + score;

      // Precision update, refactorized. Must stay positive definite for any
      // dt in (0,1); a failure here is a bug, not a recoverable event.
      Matrix Linv = L.triangularView<Eigen::Lower>().solve(Matrix::Identity(n, n));
      Matrix prec = Linv.transpose() * Linv + dt * hess;
      Matrix R;
      try {
        R = cholesky_sqrt(prec);
      } catch (const PositivityLost&) {
        throw PositivityLost("precision update lost positive definiteness", k);
      }
      Matrix Rinv = R.triangularView<Eigen::Lower>().solve(Matrix::Identity(n, n));
      Matrix cov_new = Rinv.transpose() * Rinv;
      Matrix L_new = cholesky_sqrt(cov_new);

      // Mean moves through the fresh covariance (Gauss-Seidel), weights use
      // the incoming state only.
      Vector mean_new =
          comp.mean - dt * (L_new * (L_new.transpose() * grad));
      log_w_new[k] =
          std::log(mix.weights[k]) - dt * (expect_phi(quads[k]) + log_rho);

      out.components[k] = {std::move(mean_new), std::move(L_new)};
    } catch (...) {
      std::lock_guard<std::mutex> lock(failure_mutex);
      if (!failure) failure = std::current_exception();
    }
  }, cfg.threads);
  if (failure) std::rethrow_exception(failure);

  out.weights = normalize_weights(log_w_new, cfg.weight_floor);
  return out;
}

}  // namespace detail

GaussianMixture step(const GaussianMixture& mix, const ForwardMap& F,
                     const SolverConfig& cfg) {
  cfg.validate();
  mix.validate();
  long evals = 0;
  auto quads = detail::component_quadratures(mix, F, cfg, evals);
  return detail::step_with_quadratures(mix, quads, cfg);
}

StationarityRecord stationarity_residuals(const GaussianMixture& mix,
                                          const ForwardMap& F,
                                          const SolverConfig& cfg) {
  long evals = 0;
  auto quads = detail::component_quadratures(mix, F, cfg, evals);
  return detail::residual_record(mix, quads);
}

GaussianMixture initial_mixture(const ForwardProblem& problem, const SolverConfig& cfg) {
  const InitDistribution& init =
      cfg.init ? *cfg.init : problem.init_distribution;
  const Eigen::Index n = problem.n_theta;
  require(init.mean.size() == n, "initial_mixture: init dimension mismatch");

  Rng rng(cfg.rng_seed);
  GaussianMixture mix;
  mix.weights = Vector::Constant(cfg.K, 1.0 / cfg.K);
  mix.components.reserve(cfg.K);
  for (int k = 0; k < cfg.K; ++k) {
    Vector m = init.mean + init.cov_chol * rng.normal_vector(n);
    mix.components.push_back({std::move(m), Matrix::Identity(n, n)});
  }
  return mix;
}

SolverTrace run(const ForwardProblem& problem, const SolverConfig& cfg,
                const IterationCallback& on_iteration) {
  cfg.validate();
  SolverTrace trace;
  GaussianMixture mix = initial_mixture(problem, cfg);

  auto snapshot_due = [&](int iter) {
    if (iter == 0 || iter == cfg.n_iters) return true;
    return cfg.snapshot_every > 0 && iter % cfg.snapshot_every == 0;
  };

  trace.weights_history.push_back(mix.weights);
  if (snapshot_due(0)) trace.snapshots.emplace(0, mix);
  if (on_iteration) on_iteration(0, mix);

  for (int iter = 1; iter <= cfg.n_iters; ++iter) {
    auto t0 = std::chrono::steady_clock::now();
    auto quads = detail::component_quadratures(mix, problem.F, cfg, trace.f_eval_count);
    trace.residuals.push_back(detail::residual_record(mix, quads));
    mix = detail::step_with_quadratures(mix, quads, cfg);
    auto t1 = std::chrono::steady_clock::now();

    trace.wall_ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    trace.weights_history.push_back(mix.weights);
    if (snapshot_due(iter)) trace.snapshots.emplace(iter, mix);
    if (on_iteration) on_iteration(iter, mix);
  }

  if (cfg.final_residuals) {
    auto quads =
        detail::component_quadratures(mix, problem.F, cfg, trace.diag_f_eval_count);
    trace.residuals.push_back(detail::residual_record(mix, quads));
  }
  trace.final_mixture = mix;
  return trace;
}

}  // namespace dfgmvi
