#pragma once

#include <functional>
#include <map>
#include <optional>
#include <vector>

#include "dfgmvi/problems.hpp"
#include "dfgmvi/quadrature.hpp"
#include "dfgmvi/types.hpp"

namespace dfgmvi {

struct SolverConfig {
  double dt = 0.5;            // in (0,1)
  double alpha = 1e-3;        // finite-difference radius
  int K = 1;                  // number of mixture components
  int n_iters = 200;
  double weight_floor = 1e-8;  // in (0, 1/K)
  std::uint64_t rng_seed = 0;
  std::optional<InitDistribution> init;  // defaults to the problem's
  int threads = 1;
  int snapshot_every = 0;       // 0 keeps only the first and last mixture
  bool final_residuals = true;  // one extra quadrature round after the run

  void validate() const;
};

/// Per-component stationarity residuals at one mixture state.
struct StationarityRecord {
  Vector grad_norms;  // |E[grad Phi] + grad log rho(m_k)| per component
  Vector hess_norms;  // Frobenius norm of the Hessian expectation sum
  double spread = 0.0;  // max_k - min_k of (log rho(m_k) + E[Phi]_k)

  double max_grad() const { return grad_norms.size() ? grad_norms.maxCoeff() : 0.0; }
  double max_hess() const { return hess_norms.size() ? hess_norms.maxCoeff() : 0.0; }
};

struct SolverTrace {
  std::vector<Vector> weights_history;        // one entry per iteration, 0..N
  std::vector<StationarityRecord> residuals;  // aligned with weights_history
  std::vector<double> wall_ms;                // per step, 1..N
  std::map<int, GaussianMixture> snapshots;   // iteration -> state
  GaussianMixture final_mixture;
  long f_eval_count = 0;       // forward evaluations consumed by the update loop
  long diag_f_eval_count = 0;  // extra evaluations for end-of-run diagnostics
};

using ForwardMap = std::function<Vector(const Vector&)>;
using IterationCallback = std::function<void(int iter, const GaussianMixture&)>;

/// Exponentiates log-weights with max subtraction, clamps at the floor, and
/// renormalizes onto the simplex.
Vector normalize_weights(const Vector& log_w, double floor);

/// One forward-Euler update of every component: precision first, then the
/// mean through the fresh covariance, then log-weights, all driven by
/// quadrature data assembled at the incoming state.
GaussianMixture step(const GaussianMixture& mix, const ForwardMap& F,
                     const SolverConfig& cfg);

/// Stationarity residuals of a mixture under a forward map (evaluates the
/// map once per quadrature point).
StationarityRecord stationarity_residuals(const GaussianMixture& mix,
                                          const ForwardMap& F, const SolverConfig& cfg);

/// Full run: seeded initialization (means from the init Gaussian, identity
/// covariances, uniform weights), n_iters steps, per-iteration records.
SolverTrace run(const ForwardProblem& problem, const SolverConfig& cfg,
                const IterationCallback& on_iteration = {});

/// Initial mixture used by run, exposed for tests and experiment drivers.
GaussianMixture initial_mixture(const ForwardProblem& problem, const SolverConfig& cfg);

namespace detail {
/// Quadrature data for every component; eval_count is incremented by
/// (2*Ntheta+1)*K. Evaluations run in parallel across points when
/// cfg.threads > 1.
std::vector<QuadratureData> component_quadratures(const GaussianMixture& mix,
                                                  const ForwardMap& F,
                                                  const SolverConfig& cfg,
                                                  long& eval_count);

StationarityRecord residual_record(const GaussianMixture& mix,
                                   const std::vector<QuadratureData>& quads);

GaussianMixture step_with_quadratures(const GaussianMixture& mix,
                                      const std::vector<QuadratureData>& quads,
                                      const SolverConfig& cfg);
}  // namespace detail

}  // namespace dfgmvi
