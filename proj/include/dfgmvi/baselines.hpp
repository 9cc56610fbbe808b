#pragma once

#include <functional>
#include <vector>

#include "dfgmvi/problems.hpp"
#include "dfgmvi/rng.hpp"
#include "dfgmvi/solver.hpp"
#include "dfgmvi/types.hpp"

namespace dfgmvi {

/// Gradient and Hessian of the target energy, supplied analytically per
/// benchmark problem. Used only by the comparison methods.
struct AnalyticDerivatives {
  std::function<double(const Vector&)> phi;
  std::function<Vector(const Vector&)> grad;
  std::function<Matrix(const Vector&)> hess;

  static AnalyticDerivatives from_problem(const ForwardProblem& p);
};

enum class QuadratureKind { MeanPoint, Unscented, MonteCarlo };

/// Quadrature selection for the two integrand families. The study in the
/// comparison experiments deliberately allows an inconsistent pair.
struct BaselineQuadrature {
  QuadratureKind phi_rule = QuadratureKind::MeanPoint;
  QuadratureKind logrho_rule = QuadratureKind::MeanPoint;
  int mc_samples = 20;

  bool consistent() const { return phi_rule == logrho_rule; }
  static BaselineQuadrature all(QuadratureKind k, int mc = 20) { return {k, k, mc}; }
  static BaselineQuadrature inconsistent(int mc = 20) {
    return {QuadratureKind::MeanPoint, QuadratureKind::MonteCarlo, mc};
  }
};

struct DtPolicy {
  bool adaptive = false;
  double dt = 0.5;      // fixed step when adaptive is false
  double dt_max = 0.5;  // cap when adaptive
  double beta = 0.99;   // safety factor, in (0,1)
};

/// Step size that keeps every precision update positive definite:
/// min(dt_max, beta / max_k |C_k E_k|_2), spectral norms by power iteration.
double adaptive_dt(const GaussianMixture& mix, const std::vector<Matrix>& hess_expectations,
                   double dt_max, double beta);

/// One natural-gradient-flow Euler step with the selected quadrature rules.
/// Throws PositivityLost when a fixed step breaks the precision update.
/// diagonal restricts the covariance update to its diagonal.
GaussianMixture ngf_step(const GaussianMixture& mix, const AnalyticDerivatives& derivs,
                         const BaselineQuadrature& quad, const DtPolicy& dt_policy,
                         Rng& rng, bool diagonal = false, double* dt_used = nullptr,
                         double weight_floor = 1e-8);

/// One Wasserstein-flow step: sandwich covariance update
/// C^{-1} <- M C^{-1} M with M = I + dt E, unpreconditioned mean update.
GaussianMixture wgf_step(const GaussianMixture& mix, const AnalyticDerivatives& derivs,
                         double dt, double weight_floor = 1e-8);

/// One black-box step: Monte Carlo estimates of the integration-by-parts
/// forms with empirical-covariance variance reduction and an adaptive step;
/// retries with halved dt (up to 20 times) if the draw still breaks
/// positivity.
GaussianMixture bbvi_step(const GaussianMixture& mix,
                          const std::function<double(const Vector&)>& phi, int J,
                          const DtPolicy& dt_policy, Rng& rng,
                          double* dt_used = nullptr, double weight_floor = 1e-8);

/// One affine-invariant ensemble sweep; walkers and their energies are
/// updated in place. Returns the number of accepted proposals.
int stretch_move(Matrix& walkers, Vector& phi_values,
                 const std::function<double(const Vector&)>& phi, double a, Rng& rng);

/// Runner configuration shared by the flow-based baselines.
struct BaselineRunConfig {
  int K = 40;
  int n_iters = 200;
  double weight_floor = 1e-8;
  std::uint64_t rng_seed = 0;
  DtPolicy dt_policy;
  BaselineQuadrature quadrature;
  bool diagonal = false;     // NGF-VI-D
  int bbvi_samples = 5;
  double wgf_dt = 5e-3;
  std::optional<InitDistribution> init;
};

struct BaselineTrace {
  std::vector<Vector> weights_history;
  std::vector<double> dt_history;
  std::vector<StationarityRecord> residuals;  // analytic mean-point residuals
  GaussianMixture final_mixture;
  long phi_eval_count = 0;
  int positivity_events = 0;  // recorded, then the run stops
  bool diverged = false;      // nonfinite state; recorded, then the run stops
};

enum class BaselineMethod { NgfVi, NgfViDiagonal, WgfVi, Bbvi };

BaselineTrace run_baseline(BaselineMethod method, const ForwardProblem& problem,
                           const BaselineRunConfig& cfg,
                           const IterationCallback& on_iteration = {});

/// Stretch-move MCMC runner; keeps the last `keep_last` sweeps of particles.
struct McmcConfig {
  int walkers = 1000;
  int n_sweeps = 500;
  double stretch_a = 2.0;
  std::uint64_t rng_seed = 0;
  int keep_last = 10;
  std::optional<InitDistribution> init;
};

struct McmcTrace {
  Matrix kept_particles;  // (keep_last * walkers) x dim
  long phi_eval_count = 0;
  double acceptance_rate = 0.0;
};

McmcTrace run_mcmc(const ForwardProblem& problem, const McmcConfig& cfg,
                   const std::function<void(int, const Matrix&)>& on_sweep = {});

}  // namespace dfgmvi
