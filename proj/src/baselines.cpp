#include "dfgmvi/baselines.hpp"

#include <cmath>

namespace dfgmvi {

namespace {

void require(bool cond, const char* msg) {
  if (!cond) throw std::invalid_argument(msg);
}

/// Quadrature nodes and weights for one Gaussian component.
struct NodeSet {
  std::vector<Vector> nodes;
  std::vector<double> weights;
};

NodeSet make_nodes(const GaussianComponent& comp, QuadratureKind kind, int mc_samples,
                   Rng& rng) {
  const Eigen::Index n = comp.dim();
  NodeSet ns;
  switch (kind) {
    case QuadratureKind::MeanPoint:
      ns.nodes = {comp.mean};
      ns.weights = {1.0};
      break;
    case QuadratureKind::Unscented: {
      // Symmetric sigma points with unit spread: the center carries weight
      // 1 - N so that second moments are matched exactly.
      ns.nodes.push_back(comp.mean);
      ns.weights.push_back(1.0 - static_cast<double>(n));
      for (Eigen::Index i = 0; i < n; ++i) {
        ns.nodes.push_back(comp.mean + comp.cov_chol.col(i));
        ns.weights.push_back(0.5);
        ns.nodes.push_back(comp.mean - comp.cov_chol.col(i));
        ns.weights.push_back(0.5);
      }
      break;
    }
    case QuadratureKind::MonteCarlo: {
      for (int j = 0; j < mc_samples; ++j) {
        ns.nodes.push_back(comp.mean + comp.cov_chol * rng.normal_vector(n));
        ns.weights.push_back(1.0 / mc_samples);
      }
      break;
    }
  }
  return ns;
}

struct Expectations {
  double scalar = 0.0;
  Vector grad;
  Matrix hess;
};

Expectations integrate(const NodeSet& ns, const std::function<double(const Vector&)>& f,
                       const std::function<Vector(const Vector&)>& g,
                       const std::function<Matrix(const Vector&)>& h, Eigen::Index n) {
  Expectations e;
  e.grad = Vector::Zero(n);
  e.hess = Matrix::Zero(n, n);
  for (std::size_t i = 0; i < ns.nodes.size(); ++i) {
    const double w = ns.weights[i];
    e.scalar += w * f(ns.nodes[i]);
    e.grad += w * g(ns.nodes[i]);
    e.hess += w * h(ns.nodes[i]);
  }
  e.hess = 0.5 * (e.hess + e.hess.transpose());
  return e;
}

Matrix precision_of(const GaussianComponent& comp) {
  const Eigen::Index n = comp.dim();
  Matrix Linv =
      comp.cov_chol.triangularView<Eigen::Lower>().solve(Matrix::Identity(n, n));
  return Linv.transpose() * Linv;
}

/// Largest singular value of C_k E_k by power iteration on (CE)^T(CE).
double spectral_norm_CE(const GaussianComponent& comp, const Matrix& E) {
  const Eigen::Index n = comp.dim();
  const Matrix& L = comp.cov_chol;
  auto applyM = [&](const Vector& x) { return Vector(L * (L.transpose() * (E * x))); };
  auto applyMt = [&](const Vector& x) { return Vector(E * (L * (L.transpose() * x))); };

  Vector v = Vector::Ones(n) / std::sqrt(static_cast<double>(n));
  double sigma = 0.0;
  for (int it = 0; it < 500; ++it) {
    Vector w = applyMt(applyM(v));
    double norm = w.norm();
    if (norm == 0.0) return 0.0;
    double sigma_new = std::sqrt(norm);
    v = w / norm;
    if (it > 0 && std::abs(sigma_new - sigma) <= 1e-3 * sigma_new) return sigma_new;
    sigma = sigma_new;
  }
  return sigma;
}

GaussianComponent refactor_precision(const Matrix& prec, int k) {
  Matrix R;
  try {
    R = cholesky_sqrt(prec);
  } catch (const PositivityLost&) {
    throw PositivityLost("precision update lost positive definiteness", k);
  }
  const Eigen::Index n = prec.rows();
  Matrix Rinv = R.triangularView<Eigen::Lower>().solve(Matrix::Identity(n, n));
  Matrix cov = Rinv.transpose() * Rinv;
  GaussianComponent c;
  c.cov_chol = cholesky_sqrt(cov);
  return c;
}

}  // namespace

AnalyticDerivatives AnalyticDerivatives::from_problem(const ForwardProblem& p) {
  require(static_cast<bool>(p.grad) && static_cast<bool>(p.hess),
          "problem carries no analytic derivatives");
  return {p.phi, p.grad, p.hess};
}

double adaptive_dt(const GaussianMixture& mix,
                   const std::vector<Matrix>& hess_expectations, double dt_max,
                   double beta) {
  require(beta > 0.0 && beta < 1.0, "adaptive_dt: beta must lie in (0,1)");
  double worst = 0.0;
  for (int k = 0; k < mix.size(); ++k) {
    worst = std::max(worst, spectral_norm_CE(mix.components[k], hess_expectations[k]));
  }
  if (worst == 0.0) return dt_max;
  return std::min(dt_max, beta / worst);
}

GaussianMixture ngf_step(const GaussianMixture& mix, const AnalyticDerivatives& derivs,
                         const BaselineQuadrature& quad, const DtPolicy& dt_policy,
                         Rng& rng, bool diagonal, double* dt_used, double weight_floor) {
  const int K = mix.size();
  const Eigen::Index n = mix.dim();

  auto logrho_f = [&](const Vector& t) { return gm_logpdf(mix, t); };
  auto logrho_g = [&](const Vector& t) { return gm_score(mix, t); };
  auto logrho_h = [&](const Vector& t) { return gm_loghess(mix, t); };

  std::vector<Expectations> sums(K);
  for (int k = 0; k < K; ++k) {
    NodeSet phi_nodes = make_nodes(mix.components[k], quad.phi_rule, quad.mc_samples, rng);
    NodeSet rho_nodes = quad.consistent()
                            ? phi_nodes
                            : make_nodes(mix.components[k], quad.logrho_rule,
                                         quad.mc_samples, rng);
    Expectations ephi = integrate(phi_nodes, derivs.phi, derivs.grad, derivs.hess, n);
    Expectations erho = integrate(rho_nodes, logrho_f, logrho_g, logrho_h, n);
    sums[k].scalar = ephi.scalar + erho.scalar;
    sums[k].grad = ephi.grad + erho.grad;
    sums[k].hess = ephi.hess + erho.hess;
    if (!std::isfinite(sums[k].scalar) || !sums[k].grad.allFinite() ||
        !sums[k].hess.allFinite()) {
      throw Divergence("ngf_step: nonfinite integrand expectation");
    }
  }

  double dt = dt_policy.dt;
  if (dt_policy.adaptive) {
    // The step bound uses the full Hessian expectation even for the diagonal
    // variant; only the covariance update itself is projected.
    std::vector<Matrix> hs(K);
    for (int k = 0; k < K; ++k) hs[k] = sums[k].hess;
    dt = adaptive_dt(mix, hs, dt_policy.dt_max, dt_policy.beta);
  }
  if (dt_used) *dt_used = dt;

  GaussianMixture out;
  out.components.resize(K);
  Vector log_w(K);
  for (int k = 0; k < K; ++k) {
    Matrix update = diagonal ? Matrix(sums[k].hess.diagonal().asDiagonal())
                             : sums[k].hess;
    Matrix prec = precision_of(mix.components[k]) + dt * update;
    out.components[k] = refactor_precision(prec, k);
    const Matrix& L_new = out.components[k].cov_chol;
    out.components[k].mean =
        mix.components[k].mean - dt * (L_new * (L_new.transpose() * sums[k].grad));
    if (!out.components[k].mean.allFinite()) {
      throw Divergence("ngf_step: nonfinite mean update");
    }
    log_w[k] = std::log(mix.weights[k]) - dt * sums[k].scalar;
  }
  out.weights = normalize_weights(log_w, weight_floor);
  return out;
}

GaussianMixture wgf_step(const GaussianMixture& mix, const AnalyticDerivatives& derivs,
                         double dt, double weight_floor) {
  const int K = mix.size();
  const Eigen::Index n = mix.dim();
  GaussianMixture out;
  out.components.resize(K);
  Vector log_w(K);
  for (int k = 0; k < K; ++k) {
    const Vector& m = mix.components[k].mean;
    Matrix E = gm_loghess(mix, m) + derivs.hess(m);
    E = 0.5 * (E + E.transpose());
    if (!E.allFinite()) throw Divergence("wgf_step: nonfinite Hessian expectation");

    Eigen::SelfAdjointEigenSolver<Matrix> es(E);
    for (Eigen::Index i = 0; i < n; ++i) {
      if (std::abs(1.0 + dt * es.eigenvalues()[i]) < 1e-12) {
        throw PositivityLost("wgf_step: singular covariance transport", k);
      }
    }
    Matrix M = Matrix::Identity(n, n) + dt * E;
    Matrix prec = M * precision_of(mix.components[k]) * M;
    out.components[k] = refactor_precision(prec, k);
    Vector g = gm_score(mix, m) + derivs.grad(m);
    out.components[k].mean = m - dt * g;
    log_w[k] = std::log(mix.weights[k]) - dt * (gm_logpdf(mix, m) + derivs.phi(m));
  }
  out.weights = normalize_weights(log_w, weight_floor);
  return out;
}

GaussianMixture bbvi_step(const GaussianMixture& mix,
                          const std::function<double(const Vector&)>& phi, int J,
                          const DtPolicy& dt_policy, Rng& rng, double* dt_used,
                          double weight_floor) {
  require(J >= 2, "bbvi_step: need at least two samples");
  const int K = mix.size();
  const Eigen::Index n = mix.dim();

  std::vector<Vector> mean_est(K);
  std::vector<Matrix> cov_est(K);
  Vector scalar_est(K);
  std::vector<Matrix> precs(K);
  for (int k = 0; k < K; ++k) {
    const auto& comp = mix.components[k];
    Matrix devs(n, J);
    Vector vals(J);
    for (int j = 0; j < J; ++j) {
      Vector d = comp.cov_chol * rng.normal_vector(n);
      devs.col(j) = d;
      Vector theta = comp.mean + d;
      vals[j] = gm_logpdf(mix, theta) + phi(theta);
    }
    // Empirical second moment replaces C_k in the covariance integrand; a
    // constant integrand then contributes exactly zero.
    Matrix emp = (devs * devs.transpose()) / J;
    Vector me = Vector::Zero(n);
    Matrix ce = Matrix::Zero(n, n);
    for (int j = 0; j < J; ++j) {
      me += devs.col(j) * vals[j];
      ce += (devs.col(j) * devs.col(j).transpose() - emp) * vals[j];
    }
    mean_est[k] = me / J;
    ce /= J;
    cov_est[k] = 0.5 * (ce + ce.transpose());
    scalar_est[k] = vals.mean();
    precs[k] = precision_of(comp);
    if (!std::isfinite(scalar_est[k]) || !mean_est[k].allFinite() ||
        !cov_est[k].allFinite()) {
      throw Divergence("bbvi_step: nonfinite Monte Carlo estimate");
    }
  }

  double dt = dt_policy.dt;
  if (dt_policy.adaptive) {
    double worst = 0.0;
    for (int k = 0; k < K; ++k) {
      Matrix GCinv = cov_est[k] * precs[k];
      // Power iteration on a small dense matrix.
      Vector v = Vector::Ones(n).normalized();
      double sigma = 0.0;
      for (int it = 0; it < 500; ++it) {
        Vector w = GCinv.transpose() * (GCinv * v);
        double norm = w.norm();
        if (norm == 0.0) break;
        double s_new = std::sqrt(norm);
        v = w / norm;
        if (it > 0 && std::abs(s_new - sigma) <= 1e-3 * s_new) {
          sigma = s_new;
          break;
        }
        sigma = s_new;
      }
      worst = std::max(worst, sigma);
    }
    dt = worst == 0.0 ? dt_policy.dt_max : std::min(dt_policy.dt_max, dt_policy.beta / worst);
  }

  for (int attempt = 0;; ++attempt) {
    try {
      GaussianMixture out;
      out.components.resize(K);
      Vector log_w(K);
      for (int k = 0; k < K; ++k) {
        const auto& comp = mix.components[k];
        Matrix cov_new = comp.covariance() - dt * cov_est[k];
        Matrix L_new = cholesky_sqrt(cov_new);
        out.components[k] = {Vector(comp.mean - dt * mean_est[k]), std::move(L_new)};
        log_w[k] = std::log(mix.weights[k]) - dt * scalar_est[k];
      }
      out.weights = normalize_weights(log_w, weight_floor);
      if (dt_used) *dt_used = dt;
      return out;
    } catch (const PositivityLost&) {
      if (attempt >= 20) {
        throw PositivityLost("bbvi_step: positivity unrecoverable after 20 halvings");
      }
      dt *= 0.5;
    }
  }
}

int stretch_move(Matrix& walkers, Vector& phi_values,
                 const std::function<double(const Vector&)>& phi, double a, Rng& rng) {
  const Eigen::Index J = walkers.rows();
  const Eigen::Index n = walkers.cols();
  require(J >= 2, "stretch_move: need at least two walkers");
  require(a > 1.0, "stretch_move: stretch parameter must exceed 1");
  int accepted = 0;
  const double sa = std::sqrt(a);
  for (Eigen::Index i = 0; i < J; ++i) {
    Eigen::Index partner = static_cast<Eigen::Index>(rng.index(J - 1));
    if (partner >= i) ++partner;
    // z has density proportional to 1/sqrt(z) on [1/a, a].
    double u = rng.uniform();
    double z = std::pow((u * (sa - 1.0 / sa) + 1.0 / sa), 2.0);
    Vector proposal = walkers.row(partner).transpose() +
                      z * (walkers.row(i).transpose() - walkers.row(partner).transpose());
    double phi_prop = phi(proposal);
    double log_accept = (static_cast<double>(n) - 1.0) * std::log(z) +
                        (phi_values[i] - phi_prop);
    if (std::log(rng.uniform()) < log_accept) {
      walkers.row(i) = proposal.transpose();
      phi_values[i] = phi_prop;
      ++accepted;
    }
  }
  return accepted;
}

namespace {

StationarityRecord analytic_residuals(const GaussianMixture& mix,
                                      const AnalyticDerivatives& derivs) {
  const int K = mix.size();
  StationarityRecord rec;
  rec.grad_norms.resize(K);
  rec.hess_norms.resize(K);
  Vector level(K);
  for (int k = 0; k < K; ++k) {
    const Vector& m = mix.components[k].mean;
    rec.grad_norms[k] = (gm_score(mix, m) + derivs.grad(m)).norm();
    rec.hess_norms[k] = (gm_loghess(mix, m) + derivs.hess(m)).norm();
    level[k] = gm_logpdf(mix, m) + derivs.phi(m);
  }
  rec.spread = level.maxCoeff() - level.minCoeff();
  return rec;
}

}  // namespace

BaselineTrace run_baseline(BaselineMethod method, const ForwardProblem& problem,
                           const BaselineRunConfig& cfg,
                           const IterationCallback& on_iteration) {
  AnalyticDerivatives derivs = AnalyticDerivatives::from_problem(problem);
  long phi_evals = 0;
  AnalyticDerivatives counted = derivs;
  counted.phi = [&phi_evals, f = derivs.phi](const Vector& t) {
    ++phi_evals;
    return f(t);
  };

  SolverConfig seed_cfg;
  seed_cfg.K = cfg.K;
  seed_cfg.rng_seed = cfg.rng_seed;
  if (cfg.init) seed_cfg.init = cfg.init;
  GaussianMixture mix = initial_mixture(problem, seed_cfg);

  Rng rng(cfg.rng_seed + 0x9e3779b97f4a7c15ull);
  BaselineTrace trace;
  trace.weights_history.push_back(mix.weights);
  trace.residuals.push_back(analytic_residuals(mix, derivs));
  if (on_iteration) on_iteration(0, mix);

  for (int iter = 1; iter <= cfg.n_iters; ++iter) {
    double dt_used = cfg.dt_policy.dt;
    try {
      switch (method) {
        case BaselineMethod::NgfVi:
        case BaselineMethod::NgfViDiagonal:
          mix = ngf_step(mix, counted, cfg.quadrature, cfg.dt_policy, rng,
                         method == BaselineMethod::NgfViDiagonal, &dt_used,
                         cfg.weight_floor);
          break;
        case BaselineMethod::WgfVi:
          dt_used = cfg.wgf_dt;
          mix = wgf_step(mix, counted, cfg.wgf_dt, cfg.weight_floor);
          break;
        case BaselineMethod::Bbvi:
          mix = bbvi_step(mix, counted.phi, cfg.bbvi_samples, cfg.dt_policy, rng,
                          &dt_used, cfg.weight_floor);
          break;
      }
    } catch (const PositivityLost&) {
      ++trace.positivity_events;
      break;
    } catch (const Divergence&) {
      trace.diverged = true;
      break;
    }
    trace.dt_history.push_back(dt_used);
    trace.weights_history.push_back(mix.weights);
    trace.residuals.push_back(analytic_residuals(mix, derivs));
    if (on_iteration) on_iteration(iter, mix);
  }
  trace.final_mixture = mix;
  trace.phi_eval_count = phi_evals;
  return trace;
}

McmcTrace run_mcmc(const ForwardProblem& problem, const McmcConfig& cfg,
                   const std::function<void(int, const Matrix&)>& on_sweep) {
  const Eigen::Index n = problem.n_theta;
  require(cfg.walkers >= 2 * n + 2, "run_mcmc: too few walkers");
  const InitDistribution& init = cfg.init ? *cfg.init : problem.init_distribution;

  long evals = 0;
  auto phi = [&](const Vector& t) {
    ++evals;
    return problem.phi(t);
  };

  Rng rng(cfg.rng_seed);
  Matrix walkers(cfg.walkers, n);
  Vector vals(cfg.walkers);
  for (int j = 0; j < cfg.walkers; ++j) {
    walkers.row(j) = (init.mean + init.cov_chol * rng.normal_vector(n)).transpose();
    vals[j] = phi(walkers.row(j).transpose());
  }

  McmcTrace trace;
  long accepted = 0;
  const int keep_from = std::max(0, cfg.n_sweeps - cfg.keep_last);
  std::vector<Matrix> kept;
  for (int sweep = 1; sweep <= cfg.n_sweeps; ++sweep) {
    accepted += stretch_move(walkers, vals, phi, cfg.stretch_a, rng);
    if (sweep > keep_from) kept.push_back(walkers);
    if (on_sweep) on_sweep(sweep, walkers);
  }
  trace.kept_particles.resize(static_cast<Eigen::Index>(kept.size()) * cfg.walkers, n);
  for (std::size_t i = 0; i < kept.size(); ++i) {
    trace.kept_particles.middleRows(static_cast<Eigen::Index>(i) * cfg.walkers,
                                    cfg.walkers) = kept[i];
  }
  trace.acceptance_rate =
      static_cast<double>(accepted) / (static_cast<double>(cfg.n_sweeps) * cfg.walkers);
  trace.phi_eval_count = evals;
  return trace;
}

}  // namespace dfgmvi
