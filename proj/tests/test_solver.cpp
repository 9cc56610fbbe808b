#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "dfgmvi/metrics.hpp"
#include "dfgmvi/problems.hpp"
#include "dfgmvi/solver.hpp"
#include "oracles.hpp"

using namespace dfgmvi;

namespace {

double mixture_distance(const GaussianMixture& a, const GaussianMixture& b) {
  double d = (a.weights - b.weights).cwiseAbs().sum();
  for (int k = 0; k < a.size(); ++k) {
    d += (a.components[k].mean - b.components[k].mean).norm();
    d += (a.components[k].cov_chol - b.components[k].cov_chol).norm();
  }
  return d;
}

GaussianMixture case_a_fixed_point() {
  Matrix A(2, 2);
  A << 1, 1, 1, 2;
  Vector y(2);
  y << 0, 1;
  GaussianMixture mix;
  mix.weights = Vector::Ones(1);
  mix.components.push_back({A.colPivHouseholderQr().solve(y),
                            cholesky_sqrt((A.transpose() * A).inverse())});
  return mix;
}

}  // namespace

TEST_CASE("normalize_weights examples") {
  CHECK((normalize_weights(Vector::Zero(2), 1e-8) - Vector::Constant(2, 0.5)).norm() ==
        0.0);

  Vector log_w(2);
  log_w << std::log(1.0 - 1e-12), std::log(1e-12);
  Vector w = normalize_weights(log_w, 1e-8);
  CHECK(w[1] == doctest::Approx(1e-8).epsilon(1e-6));
  CHECK(w[0] == doctest::Approx(1.0 - 1e-8).epsilon(1e-12));
  CHECK(w.sum() == doctest::Approx(1.0).epsilon(1e-15));

  Rng rng(3);
  Vector base = rng.normal_vector(5);
  Vector shifted = base.array() + 17.25;
  CHECK((normalize_weights(base, 1e-8) - normalize_weights(shifted, 1e-8))
            .cwiseAbs()
            .maxCoeff() < 1e-14);
}

TEST_CASE("step leaves the linear-Gaussian fixed point unchanged") {
  auto problem = multi_2d('A');
  auto mix = case_a_fixed_point();
  SolverConfig cfg;
  cfg.K = 1;
  cfg.dt = 0.5;
  auto next = step(mix, problem.F, cfg);
  CHECK(mixture_distance(next, mix) < 1e-10);
}

TEST_CASE("step is first-order in dt") {
  auto problem = multi_2d('B');
  SolverConfig cfg;
  cfg.K = 3;
  cfg.rng_seed = 5;
  auto mix = initial_mixture(problem, cfg);

  cfg.dt = 1e-2;
  double d_coarse = mixture_distance(step(mix, problem.F, cfg), mix);
  cfg.dt = 1e-3;
  double d_fine = mixture_distance(step(mix, problem.F, cfg), mix);
  CHECK(d_coarse / d_fine == doctest::Approx(10.0).epsilon(0.25));
}

TEST_CASE("covariance refactorization survives 200 steps on the banana") {
  auto problem = multi_2d('E');
  SolverConfig cfg;
  cfg.K = 10;
  cfg.dt = 0.5;
  cfg.n_iters = 200;
  cfg.rng_seed = 2;
  cfg.final_residuals = false;
  CHECK_NOTHROW(run(problem, cfg));
}

TEST_CASE("weights stay on the simplex through steps") {
  auto problem = multi_2d('C');
  SolverConfig cfg;
  cfg.K = 6;
  cfg.rng_seed = 9;
  auto mix = initial_mixture(problem, cfg);
  for (int i = 0; i < 20; ++i) {
    mix = step(mix, problem.F, cfg);
    CHECK(mix.weights.sum() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(mix.weights.minCoeff() >= 0.0);
  }
}

TEST_CASE("run with zero iterations returns only the initial state") {
  auto problem = bimodal_1d('B');
  SolverConfig cfg;
  cfg.K = 4;
  cfg.n_iters = 0;
  cfg.rng_seed = 1;
  auto trace = run(problem, cfg);
  CHECK(trace.weights_history.size() == 1);
  CHECK(trace.f_eval_count == 0);
  CHECK(trace.snapshots.count(0) == 1);
  CHECK(mixture_distance(trace.final_mixture, trace.snapshots.at(0)) == 0.0);
}

TEST_CASE("equal seeds give bit-identical traces") {
  auto problem = multi_2d('D');
  SolverConfig cfg;
  cfg.K = 5;
  cfg.n_iters = 30;
  cfg.rng_seed = 42;
  cfg.snapshot_every = 10;
  auto t1 = run(problem, cfg);
  auto t2 = run(problem, cfg);
  REQUIRE(t1.weights_history.size() == t2.weights_history.size());
  for (std::size_t i = 0; i < t1.weights_history.size(); ++i) {
    CHECK((t1.weights_history[i].array() == t2.weights_history[i].array()).all());
  }
  CHECK(mixture_to_json(t1.final_mixture) == mixture_to_json(t2.final_mixture));

  cfg.threads = 2;  // parallel evaluation must not change results
  auto t3 = run(problem, cfg);
  CHECK(mixture_to_json(t3.final_mixture) == mixture_to_json(t1.final_mixture));

  cfg.rng_seed = 43;
  auto t4 = run(problem, cfg);
  CHECK(mixture_to_json(t4.final_mixture) != mixture_to_json(t1.final_mixture));
}

TEST_CASE("forward evaluation count matches the stencil cost") {
  auto problem = multi_2d('B');
  SolverConfig cfg;
  cfg.K = 7;
  cfg.n_iters = 13;
  cfg.rng_seed = 4;
  auto trace = run(problem, cfg);
  CHECK(trace.f_eval_count == (2 * 2 + 1) * 7 * 13);
  CHECK(trace.diag_f_eval_count == (2 * 2 + 1) * 7);  // end-of-run residuals
  CHECK(trace.residuals.size() == 14);
  CHECK(trace.wall_ms.size() == 13);
}

TEST_CASE("K=1 step reduces to the Gaussian flow discretization") {
  auto problem = multi_2d('D');
  SolverConfig cfg;
  cfg.K = 1;
  cfg.dt = 0.4;
  cfg.rng_seed = 8;
  auto mix = initial_mixture(problem, cfg);
  auto next = step(mix, problem.F, cfg);

  // Manual Euler update of the Gaussian natural gradient flow with the same
  // derivative-free quadrature data.
  long evals = 0;
  auto quads = detail::component_quadratures(mix, problem.F, cfg, evals);
  const Matrix& L = mix.components[0].cov_chol;
  Matrix P = (L * L.transpose()).inverse();
  Matrix P_new = (1.0 - cfg.dt) * P + cfg.dt * expect_hess_phi(L, quads[0]);
  Matrix C_new = P_new.inverse();
  Vector m_new = mix.components[0].mean -
                 cfg.dt * C_new * expect_grad_phi(L, quads[0]);

  CHECK((next.components[0].covariance() - C_new).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((next.components[0].mean - m_new).cwiseAbs().maxCoeff() < 1e-10);
  CHECK(next.weights[0] == 1.0);
}

TEST_CASE("K=1 linear-Gaussian run decays geometrically to the posterior") {
  auto problem = multi_2d('A');
  SolverConfig cfg;
  cfg.K = 1;
  cfg.n_iters = 120;
  cfg.rng_seed = 12;
  cfg.snapshot_every = 1;
  auto trace = run(problem, cfg);

  const auto& post = *problem.reference_mixture;
  Vector mstar = post.components[0].mean;
  std::vector<double> errs;
  for (int it : {20, 40, 60}) {
    errs.push_back((trace.snapshots.at(it).components[0].mean - mstar).norm());
  }
  CHECK(errs[1] / errs[0] < 0.1);  // much faster than halving per 20 steps
  CHECK(errs[2] / errs[1] < 0.1);
  double final_err =
      (trace.final_mixture.components[0].mean - mstar).norm() +
      (trace.final_mixture.components[0].covariance() - post.components[0].covariance())
          .norm();
  CHECK(final_err < 1e-8);
}

TEST_CASE("stationarity residuals vanish at the fixed point and decrease on case B") {
  auto problem = multi_2d('A');
  SolverConfig cfg;
  cfg.K = 1;
  auto rec = stationarity_residuals(case_a_fixed_point(), problem.F, cfg);
  CHECK(rec.max_grad() < 1e-8);
  CHECK(rec.max_hess() < 1e-8);
  CHECK(rec.spread == 0.0);

  auto pb = multi_2d('B');
  SolverConfig cfg_b;
  cfg_b.K = 10;
  cfg_b.n_iters = 200;
  std::vector<double> early, late;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    cfg_b.rng_seed = seed;
    auto trace = run(pb, cfg_b);
    early.push_back(trace.residuals[10].max_grad());
    late.push_back(trace.residuals[200].max_grad());
    CHECK(std::isfinite(trace.residuals[200].spread));
    CHECK(trace.residuals[200].max_hess() >= 0.0);
  }
  std::sort(early.begin(), early.end());
  std::sort(late.begin(), late.end());
  CHECK(late[2] <= early[2]);
}

TEST_CASE("restricted affine invariance over a short run") {
  auto problem = multi_2d('B');
  const Eigen::Index n = 2;
  Matrix T(2, 2);
  T << 1.6, 0.0, -0.7, 0.45;
  Vector d(2);
  d << 0.3, -1.1;
  Matrix Tinv = T.inverse();

  ForwardProblem transformed = problem;
  transformed.F = [&](const Vector& tt) { return problem.F(Tinv * (tt - d)); };

  SolverConfig cfg;
  cfg.K = 3;
  cfg.dt = 0.5;
  cfg.rng_seed = 21;
  auto base = initial_mixture(problem, cfg);
  GaussianMixture mapped;
  mapped.weights = base.weights;
  for (const auto& c : base.components) {
    mapped.components.push_back({T * c.mean + d, T * c.cov_chol});
  }

  for (int it = 0; it < 25; ++it) {
    base = step(base, problem.F, cfg);
    mapped = step(mapped, transformed.F, cfg);
  }
  for (int k = 0; k < cfg.K; ++k) {
    Vector want_m = T * base.components[k].mean + d;
    Matrix want_C = T * base.components[k].covariance() * T.transpose();
    CHECK((mapped.components[k].mean - want_m).norm() <= 1e-6 * (1.0 + want_m.norm()));
    CHECK((mapped.components[k].covariance() - want_C).norm() <=
          1e-6 * (1.0 + want_C.norm()));
    CHECK(std::abs(mapped.weights[k] - base.weights[k]) <= 1e-6);
  }
  (void)n;
}

TEST_CASE("config validation") {
  SolverConfig cfg;
  cfg.dt = 1.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.dt = 0.5;
  cfg.K = 4;
  cfg.weight_floor = 0.3;  // not below 1/K
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.weight_floor = 1e-8;
  CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("bimodal case A with many components covers both modes") {
  auto problem = bimodal_1d('A');
  SolverConfig cfg;
  cfg.K = 40;
  cfg.n_iters = 200;
  cfg.rng_seed = 0;
  auto trace = run(problem, cfg);
  double mass_left = 0.0, mass_right = 0.0;
  for (int k = 0; k < cfg.K; ++k) {
    (trace.final_mixture.components[k].mean[0] < 0 ? mass_left : mass_right) +=
        trace.final_mixture.weights[k];
  }
  CHECK(mass_left >= 0.1);
  CHECK(mass_right >= 0.1);
  auto est = grid_density(trace.final_mixture, problem.reference->axes);
  CHECK(tv_distance(est, *problem.reference) < 0.1);
}
