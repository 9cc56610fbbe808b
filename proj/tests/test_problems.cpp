#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "dfgmvi/metrics.hpp"
#include "dfgmvi/problems.hpp"
#include "oracles.hpp"

using namespace dfgmvi;

namespace {

/// Grid local minima of a 2D function (strictly below all 8 neighbors).
std::vector<Vector> local_minima_2d(const std::function<double(const Vector&)>& f,
                                    double lo, double hi, int n) {
  Matrix vals(n, n);
  Vector x(2);
  for (int i = 0; i < n; ++i) {
    x[0] = lo + (hi - lo) * i / (n - 1);
    for (int j = 0; j < n; ++j) {
      x[1] = lo + (hi - lo) * j / (n - 1);
      vals(i, j) = f(x);
    }
  }
  std::vector<Vector> minima;
  for (int i = 1; i + 1 < n; ++i) {
    for (int j = 1; j + 1 < n; ++j) {
      bool is_min = true;
      for (int di = -1; di <= 1 && is_min; ++di)
        for (int dj = -1; dj <= 1; ++dj) {
          if (di == 0 && dj == 0) continue;
          if (vals(i + di, j + dj) <= vals(i, j)) {
            is_min = false;
            break;
          }
        }
      if (is_min) {
        Vector m(2);
        m << lo + (hi - lo) * i / (n - 1), lo + (hi - lo) * j / (n - 1);
        minima.push_back(m);
      }
    }
  }
  return minima;
}

}  // namespace

TEST_CASE("augmented_map identity example") {
  auto G = [](const Vector& t) { return t; };
  auto p = augmented_map(G, Vector::Zero(2), Matrix::Identity(2, 2), Vector::Zero(2),
                         Matrix::Identity(2, 2), 2, 2);
  Rng rng(3);
  Vector t = rng.normal_vector(2);
  Vector F = p.F(t);
  CHECK((F.head(2) + t).norm() <= 1e-15);
  CHECK((F.tail(2) + t).norm() <= 1e-15);
  CHECK(p.phi(t) == doctest::Approx(t.squaredNorm()).epsilon(1e-12));
}

TEST_CASE("augmented_map perfect fit gives zero energy") {
  Vector r0 = Vector::Constant(2, 0.7);
  Vector y(3);
  y << 1, 2, 3;
  auto G = [y, r0](const Vector& t) { return Vector(y + (t - r0).sum() * Vector::Ones(3)); };
  Matrix se = 0.25 * Matrix::Identity(3, 3);
  Matrix s0 = 4.0 * Matrix::Identity(2, 2);
  auto p = augmented_map(G, y, se, r0, s0, 2, 3);
  CHECK(p.phi(r0) == doctest::Approx(0.0));
}

TEST_CASE("bimodal_1d case A energy value") {
  auto p = bimodal_1d('A');
  CHECK(p.phi(Vector::Constant(1, 1.0)) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("bimodal_1d reference has two modes, right one heavier") {
  auto p = bimodal_1d('A');
  REQUIRE(p.reference);
  const auto& ref = *p.reference;
  CHECK(ref.integral() == doctest::Approx(1.0).epsilon(1e-3));

  auto density = [&](double x) { return ref.interpolate(Vector::Constant(1, x)); };
  double left_mode = oracles::grid_argmax_1d(density, -2.0, -0.2, 4000);
  double right_mode = oracles::grid_argmax_1d(density, 0.2, 2.0, 4000);
  CHECK(left_mode == doctest::Approx(-1.0).epsilon(0.05));
  CHECK(right_mode == doctest::Approx(1.0).epsilon(0.05));

  double mass_left = 0.0, mass_right = 0.0;
  for (int i = 0; i < ref.axes[0].n; ++i) {
    (ref.axes[0].point(i) < 0 ? mass_left : mass_right) += ref.values[i];
  }
  CHECK(mass_right > mass_left);

  // Case D: modes nearly merged; the density between them stays comparable
  // to the peaks, unlike case A where the valley is essentially empty.
  auto pd = bimodal_1d('D');
  const auto& refd = *pd.reference;
  auto dens_d = [&](double x) { return refd.interpolate(Vector::Constant(1, x)); };
  double peak = dens_d(oracles::grid_argmax_1d(dens_d, -2.0, 2.0, 4000));
  CHECK(dens_d(0.0) / peak > 0.3);
  auto dens_a = [&](double x) { return ref.interpolate(Vector::Constant(1, x)); };
  CHECK(dens_a(0.0) / dens_a(right_mode) < 1e-4);
}

TEST_CASE("multi_2d case A matches the linear-Gaussian solution") {
  auto p = multi_2d('A');
  REQUIRE(p.reference_mixture);
  Matrix A(2, 2);
  A << 1, 1, 1, 2;
  Vector y(2);
  y << 0, 1;
  Vector mstar = A.colPivHouseholderQr().solve(y);
  CHECK(mstar[0] == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(mstar[1] == doctest::Approx(1.0).epsilon(1e-12));
  const auto& post = *p.reference_mixture;
  CHECK((post.components[0].mean - mstar).norm() <= 1e-12);
  CHECK((post.components[0].covariance() - (A.transpose() * A).inverse()).norm() <=
        1e-12);
  CHECK(p.phi(mstar) == doctest::Approx(0.0));
}

TEST_CASE("multi_2d case B has four modes near the analytic anchors") {
  auto p = multi_2d('B');
  auto minima = local_minima_2d(p.phi, -4.0, 4.0, 400);
  REQUIRE(minima.size() == 4);
  const double r = std::sqrt(4.2297);
  std::vector<Vector> anchors;
  for (auto [a, b] : {std::pair{r, 0.0}, {-r, 0.0}, {0.0, r}, {0.0, -r}}) {
    Vector v(2);
    v << a, b;
    anchors.push_back(v);
  }
  for (const auto& anchor : anchors) {
    double best = 1e9;
    for (const auto& m : minima) best = std::min(best, (m - anchor).norm());
    CHECK(best < 0.3);
  }
}

TEST_CASE("multi_2d case C is flat on the unit circle") {
  auto p = multi_2d('C');
  for (double ang : {0.0, 0.4, 1.1, 2.2, 3.9, 5.6}) {
    Vector t(2);
    t << std::cos(ang), std::sin(ang);
    CHECK(p.phi(t) == doctest::Approx(0.0));
  }
}

TEST_CASE("every catalog energy equals half the residual norm squared") {
  Rng rng(7);
  for (const auto& id : catalog_ids()) {
    auto p = problem_by_id(id);
    if (!p.has_forward_map) continue;
    for (int i = 0; i < 100; ++i) {
      Vector t = 2.0 * rng.normal_vector(p.n_theta);
      double direct = 0.5 * p.F(t).squaredNorm();
      CHECK(std::abs(p.phi(t) - direct) <= 1e-12 * std::max(1.0, std::abs(direct)));
    }
  }
}

TEST_CASE("analytic derivatives agree with finite differences") {
  Rng rng(11);
  for (const auto& id : catalog_ids()) {
    auto p = problem_by_id(id);
    if (!p.grad || !p.hess) continue;
    for (int i = 0; i < 20; ++i) {
      Vector t = rng.normal_vector(p.n_theta);
      Vector fd = oracles::fd_gradient(p.phi, t);
      CHECK((p.grad(t) - fd).cwiseAbs().maxCoeff() <
            1e-5 * std::max(1.0, fd.cwiseAbs().maxCoeff()));
    }
    for (int i = 0; i < 5; ++i) {
      Vector t = 0.8 * rng.normal_vector(p.n_theta);
      Matrix fd = oracles::fd_hessian(p.phi, t);
      CHECK((p.hess(t) - fd).cwiseAbs().maxCoeff() <
            1e-4 * std::max(1.0, fd.cwiseAbs().maxCoeff()));
    }
  }
}

TEST_CASE("lift_100d structural identities") {
  auto base = multi_2d('B');
  auto lifted = lift_100d('B', 100);
  CHECK(lifted.n_theta == 100);
  CHECK(lifted.n_x == base.n_x + 98);

  Rng rng(13);
  for (int i = 0; i < 20; ++i) {
    Vector t2 = rng.normal_vector(2);
    Vector full(100);
    full.head(2) = t2;
    full.tail(98) = Vector::Constant(98, t2.sum());  // on the zero-penalty manifold
    CHECK(lifted.phi(full) == doctest::Approx(base.phi(t2)).epsilon(1e-12));

    Vector off = rng.normal_vector(100);
    double penalty = (off.tail(98).array() - off.head(2).sum()).matrix().squaredNorm();
    CHECK(lifted.phi(off) ==
          doctest::Approx(base.phi(off.head(2)) + 0.5 * penalty).epsilon(1e-12));
  }

  auto degenerate = lift_100d('B', 2);
  Vector t = rng.normal_vector(2);
  CHECK((degenerate.F(t) - base.F(t)).norm() == 0.0);

  Vector x = 0.3 * rng.normal_vector(100);
  CHECK((lifted.grad(x) - oracles::fd_gradient(lifted.phi, x)).cwiseAbs().maxCoeff() <
        1e-4);
  CHECK((lifted.hess(x) - oracles::fd_hessian(lifted.phi, x)).cwiseAbs().maxCoeff() <
        1e-3);
}

TEST_CASE("lift_100d case A marginal matches the 2D reference by sampling") {
  auto base = multi_2d('A');
  REQUIRE(base.reference);
  const auto& post = *base.reference_mixture;

  // The lifted case-A posterior factorizes as rho_2d(t) * N(tc; K t, I), so
  // exact joint samples come from sampling the chain.
  Rng rng(17);
  const int N = 1000000;
  Matrix samples(N, 2);
  const Matrix L2 = post.components[0].cov_chol;
  const Vector m2 = post.components[0].mean;
  for (int i = 0; i < N; ++i) {
    Vector t2 = m2 + L2 * rng.normal_vector(2);
    samples.row(i) = t2.transpose();  // (theta_1, theta_2) marginal of the joint draw
  }
  GridDensity est = kde(samples, base.reference->axes, 0.5);
  CHECK(tv_distance(est, *base.reference) < 0.05);
}

TEST_CASE("guidelines targets") {
  auto [gm, circle] = guidelines_targets();
  CHECK_THROWS_AS(gm.F(Vector::Zero(2)), UnsupportedForm);
  CHECK_FALSE(gm.has_forward_map);

  // Direct substitution at the second target mean.
  Vector m2(2);
  m2 << 2, 1;
  auto npdf2 = [&](const Vector& x, const Vector& m) {
    return std::exp(-0.5 * (x - m).squaredNorm() / 0.25) /
           (2.0 * std::numbers::pi * 0.25);
  };
  Vector m1(2), m3(2);
  m1 << 1, 2;
  m3 << -1, -1;
  double rho = 0.3 * npdf2(m2, m1) + 0.4 * npdf2(m2, m2) + 0.3 * npdf2(m2, m3);
  CHECK(gm.phi(m2) == doctest::Approx(-std::log(rho)).epsilon(1e-12));

  REQUIRE(gm.reference);
  CHECK(gm.reference->integral() == doctest::Approx(1.0).epsilon(1e-3));

  Vector on_circle(2);
  on_circle << std::cos(0.3), std::sin(0.3);
  CHECK(circle.phi(on_circle) == doctest::Approx(0.0));
  CHECK(circle.id == "guidelines:circle");
}

TEST_CASE("reference grids are nonnegative, normalized, and symmetric for case C") {
  auto p = multi_2d('C');
  REQUIRE(p.reference);
  const auto& ref = *p.reference;
  CHECK(ref.values.minCoeff() >= 0.0);
  CHECK(ref.integral() == doctest::Approx(1.0).epsilon(1e-3));
  for (double r : {0.5, 1.0, 1.5}) {
    Vector a(2), b(2);
    a << r, 0.0;
    b << 0.0, r;
    CHECK(ref.interpolate(a) == doctest::Approx(ref.interpolate(b)).epsilon(5e-3));
  }
}

TEST_CASE("problem_by_id catalog") {
  CHECK(problem_by_id("bimodal1d:B").id == "bimodal1d:B");
  CHECK(problem_by_id("multi2d:E").n_x == 3);
  CHECK(problem_by_id("lift100d:C").n_theta == 100);
  CHECK_THROWS_AS(problem_by_id("nope"), std::invalid_argument);
  CHECK(catalog_ids().size() == 16);
}
