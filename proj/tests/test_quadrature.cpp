#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "dfgmvi/quadrature.hpp"
#include "oracles.hpp"

using namespace dfgmvi;

namespace {

QuadratureData quad_of(const std::function<Vector(const Vector&)>& F, const Vector& m,
                       const Matrix& L, double alpha) {
  auto pts = quadrature_points(m, L, alpha);
  std::vector<Vector> vals;
  vals.reserve(pts.size());
  for (const auto& p : pts) vals.push_back(F(p));
  return assemble_quadrature(vals, alpha);
}

GaussianMixture single(const Vector& m, const Matrix& L) {
  GaussianMixture mix;
  mix.weights = Vector::Ones(1);
  mix.components.push_back({m, L});
  return mix;
}

}  // namespace

TEST_CASE("quadrature_points 1D unit stencil") {
  auto pts = quadrature_points(Vector::Zero(1), Matrix::Identity(1, 1), 1.0);
  REQUIRE(pts.size() == 3);
  CHECK(pts[0][0] == 0.0);
  CHECK(pts[1][0] == 1.0);
  CHECK(pts[2][0] == -1.0);
}

TEST_CASE("quadrature_points symmetry") {
  Vector m = Vector::Constant(2, 1.0);
  auto pts = quadrature_points(m, Matrix::Identity(2, 2), 1e-3);
  REQUIRE(pts.size() == 5);
  for (int i = 0; i < 2; ++i) {
    Vector diff = pts[1 + i] - pts[3 + i];
    CHECK((diff - 2e-3 * Matrix::Identity(2, 2).col(i)).norm() <= 1e-15);
  }
  Vector mean = Vector::Zero(2);
  for (int i = 1; i < 5; ++i) mean += pts[i];
  CHECK((mean / 4 - m).norm() <= 1e-15);
}

TEST_CASE("assemble_quadrature on a 1D quadratic is exact") {
  auto F = [](const Vector& t) { return Vector::Constant(1, t[0] * t[0]); };
  auto q = quad_of(F, Vector::Constant(1, 1.0), Matrix::Identity(1, 1), 1e-3);
  CHECK(q.c[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(q.B(0, 0) == doctest::Approx(2.0).epsilon(1e-9));
  CHECK(q.A(0, 0) == doctest::Approx(1.0).epsilon(1e-7));
}

TEST_CASE("assemble_quadrature on linear and constant maps") {
  Rng rng(7);
  Matrix M(3, 2);
  M << 1, 2, -1, 0.5, 0.25, -2;
  Vector d(3);
  d << 0.1, -0.3, 2.0;
  Matrix L = oracles::random_lower_triangular(rng, 2);
  auto F = [&](const Vector& t) { return Vector(M * t + d); };
  auto q = quad_of(F, rng.normal_vector(2), L, 1e-3);
  CHECK((q.B - M * L).cwiseAbs().maxCoeff() < 1e-10);
  CHECK(q.A.cwiseAbs().maxCoeff() < 1e-7);

  auto Fc = [&](const Vector&) { return d; };
  auto qc = quad_of(Fc, rng.normal_vector(2), L, 1e-3);
  CHECK((qc.c - d).norm() == 0.0);
  CHECK(qc.B.cwiseAbs().maxCoeff() == 0.0);
  CHECK(qc.A.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("expect_phi") {
  QuadratureData q;
  q.alpha = 1e-3;
  q.c = Vector::Zero(4);
  CHECK(expect_phi(q) == 0.0);
  q.c = Vector(2);
  q.c << 3, 4;
  CHECK(expect_phi(q) == doctest::Approx(12.5));

  auto F = [](const Vector& t) { return Vector::Constant(1, t[0] * t[0]); };
  auto q2 = quad_of(F, Vector::Constant(1, 1.0), Matrix::Identity(1, 1), 1e-3);
  CHECK(expect_phi(q2) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("expect_grad_phi") {
  auto Flin = [](const Vector& t) { return t; };
  auto q = quad_of(Flin, Vector::Constant(1, 2.0), Matrix::Identity(1, 1), 1e-3);
  CHECK(expect_grad_phi(Matrix::Identity(1, 1), q)[0] == doctest::Approx(2.0).epsilon(1e-12));

  auto Fsq = [](const Vector& t) { return Vector::Constant(1, t[0] * t[0]); };
  auto q2 = quad_of(Fsq, Vector::Constant(1, 1.0), Matrix::Identity(1, 1), 1e-3);
  CHECK(expect_grad_phi(Matrix::Identity(1, 1), q2)[0] == doctest::Approx(2.0).epsilon(1e-9));

  QuadratureData q3;
  q3.alpha = 1e-3;
  q3.c = Vector::Zero(2);
  q3.B = Matrix::Random(2, 2);
  q3.A = Matrix::Zero(2, 2);
  CHECK(expect_grad_phi(Matrix::Identity(2, 2), q3).norm() == 0.0);
}

TEST_CASE("expect_hess_phi on 1D examples") {
  auto Flin = [](const Vector& t) { return t; };
  auto q = quad_of(Flin, Vector::Constant(1, 2.0), Matrix::Identity(1, 1), 1e-3);
  CHECK(expect_hess_phi(Matrix::Identity(1, 1), q)(0, 0) == doctest::Approx(1.0).epsilon(1e-10));

  // Quadratic: retained positive part 6*1 + 4 = 10 (the dropped cross term
  // would have brought the full quadratic-model value to 12).
  auto Fsq = [](const Vector& t) { return Vector::Constant(1, t[0] * t[0]); };
  auto q2 = quad_of(Fsq, Vector::Constant(1, 1.0), Matrix::Identity(1, 1), 1e-3);
  CHECK(expect_hess_phi(Matrix::Identity(1, 1), q2)(0, 0) == doctest::Approx(10.0).epsilon(1e-6));
}

TEST_CASE("expect_hess_phi recovers M^T M for affine maps under any factor") {
  Rng rng(13);
  for (int trial = 0; trial < 10; ++trial) {
    int n = 2 + static_cast<int>(rng.index(3));
    int nx = n + static_cast<int>(rng.index(3));
    Matrix M(nx, n);
    for (int i = 0; i < nx; ++i)
      for (int j = 0; j < n; ++j) M(i, j) = rng.normal();
    Vector d = rng.normal_vector(nx);
    Matrix L = oracles::random_lower_triangular(rng, n);
    auto F = [&](const Vector& t) { return Vector(M * t + d); };
    auto q = quad_of(F, rng.normal_vector(n), L, 1e-3);
    Matrix H = expect_hess_phi(L, q);
    CHECK((H - M.transpose() * M).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("whitened quadratic model is recovered across the alpha range") {
  // Integer coefficients keep the central differences exactly representable
  // at dyadic radii; the decimal radii stay within rounding of the same
  // values.
  Rng rng(19);
  const int n = 3, nx = 4;
  Matrix A(nx, n), B(nx, n);
  Vector c(nx);
  for (int i = 0; i < nx; ++i) {
    c[i] = static_cast<double>(static_cast<int>(rng.index(7)) - 3);
    for (int j = 0; j < n; ++j) {
      A(i, j) = static_cast<double>(static_cast<int>(rng.index(7)) - 3);
      B(i, j) = static_cast<double>(static_cast<int>(rng.index(7)) - 3);
    }
  }
  auto F = [&](const Vector& t) {
    return Vector(A * t.cwiseProduct(t) + B * t + c);
  };
  for (double alpha : {std::pow(2.0, -16), 1e-3, std::pow(2.0, -10), 1e-2,
                       std::pow(2.0, -4)}) {
    auto q = quad_of(F, Vector::Zero(n), Matrix::Identity(n, n), alpha);
    CHECK((q.c - c).cwiseAbs().maxCoeff() <= 1e-8);
    CHECK((q.B - B).cwiseAbs().maxCoeff() <= 1e-8);
    CHECK((q.A - A).cwiseAbs().maxCoeff() <= 1e-8);

    Vector g = expect_grad_phi(Matrix::Identity(n, n), q);
    CHECK((g - B.transpose() * c).cwiseAbs().maxCoeff() <= 1e-8);
    Matrix H = expect_hess_phi(Matrix::Identity(n, n), q);
    Matrix closed = B.transpose() * B;
    closed.diagonal() += 6.0 * A.colwise().squaredNorm().transpose();
    CHECK((H - closed).cwiseAbs().maxCoeff() <= 1e-8);
  }
}

TEST_CASE("expect_hess_phi is symmetric positive semidefinite") {
  Rng rng(29);
  for (int trial = 0; trial < 30; ++trial) {
    int n = 1 + static_cast<int>(rng.index(4));
    int nx = 1 + static_cast<int>(rng.index(5));
    QuadratureData q;
    q.alpha = 1e-3;
    q.c = rng.normal_vector(nx);
    q.B.resize(nx, n);
    q.A.resize(nx, n);
    for (int i = 0; i < nx; ++i)
      for (int j = 0; j < n; ++j) {
        q.B(i, j) = rng.normal();
        q.A(i, j) = rng.normal();
      }
    Matrix L = oracles::random_lower_triangular(rng, n);
    Matrix H = expect_hess_phi(L, q);
    CHECK((H - H.transpose()).cwiseAbs().maxCoeff() == 0.0);
    Eigen::SelfAdjointEigenSolver<Matrix> es(H);
    CHECK(es.eigenvalues().minCoeff() >= -1e-12 * std::max(1.0, H.norm()));
  }
}

TEST_CASE("gm_expect_meanpoint") {
  auto mix = single(Vector::Zero(2), Matrix::Identity(2, 2));
  auto [lp, g] = gm_expect_meanpoint(mix, 0);
  CHECK(lp == doctest::Approx(-std::log(2.0 * std::numbers::pi)).epsilon(1e-14));
  CHECK(g.norm() == 0.0);

  GaussianMixture far;
  far.weights = Vector::Constant(2, 0.5);
  far.components = {{Vector::Constant(2, -20.0), Matrix::Identity(2, 2)},
                    {Vector::Constant(2, 20.0), Matrix::Identity(2, 2)}};
  auto [lp1, g1] = gm_expect_meanpoint(far, 0);
  double expected = std::log(0.5) - std::log(2.0 * std::numbers::pi);
  CHECK(std::abs(lp1 - expected) < 1e-10);
  CHECK(g1.norm() < 1e-10);
  CHECK(lp1 == gm_logpdf(far, far.components[0].mean));
  CHECK((g1 - gm_score(far, far.components[0].mean)).norm() == 0.0);
}

TEST_CASE("gm_expect_hess_log single and duplicate components") {
  Matrix C(2, 2);
  C << 2.0, 0.4, 0.4, 1.0;
  Matrix L = cholesky_sqrt(C);
  auto one = single(Vector::Zero(2), L);
  Matrix H1 = gm_expect_hess_log(one, 0);
  CHECK((H1 + C.inverse()).cwiseAbs().maxCoeff() < 1e-12);

  GaussianMixture dup;
  dup.weights = Vector::Constant(2, 0.5);
  dup.components = {{Vector::Zero(2), L}, {Vector::Zero(2), L}};
  Matrix H2 = gm_expect_hess_log(dup, 1);
  CHECK((H2 + C.inverse()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("gm_expect_hess_log scalar substitution oracle") {
  GaussianMixture mix;
  mix.weights = Vector::Constant(2, 0.5);
  mix.components = {{Vector::Constant(1, -1.0), Matrix::Identity(1, 1)},
                    {Vector::Constant(1, 1.0), Matrix::Identity(1, 1)}};
  const double v1 = 0.0, v2 = -2.0;
  const double N1 = oracles::normal_pdf(-1.0, -1.0, 1.0);
  const double N2 = oracles::normal_pdf(-1.0, 1.0, 1.0);
  const double rho = 0.5 * N1 + 0.5 * N2;
  const double S = 0.25 * (v1 - v2) * (v1 - v2) * N1 * N2 / (rho * rho);
  Matrix H = gm_expect_hess_log(mix, 0);
  CHECK(H(0, 0) == doctest::Approx(S - 1.0).epsilon(1e-12));
}

TEST_CASE("gm_expect_hess_log matches the literal pairwise formula") {
  Rng rng(37);
  for (int trial = 0; trial < 10; ++trial) {
    int K = 2 + static_cast<int>(rng.index(4));
    int n = 1 + static_cast<int>(rng.index(3));
    GaussianMixture mix;
    Vector raw(K);
    for (int k = 0; k < K; ++k) raw[k] = rng.uniform(0.2, 1.0);
    mix.weights = raw / raw.sum();
    for (int k = 0; k < K; ++k) {
      mix.components.push_back(
          {2.0 * rng.normal_vector(n), oracles::random_lower_triangular(rng, n)});
    }
    int k = static_cast<int>(rng.index(K));
    const Vector& mk = mix.components[k].mean;

    // Literal double sum over pairs, unstabilized.
    auto v = component_scores(mix, mk);
    Vector dens(K);
    double rho = 0.0;
    for (int i = 0; i < K; ++i) {
      dens[i] = std::exp(
          gaussian_logpdf(mk, mix.components[i].mean, mix.components[i].cov_chol));
      rho += mix.weights[i] * dens[i];
    }
    Matrix S = Matrix::Zero(n, n);
    for (int i = 0; i < K; ++i) {
      for (int j = i + 1; j < K; ++j) {
        Vector d = v[i] - v[j];
        S += mix.weights[i] * mix.weights[j] * dens[i] * dens[j] * (d * d.transpose());
      }
    }
    S /= rho * rho;
    Matrix expected = S - mix.components[k].covariance().inverse();
    Matrix H = gm_expect_hess_log(mix, k);
    CHECK((H - expected).cwiseAbs().maxCoeff() < 1e-9 * std::max(1.0, expected.norm()));

    // Structural premise: H + C_k^{-1} is symmetric PSD.
    Matrix shifted = H + mix.components[k].covariance().inverse();
    Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (shifted + shifted.transpose()));
    CHECK(es.eigenvalues().minCoeff() >= -1e-10 * std::max(1.0, shifted.norm()));
  }
}

TEST_CASE("weighted average of the exact second term telescopes") {
  // Monte-Carlo estimate of E_{N_k}[ sum_i w_i N_i C_i^{-1} / rho ] on a 1D
  // mixture; its weight-averaged value must equal sum_k w_k C_k^{-1}.
  Rng rng(43);
  GaussianMixture mix;
  mix.weights = Vector(3);
  mix.weights << 0.2, 0.5, 0.3;
  mix.components = {{Vector::Constant(1, -1.5), Matrix::Constant(1, 1, 0.9)},
                    {Vector::Constant(1, 0.5), Matrix::Constant(1, 1, 1.3)},
                    {Vector::Constant(1, 2.0), Matrix::Constant(1, 1, 0.7)}};
  const int samples = 100000;
  double averaged = 0.0;
  for (int k = 0; k < 3; ++k) {
    const auto& comp = mix.components[k];
    double est = 0.0;
    for (int s = 0; s < samples; ++s) {
      double theta = comp.mean[0] + comp.cov_chol(0, 0) * rng.normal();
      double num = 0.0, rho = 0.0;
      for (int i = 0; i < 3; ++i) {
        double sd = mix.components[i].cov_chol(0, 0);
        double ni = oracles::normal_pdf(theta, mix.components[i].mean[0], sd);
        num += mix.weights[i] * ni / (sd * sd);
        rho += mix.weights[i] * ni;
      }
      est += num / rho;
    }
    averaged += mix.weights[k] * est / samples;
  }
  double exact = 0.0;
  for (int k = 0; k < 3; ++k) {
    double sd = mix.components[k].cov_chol(0, 0);
    exact += mix.weights[k] / (sd * sd);
  }
  CHECK(averaged == doctest::Approx(exact).epsilon(0.02));
}
