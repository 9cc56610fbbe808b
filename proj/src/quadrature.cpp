#include "dfgmvi/quadrature.hpp"

#include <cmath>
#include <limits>

namespace dfgmvi {

namespace {
void require(bool cond, const char* msg) {
  if (!cond) throw std::invalid_argument(msg);
}
}  // namespace

std::vector<Vector> quadrature_points(const Vector& m, const Matrix& L, double alpha) {
  require(alpha > 0.0, "quadrature_points: alpha must be positive");
  require(L.rows() == m.size() && L.cols() == m.size(),
          "quadrature_points: factor/mean mismatch");
  const Eigen::Index n = m.size();
  std::vector<Vector> pts;
  pts.reserve(2 * n + 1);
  pts.push_back(m);
  for (Eigen::Index i = 0; i < n; ++i) pts.push_back(m + alpha * L.col(i));
  for (Eigen::Index i = 0; i < n; ++i) pts.push_back(m - alpha * L.col(i));
  return pts;
}

QuadratureData assemble_quadrature(const std::vector<Vector>& F_values, double alpha) {
  require(alpha > 0.0, "assemble_quadrature: alpha must be positive");
  require(F_values.size() >= 3 && F_values.size() % 2 == 1,
          "assemble_quadrature: need 2N+1 values");
  const Eigen::Index n = static_cast<Eigen::Index>((F_values.size() - 1) / 2);
  const Eigen::Index nx = F_values.front().size();
  for (const auto& f : F_values) {
    require(f.size() == nx, "assemble_quadrature: ragged forward-map values");
  }

  QuadratureData q;
  q.alpha = alpha;
  q.c = F_values[0];
  q.B.resize(nx, n);
  q.A.resize(nx, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vector& fp = F_values[1 + i];
    const Vector& fm = F_values[1 + n + i];
    q.B.col(i) = (fp - fm) / (2.0 * alpha);
    q.A.col(i) = (fp + fm - 2.0 * q.c) / (2.0 * alpha * alpha);
  }
  return q;
}

double expect_phi(const QuadratureData& q) { return 0.5 * q.c.squaredNorm(); }

Vector expect_grad_phi(const Matrix& L, const QuadratureData& q) {
  Vector btc = q.B.transpose() * q.c;
  return L.triangularView<Eigen::Lower>().transpose().solve(btc);
}

Matrix expect_hess_phi(const Matrix& L, const QuadratureData& q) {
  Matrix M = q.B.transpose() * q.B;
  M.diagonal() += 6.0 * q.A.colwise().squaredNorm().transpose();
  // L^{-T} M L^{-1} via two triangular solves.
  Matrix Y = L.triangularView<Eigen::Lower>().transpose().solve(M);
  Matrix H = L.triangularView<Eigen::Lower>()
                 .transpose()
                 .solve(Y.transpose())
                 .transpose();
  return 0.5 * (H + H.transpose());
}

std::pair<double, Vector> gm_expect_meanpoint(const GaussianMixture& mix, int k) {
  require(k >= 0 && k < mix.size(), "gm_expect_meanpoint: component out of range");
  const Vector& m = mix.components[k].mean;
  return {gm_logpdf(mix, m), gm_score(mix, m)};
}

Matrix gm_expect_hess_log(const GaussianMixture& mix, int k) {
  require(k >= 0 && k < mix.size(), "gm_expect_hess_log: component out of range");
  const Eigen::Index n = mix.dim();
  const Vector& mk = mix.components[k].mean;

  // Responsibilities r_i = w_i N_i(m_k) / rho(m_k), computed in log space.
  const int K = mix.size();
  Vector logterm(K);
  for (int i = 0; i < K; ++i) {
    const auto& c = mix.components[i];
    logterm[i] = (mix.weights[i] > 0.0 ? std::log(mix.weights[i])
                                       : -std::numeric_limits<double>::infinity()) +
                 gaussian_logpdf(mk, c.mean, c.cov_chol);
  }
  double mx = logterm.maxCoeff();
  Vector r(K);
  for (int i = 0; i < K; ++i) {
    r[i] = std::isfinite(logterm[i]) ? std::exp(logterm[i] - mx) : 0.0;
  }
  r /= r.sum();

  const auto v = component_scores(mix, mk);

  // sum_{i<j} r_i r_j (v_i - v_j)(v_i - v_j)^T reduces to the responsibility-
  // weighted covariance of the v_i, which keeps the cost linear in K.
  Matrix S = Matrix::Zero(n, n);
  Vector vbar = Vector::Zero(n);
  for (int i = 0; i < K; ++i) {
    if (r[i] <= 0.0) continue;
    S.noalias() += r[i] * (v[i] * v[i].transpose());
    vbar += r[i] * v[i];
  }
  S.noalias() -= vbar * vbar.transpose();

  const Matrix& L = mix.components[k].cov_chol;
  Matrix Linv = L.triangularView<Eigen::Lower>().solve(Matrix::Identity(n, n));
  Matrix H = S - Linv.transpose() * Linv;
  return 0.5 * (H + H.transpose());
}

}  // namespace dfgmvi
