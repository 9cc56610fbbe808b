#pragma once

#include <utility>
#include <vector>

#include "dfgmvi/mixture.hpp"
#include "dfgmvi/types.hpp"

namespace dfgmvi {

/// Central-difference data extracted from forward-map values at the 2N+1
/// stencil points: c = F(theta_0), columns of B and A are the first and
/// second differences along each factor column.
struct QuadratureData {
  Vector c;      // Nx
  Matrix B;      // Nx x Ntheta
  Matrix A;      // Nx x Ntheta
  double alpha;  // finite-difference radius, > 0
};

/// Stencil around mean m with factor L: theta_0 = m, then m + alpha*L[:,i]
/// for i = 1..N followed by m - alpha*L[:,i], in exactly this order.
std::vector<Vector> quadrature_points(const Vector& m, const Matrix& L, double alpha);

/// Builds c, B, A from forward-map values ordered as quadrature_points output.
QuadratureData assemble_quadrature(const std::vector<Vector>& F_values, double alpha);

/// E[Phi] ~ c^T c / 2.
double expect_phi(const QuadratureData& q);

/// E[grad Phi] ~ L^{-T} B^T c.
Vector expect_grad_phi(const Matrix& L, const QuadratureData& q);

/// E[hess Phi] ~ L^{-T} (6 Diag(A^T A) + B^T B) L^{-1}, symmetrized.
/// Positive semidefinite for every input.
Matrix expect_hess_phi(const Matrix& L, const QuadratureData& q);

/// Mean-point values (log rho(m_k), grad log rho(m_k)) for component k.
std::pair<double, Vector> gm_expect_meanpoint(const GaussianMixture& mix, int k);

/// Hessian expectation of log rho with respect to component k:
/// the cross-component spread matrix evaluated at m_k, minus C_k^{-1}.
/// Adding C_k^{-1} back always yields a symmetric PSD matrix.
Matrix gm_expect_hess_log(const GaussianMixture& mix, int k);

}  // namespace dfgmvi
