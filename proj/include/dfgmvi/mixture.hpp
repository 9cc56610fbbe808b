#pragma once

#include <string>
#include <vector>

#include "dfgmvi/rng.hpp"
#include "dfgmvi/types.hpp"

namespace dfgmvi {

/// One Gaussian component. The covariance is held exclusively through its
/// lower-triangular Cholesky factor L with C = L*L^T; the full C and its
/// inverse are never stored.
struct GaussianComponent {
  Vector mean;
  Matrix cov_chol;

  Eigen::Index dim() const { return mean.size(); }

  /// C = L*L^T, materialized. Intended for tests and diagnostics.
  Matrix covariance() const { return cov_chol * cov_chol.transpose(); }
};

/// Gaussian mixture state: weights on the probability simplex plus K
/// components of one common dimension. Immutable by convention after
/// construction; all operations below are pure functions.
struct GaussianMixture {
  Vector weights;
  std::vector<GaussianComponent> components;

  int size() const { return static_cast<int>(components.size()); }
  Eigen::Index dim() const { return components.empty() ? 0 : components.front().dim(); }

  /// Checks simplex and shared-dimension invariants; throws std::invalid_argument.
  void validate() const;
};

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
/// The input is symmetrized as (C + C^T)/2 before factorization; gross
/// asymmetry (beyond 1e-10 relative) is rejected. A nonpositive pivot throws
/// PositivityLost -- there is no jitter fallback.
Matrix cholesky_sqrt(const Matrix& C);

/// log of the mixture density at theta, via log-sum-exp.
double gm_logpdf(const GaussianMixture& mix, const Vector& theta);

/// Gradient of gm_logpdf at theta.
Vector gm_score(const GaussianMixture& mix, const Vector& theta);

/// Hessian of gm_logpdf at theta (exact, closed form).
Matrix gm_loghess(const GaussianMixture& mix, const Vector& theta);

/// v_i = C_i^{-1} (theta - m_i) for every component, each computed by two
/// triangular solves against the stored factor.
std::vector<Vector> component_scores(const GaussianMixture& mix, const Vector& theta);

/// Mixture restricted to the selected coordinates; weights unchanged.
GaussianMixture marginal(const GaussianMixture& mix, const std::vector<int>& indices);

/// Draws one sample from the mixture.
Vector sample_mixture(const GaussianMixture& mix, Rng& rng);

/// JSON snapshot {weights, means, cov_chols}; doubles survive a round trip
/// bit-for-bit.
std::string mixture_to_json(const GaussianMixture& mix);
GaussianMixture mixture_from_json(const std::string& text);

/// Log density of a single Gaussian evaluated through its Cholesky factor.
double gaussian_logpdf(const Vector& theta, const Vector& mean, const Matrix& cov_chol);

}  // namespace dfgmvi
