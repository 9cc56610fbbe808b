#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dfgmvi/metrics.hpp"
#include "dfgmvi/mixture.hpp"
#include "dfgmvi/types.hpp"

namespace dfgmvi {

/// Gaussian used to seed the solver's component means.
struct InitDistribution {
  Vector mean;
  Matrix cov_chol;
};

/// An unnormalized target in nonlinear least-squares form. phi is always
/// available; the residual map F exists for every catalog problem except the
/// three-mode mixture target, which throws UnsupportedForm from F.
struct ForwardProblem {
  std::string id;
  Eigen::Index n_theta = 0;
  Eigen::Index n_x = 0;
  bool has_forward_map = true;

  std::function<Vector(const Vector&)> F;
  std::function<double(const Vector&)> phi;

  // Analytic derivatives of phi, used only by the gradient/Hessian-based
  // comparison methods, never by the derivative-free solver.
  std::function<Vector(const Vector&)> grad;
  std::function<Matrix(const Vector&)> hess;

  InitDistribution init_distribution;
  std::shared_ptr<const GridDensity> reference;      // tabulated posterior, if any
  std::shared_ptr<const GaussianMixture> reference_mixture;  // analytic posterior, if any
};

/// Stacks whitened data misfit over whitened prior residual; square roots
/// act through Cholesky factor solves.
ForwardProblem augmented_map(std::function<Vector(const Vector&)> G, const Vector& y,
                             const Matrix& sigma_eta, const Vector& r0,
                             const Matrix& sigma0, Eigen::Index n_theta,
                             Eigen::Index n_y);

/// 1D bimodal inverse problem: G(theta) = theta^2, y = 1, prior N(3, 2^2),
/// noise std 0.2 / 0.5 / 1.0 / 2.0 for cases A-D.
ForwardProblem bimodal_1d(char which);

/// 2D synthetic targets A-E.
ForwardProblem multi_2d(char which);

/// Lifts a 2D target to n_theta dimensions with an all-ones coupling; the
/// (theta_1, theta_2) marginal of the lifted posterior equals the base
/// posterior exactly.
ForwardProblem lift_100d(char base_case, Eigen::Index n_theta);

/// The two 2D study targets: a three-mode Gaussian mixture (energy-only, no
/// residual form) and the circular ridge (also available as a residual map).
std::pair<ForwardProblem, ForwardProblem> guidelines_targets();

/// Looks up a problem by string id, e.g. "bimodal1d:A", "multi2d:E",
/// "lift100d:B", "guidelines:gm", "guidelines:circle".
ForwardProblem problem_by_id(const std::string& id);

/// All ids resolvable by problem_by_id (Navier-Stokes ids excluded; those
/// carry their own configuration).
std::vector<std::string> catalog_ids();

}  // namespace dfgmvi
