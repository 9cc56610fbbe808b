#pragma once

#include <vector>

#include "dfgmvi/problems.hpp"
#include "dfgmvi/types.hpp"

namespace dfgmvi::ns {

/// 2D incompressible vorticity solver configuration on [0, 2pi]^2.
struct NSConfig {
  int grid_n = 64;  // nodes per dimension, power of two, >= 32
  double viscosity = 0.01;
  double background_v1 = 0.0;
  double background_v2 = 6.283185307179586476925286766559;  // 2*pi
  bool enable_forcing = true;  // curl f = -4 sin(4 x1)
  std::vector<double> obs_times{0.25, 0.5};
  int obs_nx1 = 7;  // observation lattice inside (0, pi)^2
  int obs_nx2 = 5;
  double noise_std = 0.3;
  int kl_modes = 32;
  double solver_dt = 0.005;

  /// Grid sanity plus an advective CFL bound from the background speed and
  /// unit-order flow velocities; throws std::invalid_argument.
  void validate() const;

  int n_obs_points() const { return obs_nx1 * obs_nx2; }
  int n_obs() const { return n_obs_points() * static_cast<int>(obs_times.size()); }
  std::vector<std::pair<double, double>> obs_points() const;
};

/// One term of the Karhunen-Loeve expansion of the initial vorticity.
struct KLMode {
  int l1 = 0;
  int l2 = 0;
  bool is_sin = true;  // sin for the positive half-lattice, cos for its negation
  double lambda = 0.0;
};

/// Truncated KL basis, eigenvalues descending; ties are ordered so that the
/// x1-mirror image of every retained mode is also retained.
struct KLBasis {
  std::vector<KLMode> modes;

  static KLBasis truncated(int count);
  int size() const { return static_cast<int>(modes.size()); }

  /// Value of sqrt(lambda_m) * psi_m at a point.
  double eval(int mode, double x1, double x2) const;
};

/// Fields are grid_n x grid_n row-major (x1-major) flat arrays.
using Field = Vector;

/// omega_0 = sum theta_m sqrt(lambda_m) psi_m on the grid; mean-zero.
Field kl_to_vorticity(const Vector& theta, const KLBasis& basis, int grid_n);

/// Integrates the vorticity equation and returns the field at each
/// observation time. Viscosity acts through an exact integrating factor,
/// advection and forcing through second-order Runge-Kutta, with 2/3-rule
/// dealiasing.
std::vector<Field> ns_solve(const Field& omega0, const NSConfig& cfg);

/// Mirrored-difference observations: omega(x) - omega(2pi - x1, x2) at every
/// observation point and time, bilinearly interpolated.
Vector ns_forward(const Vector& theta, const NSConfig& cfg, const KLBasis& basis);

/// Coefficients of -omega0(2pi - x1, x2): a signed permutation of theta.
Vector mirror_coefficients(const Vector& theta, const KLBasis& basis);

/// Reflects a gridded field: out(i, j) = -in((n - i) mod n, j).
Field mirror_field(const Field& f, int grid_n);

double enstrophy(const Field& f, int grid_n);
double field_mean(const Field& f);

/// Relative L2 distance between two fields.
double relative_l2(const Field& a, const Field& b);

/// Full inverse problem: whitened mirrored-difference observations stacked
/// over the whitened KL-coefficient prior N(0, 2 pi^2 I).
ForwardProblem make_ns_problem(const NSConfig& cfg, const KLBasis& basis,
                               const Vector& y_obs);

/// Synthetic observations from a truth coefficient vector (same solver, same
/// grid) with seeded Gaussian noise.
Vector synthesize_observations(const Vector& theta_truth, const NSConfig& cfg,
                               const KLBasis& basis, std::uint64_t noise_seed);

}  // namespace dfgmvi::ns
