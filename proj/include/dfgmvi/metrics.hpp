#pragma once

#include <functional>
#include <vector>

#include "dfgmvi/mixture.hpp"
#include "dfgmvi/types.hpp"

namespace dfgmvi {

/// Uniform grid on [lo, hi] with n inclusive nodes.
struct GridAxis {
  double lo = 0.0;
  double hi = 1.0;
  int n = 2;

  double spacing() const { return (hi - lo) / (n - 1); }
  double point(int i) const { return lo + i * spacing(); }
  bool operator==(const GridAxis&) const = default;
};

/// Density tabulated on a 1D or 2D uniform grid; values are row-major in the
/// first axis for 2D grids.
struct GridDensity {
  std::vector<GridAxis> axes;
  Vector values;
  double cell_measure = 0.0;

  int dim() const { return static_cast<int>(axes.size()); }
  double integral() const { return values.sum() * cell_measure; }
  double& at(int i) { return values[i]; }
  double at2(int i, int j) const { return values[i * axes[1].n + j]; }

  /// Multiplies values so the grid integral becomes one.
  void normalize();

  /// Bilinear (or linear) interpolation inside the grid hull.
  double interpolate(const Vector& x) const;
};

GridDensity make_grid(const std::vector<GridAxis>& axes);

/// Tabulates exp(gm_logpdf) of a 1D or 2D mixture.
GridDensity grid_density(const GaussianMixture& mix, const std::vector<GridAxis>& axes);

/// Tabulates any positive density from its log, then normalizes on the grid.
GridDensity grid_from_logdensity(const std::function<double(const Vector&)>& logrho,
                                 const std::vector<GridAxis>& axes);

/// Paper-convention total variation: integral of |p - q|, range [0, 2] for
/// normalized inputs (no 1/2 factor).
double tv_distance(const GridDensity& p, const GridDensity& q);

/// Gaussian kernel density estimate on a grid. Bandwidth is Silverman's rule
/// times bandwidth_mult per axis, floored at twice the grid spacing; the
/// result is normalized on the grid. Samples are row vectors.
GridDensity kde(const Matrix& samples, const std::vector<GridAxis>& axes,
                double bandwidth_mult = 1.0);

}  // namespace dfgmvi
