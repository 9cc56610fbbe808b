#include "dfgmvi/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>

namespace dfgmvi {

namespace {
void require(bool cond, const char* msg) {
  if (!cond) throw std::invalid_argument(msg);
}
}  // namespace

void GridDensity::normalize() {
  double z = integral();
  require(z > 0.0, "GridDensity::normalize: zero mass");
  values /= z;
}

double GridDensity::interpolate(const Vector& x) const {
  require(x.size() == dim(), "GridDensity::interpolate: dimension mismatch");
  auto locate = [](const GridAxis& ax, double v, int& i0, double& t) {
    double s = (v - ax.lo) / ax.spacing();
    i0 = static_cast<int>(std::floor(s));
    i0 = std::max(0, std::min(ax.n - 2, i0));
    t = s - i0;
  };
  if (dim() == 1) {
    int i;
    double t;
    locate(axes[0], x[0], i, t);
    return (1 - t) * values[i] + t * values[i + 1];
  }
  int i, j;
  double t, u;
  locate(axes[0], x[0], i, t);
  locate(axes[1], x[1], j, u);
  return (1 - t) * (1 - u) * at2(i, j) + t * (1 - u) * at2(i + 1, j) +
         (1 - t) * u * at2(i, j + 1) + t * u * at2(i + 1, j + 1);
}

GridDensity make_grid(const std::vector<GridAxis>& axes) {
  require(axes.size() == 1 || axes.size() == 2, "grids are 1D or 2D");
  GridDensity g;
  g.axes = axes;
  long total = 1;
  g.cell_measure = 1.0;
  for (const auto& ax : axes) {
    require(ax.n >= 2 && ax.hi > ax.lo, "bad grid axis");
    total *= ax.n;
    g.cell_measure *= ax.spacing();
  }
  g.values = Vector::Zero(total);
  return g;
}

GridDensity grid_density(const GaussianMixture& mix, const std::vector<GridAxis>& axes) {
  require(mix.dim() == static_cast<Eigen::Index>(axes.size()),
          "grid_density: takes 1D/2D mixtures; marginalize first");
  GridDensity g = make_grid(axes);
  const double half_dim_log2pi =
      0.5 * static_cast<double>(axes.size()) * std::log(2.0 * std::numbers::pi);

  // Hand-rolled per-dimension solves; the triangular systems are 1x1 or 2x2
  // and the grid is large. Each component is evaluated only inside its
  // 12-sigma bounding box (the tail beyond contributes less than 1e-30).
  constexpr double kRadius = 12.0;
  auto clip = [](const GridAxis& ax, double lo, double hi, int& i0, int& i1) {
    i0 = std::max(0, static_cast<int>(std::ceil((lo - ax.lo) / ax.spacing())));
    i1 = std::min(ax.n - 1, static_cast<int>(std::floor((hi - ax.lo) / ax.spacing())));
    return i0 <= i1;
  };

  if (axes.size() == 1) {
    for (int k = 0; k < mix.size(); ++k) {
      const auto& comp = mix.components[k];
      const double w = mix.weights[k];
      if (w <= 0.0) continue;
      const double m = comp.mean[0], L = comp.cov_chol(0, 0);
      const double lognorm = std::log(L) + half_dim_log2pi;
      int i0, i1;
      if (!clip(axes[0], m - kRadius * L, m + kRadius * L, i0, i1)) continue;
      for (int i = i0; i <= i1; ++i) {
        double z = (axes[0].point(i) - m) / L;
        g.values[i] += w * std::exp(-0.5 * z * z - lognorm);
      }
    }
    return g;
  }

  const int n1 = axes[1].n;
  for (int k = 0; k < mix.size(); ++k) {
    const auto& comp = mix.components[k];
    const double w = mix.weights[k];
    if (w <= 0.0) continue;
    const double m0 = comp.mean[0], m1 = comp.mean[1];
    const double L00 = comp.cov_chol(0, 0), L10 = comp.cov_chol(1, 0),
                 L11 = comp.cov_chol(1, 1);
    const double lognorm = std::log(L00) + std::log(L11) + half_dim_log2pi;
    const double ext0 = kRadius * L00;
    const double ext1 = kRadius * std::hypot(L10, L11);
    int i0, i1, j0, j1;
    if (!clip(axes[0], m0 - ext0, m0 + ext0, i0, i1)) continue;
    if (!clip(axes[1], m1 - ext1, m1 + ext1, j0, j1)) continue;
    const double h1 = axes[1].spacing();
    for (int i = i0; i <= i1; ++i) {
      const double z0 = (axes[0].point(i) - m0) / L00;
      const double base = axes[1].point(j0) - m1 - L10 * z0;
      double* row = g.values.data() + static_cast<Eigen::Index>(i) * n1;
      for (int j = j0; j <= j1; ++j) {
        const double z1 = (base + (j - j0) * h1) / L11;
        row[j] += w * std::exp(-0.5 * (z0 * z0 + z1 * z1) - lognorm);
      }
    }
  }
  return g;
}

GridDensity grid_from_logdensity(const std::function<double(const Vector&)>& logrho,
                                 const std::vector<GridAxis>& axes) {
  GridDensity g = make_grid(axes);
  if (axes.size() == 1) {
    Vector x(1);
    for (int i = 0; i < axes[0].n; ++i) {
      x[0] = axes[0].point(i);
      g.values[i] = logrho(x);
    }
  } else {
    Vector x(2);
    Eigen::Index c = 0;
    for (int i = 0; i < axes[0].n; ++i) {
      x[0] = axes[0].point(i);
      for (int j = 0; j < axes[1].n; ++j, ++c) {
        x[1] = axes[1].point(j);
        g.values[c] = logrho(x);
      }
    }
  }
  double mx = g.values.maxCoeff();
  g.values = (g.values.array() - mx).exp();
  g.normalize();
  return g;
}

double tv_distance(const GridDensity& p, const GridDensity& q) {
  require(p.axes == q.axes, "tv_distance: grids differ");
  return (p.values - q.values).cwiseAbs().sum() * p.cell_measure;
}

namespace {

/// Deposits sample weight onto the two nearest nodes (linear binning), then
/// convolves with a truncated discretized Gaussian kernel, separably in 2D.
/// Samples outside the grid hull are dropped.
bool bin_linear(const GridAxis& ax, double v, int& i0, double& t) {
  if (v < ax.lo || v > ax.hi) return false;
  double s = (v - ax.lo) / ax.spacing();
  i0 = std::max(0, std::min(ax.n - 2, static_cast<int>(std::floor(s))));
  t = std::min(1.0, std::max(0.0, s - i0));
  return true;
}

Vector convolve_axis(const Vector& in, int n_axis, int n_other, int stride_axis,
                     int stride_other, const Vector& kernel) {
  const int r = (static_cast<int>(kernel.size()) - 1) / 2;
  Vector out = Vector::Zero(in.size());
  for (int o = 0; o < n_other; ++o) {
    for (int i = 0; i < n_axis; ++i) {
      double v = in[o * stride_other + i * stride_axis];
      if (v == 0.0) continue;
      int jlo = std::max(0, i - r);
      int jhi = std::min(n_axis - 1, i + r);
      for (int j = jlo; j <= jhi; ++j) {
        out[o * stride_other + j * stride_axis] += v * kernel[j - i + r];
      }
    }
  }
  return out;
}

Vector gaussian_kernel(double h, double spacing) {
  int r = std::max(1, static_cast<int>(std::ceil(8.0 * h / spacing)));
  Vector k(2 * r + 1);
  for (int i = -r; i <= r; ++i) {
    double x = i * spacing / h;
    k[i + r] = std::exp(-0.5 * x * x);
  }
  return k;
}

}  // namespace

GridDensity kde(const Matrix& samples, const std::vector<GridAxis>& axes,
                double bandwidth_mult) {
  require(samples.rows() > 0, "kde: empty sample set");
  require(samples.cols() == static_cast<Eigen::Index>(axes.size()),
          "kde: sample/grid dimension mismatch");
  const int d = static_cast<int>(axes.size());
  const double n = static_cast<double>(samples.rows());

  GridDensity g = make_grid(axes);
  std::vector<double> h(d);
  for (int a = 0; a < d; ++a) {
    double mean = samples.col(a).mean();
    double sd = std::sqrt((samples.col(a).array() - mean).square().sum() /
                          std::max(1.0, n - 1.0));
    double silverman = sd * std::pow(4.0 / ((d + 2.0) * n), 1.0 / (d + 4.0));
    h[a] = std::max(bandwidth_mult * silverman, 2.0 * axes[a].spacing());
  }

  if (d == 1) {
    for (Eigen::Index s = 0; s < samples.rows(); ++s) {
      int i0;
      double t;
      if (!bin_linear(axes[0], samples(s, 0), i0, t)) continue;
      g.values[i0] += 1.0 - t;
      g.values[i0 + 1] += t;
    }
    g.values = convolve_axis(g.values, axes[0].n, 1, 1, 0,
                             gaussian_kernel(h[0], axes[0].spacing()));
  } else {
    const int n1 = axes[1].n;
    for (Eigen::Index s = 0; s < samples.rows(); ++s) {
      int i0, j0;
      double tx, ty;
      if (!bin_linear(axes[0], samples(s, 0), i0, tx)) continue;
      if (!bin_linear(axes[1], samples(s, 1), j0, ty)) continue;
      g.values[i0 * n1 + j0] += (1 - tx) * (1 - ty);
      g.values[(i0 + 1) * n1 + j0] += tx * (1 - ty);
      g.values[i0 * n1 + j0 + 1] += (1 - tx) * ty;
      g.values[(i0 + 1) * n1 + j0 + 1] += tx * ty;
    }
    g.values = convolve_axis(g.values, axes[0].n, n1, n1, 1,
                             gaussian_kernel(h[0], axes[0].spacing()));
    g.values = convolve_axis(g.values, n1, axes[0].n, 1, n1,
                             gaussian_kernel(h[1], axes[1].spacing()));
  }
  g.normalize();
  return g;
}

}  // namespace dfgmvi
