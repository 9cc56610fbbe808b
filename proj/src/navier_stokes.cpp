#include "dfgmvi/navier_stokes.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstring>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>

#include "dfgmvi/rng.hpp"

namespace dfgmvi::ns {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

void require(bool cond, const char* msg) {
  if (!cond) throw std::invalid_argument(msg);
}

std::mutex& fftw_mutex() {
  static std::mutex m;
  return m;
}

/// Spectral scratchpad for one grid size: plans, wavenumber tables, and all
/// working arrays. Each thread owns its instances, so forward evaluations
/// run concurrently without sharing.
class SpectralEngine {
public:
  explicit SpectralEngine(int n) : n_(n), nk_(n / 2 + 1), total_(n * (n / 2 + 1)) {
    auto alloc_r = [this] { return fftw_alloc_real(n_ * n_); };
    auto alloc_c = [this] { return fftw_alloc_complex(total_); };
    rbuf_ = alloc_r();
    v1_ = alloc_r();
    v2_ = alloc_r();
    wx_ = alloc_r();
    wy_ = alloc_r();
    cbuf_ = alloc_c();
    what_ = alloc_c();
    pred_ = alloc_c();
    r1_ = alloc_c();
    r2_ = alloc_c();
    curlf_ = alloc_c();
    s1_ = alloc_c();
    s2_ = alloc_c();
    s3_ = alloc_c();
    s4_ = alloc_c();
    {
      std::lock_guard<std::mutex> lock(fftw_mutex());
      fwd_ = fftw_plan_dft_r2c_2d(n_, n_, rbuf_, cbuf_, FFTW_MEASURE);
      bwd_ = fftw_plan_dft_c2r_2d(n_, n_, cbuf_, rbuf_, FFTW_MEASURE);
    }
    k1_.resize(total_);
    k2_.resize(total_);
    ksq_.resize(total_);
    mask_.resize(total_);
    const int cut = n_ / 3;
    for (int i = 0; i < n_; ++i) {
      const int kk1 = i <= n_ / 2 ? i : i - n_;
      for (int j = 0; j < nk_; ++j) {
        const int s = i * nk_ + j;
        k1_[s] = kk1;
        k2_[s] = j;
        ksq_[s] = double(kk1) * kk1 + double(j) * j;
        mask_[s] = (std::abs(kk1) <= cut && j <= cut) ? 1.0 : 0.0;
      }
    }
  }

  ~SpectralEngine() {
    std::lock_guard<std::mutex> lock(fftw_mutex());
    fftw_destroy_plan(fwd_);
    fftw_destroy_plan(bwd_);
    for (double* p : {rbuf_, v1_, v2_, wx_, wy_}) fftw_free(p);
    for (fftw_complex* p : {cbuf_, what_, pred_, r1_, r2_, curlf_, s1_, s2_, s3_, s4_})
      fftw_free(p);
  }
  SpectralEngine(const SpectralEngine&) = delete;
  SpectralEngine& operator=(const SpectralEngine&) = delete;

  int n() const { return n_; }

  void load_field(const Field& f, fftw_complex* out) {
    std::memcpy(rbuf_, f.data(), sizeof(double) * n_ * n_);
    fftw_execute_dft_r2c(fwd_, rbuf_, out);
    for (int s = 0; s < total_; ++s) {
      out[s][0] *= mask_[s];
      out[s][1] *= mask_[s];
    }
  }

  Field unload_field(const fftw_complex* spec) {
    std::memcpy(cbuf_, spec, sizeof(fftw_complex) * total_);
    fftw_execute_dft_c2r(bwd_, cbuf_, rbuf_);
    Field out(n_ * n_);
    const double scale = 1.0 / (double(n_) * n_);
    for (int i = 0; i < n_ * n_; ++i) out[i] = rbuf_[i] * scale;
    return out;
  }

  /// Advances what_ from time t over one integrating-factor Heun step.
  void step(double dt, double nu, double vb1, double vb2) {
    nonlinear(what_, r1_, vb1, vb2);
    for (int s = 0; s < total_; ++s) {
      const double e = std::exp(-nu * ksq_[s] * dt);
      pred_[s][0] = e * (what_[s][0] + dt * r1_[s][0]);
      pred_[s][1] = e * (what_[s][1] + dt * r1_[s][1]);
    }
    nonlinear(pred_, r2_, vb1, vb2);
    for (int s = 0; s < total_; ++s) {
      const double e = std::exp(-nu * ksq_[s] * dt);
      what_[s][0] = e * what_[s][0] + 0.5 * dt * (e * r1_[s][0] + r2_[s][0]);
      what_[s][1] = e * what_[s][1] + 0.5 * dt * (e * r1_[s][1] + r2_[s][1]);
    }
  }

  void set_forcing(bool enabled) {
    if (!enabled) {
      std::memset(curlf_, 0, sizeof(fftw_complex) * total_);
      return;
    }
    Field f(n_ * n_);
    const double dx = kTwoPi / n_;
    for (int i = 0; i < n_; ++i) {
      const double v = -4.0 * std::sin(4.0 * i * dx);
      for (int j = 0; j < n_; ++j) f[i * n_ + j] = v;
    }
    load_field(f, curlf_);
  }

  fftw_complex* state() { return what_; }

  bool state_finite() const {
    for (int s = 0; s < total_; ++s) {
      if (!std::isfinite(what_[s][0]) || !std::isfinite(what_[s][1])) return false;
    }
    return true;
  }

private:
  /// rhs = -FFT[(v . grad w)] + curl f, dealiased, mean pinned to zero.
  void nonlinear(const fftw_complex* w, fftw_complex* rhs, double vb1, double vb2) {
    for (int s = 0; s < total_; ++s) {
      const double wr = w[s][0], wi = w[s][1];
      const double inv = ksq_[s] > 0.0 ? 1.0 / ksq_[s] : 0.0;
      const double pr = wr * inv, pi = wi * inv;  // streamfunction, zero-mean gauge
      // v1 = i k2 psi, v2 = -i k1 psi, wx = i k1 w, wy = i k2 w
      s1_[s][0] = -k2_[s] * pi;
      s1_[s][1] = k2_[s] * pr;
      s2_[s][0] = k1_[s] * pi;
      s2_[s][1] = -k1_[s] * pr;
      s3_[s][0] = -k1_[s] * wi;
      s3_[s][1] = k1_[s] * wr;
      s4_[s][0] = -k2_[s] * wi;
      s4_[s][1] = k2_[s] * wr;
    }
    to_real(s1_, v1_);
    to_real(s2_, v2_);
    to_real(s3_, wx_);
    to_real(s4_, wy_);
    const double scale = 1.0 / (double(n_) * n_);
    for (int i = 0; i < n_ * n_; ++i) {
      rbuf_[i] = (v1_[i] * scale + vb1) * (wx_[i] * scale) +
                 (v2_[i] * scale + vb2) * (wy_[i] * scale);
    }
    fftw_execute_dft_r2c(fwd_, rbuf_, rhs);
    for (int s = 0; s < total_; ++s) {
      rhs[s][0] = -rhs[s][0] * mask_[s] + curlf_[s][0];
      rhs[s][1] = -rhs[s][1] * mask_[s] + curlf_[s][1];
    }
    rhs[0][0] = 0.0;  // mean vorticity conserved at zero
    rhs[0][1] = 0.0;
  }

  void to_real(fftw_complex* spec, double* out) {
    fftw_execute_dft_c2r(bwd_, spec, out);
  }

  int n_, nk_, total_;
  double *rbuf_, *v1_, *v2_, *wx_, *wy_;
  fftw_complex *cbuf_, *what_, *pred_, *r1_, *r2_, *curlf_, *s1_, *s2_, *s3_, *s4_;
  fftw_plan fwd_, bwd_;
  std::vector<double> k1_, k2_, ksq_, mask_;
};

SpectralEngine& engine_for(int n) {
  thread_local std::map<int, std::unique_ptr<SpectralEngine>> cache;
  auto& slot = cache[n];
  if (!slot) slot = std::make_unique<SpectralEngine>(n);
  return *slot;
}

}  // namespace

void NSConfig::validate() const {
  require(grid_n >= 32 && (grid_n & (grid_n - 1)) == 0,
          "NSConfig: grid_n must be a power of two, at least 32");
  require(viscosity > 0.0, "NSConfig: viscosity must be positive");
  require(!obs_times.empty(), "NSConfig: no observation times");
  require(std::is_sorted(obs_times.begin(), obs_times.end()) && obs_times.front() > 0.0,
          "NSConfig: observation times must be positive and increasing");
  require(obs_nx1 >= 1 && obs_nx2 >= 1, "NSConfig: empty observation lattice");
  require(noise_std > 0.0, "NSConfig: noise_std must be positive");
  require(kl_modes >= 1, "NSConfig: kl_modes must be positive");
  const double dx = kTwoPi / grid_n;
  const double speed = std::hypot(background_v1, background_v2) + 6.0;
  require(solver_dt > 0.0 && solver_dt <= dx / speed,
          "NSConfig: solver_dt violates the advective CFL bound");
}

std::vector<std::pair<double, double>> NSConfig::obs_points() const {
  std::vector<std::pair<double, double>> pts;
  pts.reserve(n_obs_points());
  for (int i = 1; i <= obs_nx1; ++i) {
    for (int j = 1; j <= obs_nx2; ++j) {
      pts.emplace_back(std::numbers::pi * i / (obs_nx1 + 1),
                       std::numbers::pi * j / (obs_nx2 + 1));
    }
  }
  return pts;
}

KLBasis KLBasis::truncated(int count) {
  require(count >= 1, "KLBasis: count must be positive");
  // Enumerate the positive half-lattice out to a shell that safely covers
  // the requested count (two entries per lattice site).
  int cap = 2;
  while ((2 * cap - 1) * cap < count) ++cap;
  cap += 2;

  std::vector<KLMode> all;
  for (int l1 = -cap; l1 <= cap; ++l1) {
    for (int l2 = 0; l2 <= cap; ++l2) {
      const bool in_half = (l2 > 0) || (l2 == 0 && l1 > 0);
      if (!in_half) continue;
      double lambda = 1.0 / std::pow(double(l1) * l1 + double(l2) * l2, 2.0);
      all.push_back({l1, l2, true, lambda});
      all.push_back({l1, l2, false, lambda});
    }
  }
  // Descending eigenvalue; within a shell keep each +-l1 mirror class
  // contiguous so truncation stays closed under the x1 reflection.
  std::sort(all.begin(), all.end(), [](const KLMode& a, const KLMode& b) {
    const int sa = a.l1 * a.l1 + a.l2 * a.l2;
    const int sb = b.l1 * b.l1 + b.l2 * b.l2;
    if (sa != sb) return sa < sb;
    if (std::abs(a.l1) != std::abs(b.l1)) return std::abs(a.l1) < std::abs(b.l1);
    if (a.l1 != b.l1) return a.l1 > b.l1;
    return a.is_sin > b.is_sin;
  });
  require(static_cast<int>(all.size()) >= count, "KLBasis: enumeration too small");
  KLBasis basis;
  basis.modes.assign(all.begin(), all.begin() + count);
  return basis;
}

double KLBasis::eval(int mode, double x1, double x2) const {
  const KLMode& m = modes[mode];
  const double phase = m.l1 * x1 + m.l2 * x2;
  const double trig = m.is_sin ? std::sin(phase) : std::cos(phase);
  return std::sqrt(m.lambda) * trig / (std::numbers::sqrt2 * std::numbers::pi);
}

Field kl_to_vorticity(const Vector& theta, const KLBasis& basis, int grid_n) {
  require(theta.size() <= basis.size(), "kl_to_vorticity: more coefficients than modes");
  Field f = Field::Zero(grid_n * grid_n);
  const double dx = kTwoPi / grid_n;
  for (int m = 0; m < theta.size(); ++m) {
    if (theta[m] == 0.0) continue;
    for (int i = 0; i < grid_n; ++i) {
      const double x1 = i * dx;
      for (int j = 0; j < grid_n; ++j) {
        f[i * grid_n + j] += theta[m] * basis.eval(m, x1, j * dx);
      }
    }
  }
  return f;
}

std::vector<Field> ns_solve(const Field& omega0, const NSConfig& cfg) {
  cfg.validate();
  const int n = cfg.grid_n;
  require(omega0.size() == n * n, "ns_solve: field size mismatch");
  SpectralEngine& eng = engine_for(n);
  eng.set_forcing(cfg.enable_forcing);
  eng.load_field(omega0, eng.state());

  std::vector<Field> out;
  out.reserve(cfg.obs_times.size());
  double t = 0.0;
  int steps_since_check = 0;
  for (double t_obs : cfg.obs_times) {
    while (t < t_obs - 1e-12) {
      const double dt = std::min(cfg.solver_dt, t_obs - t);
      eng.step(dt, cfg.viscosity, cfg.background_v1, cfg.background_v2);
      t += dt;
      if (++steps_since_check >= 16) {
        steps_since_check = 0;
        if (!eng.state_finite()) {
          throw std::runtime_error("ns_solve: solution lost finiteness at t=" +
                                   std::to_string(t));
        }
      }
    }
    Field f = eng.unload_field(eng.state());
    if (!f.allFinite()) {
      throw std::runtime_error("ns_solve: solution lost finiteness at t=" +
                               std::to_string(t));
    }
    out.push_back(std::move(f));
  }
  return out;
}

namespace {

double bilinear_periodic(const Field& f, int n, double x1, double x2) {
  const double dx = kTwoPi / n;
  double s1 = x1 / dx, s2 = x2 / dx;
  int i0 = static_cast<int>(std::floor(s1));
  int j0 = static_cast<int>(std::floor(s2));
  double t1 = s1 - i0, t2 = s2 - j0;
  auto wrap = [n](int i) { return ((i % n) + n) % n; };
  const int i1 = wrap(i0 + 1), j1 = wrap(j0 + 1);
  i0 = wrap(i0);
  j0 = wrap(j0);
  return (1 - t1) * (1 - t2) * f[i0 * n + j0] + t1 * (1 - t2) * f[i1 * n + j0] +
         (1 - t1) * t2 * f[i0 * n + j1] + t1 * t2 * f[i1 * n + j1];
}

}  // namespace

Vector ns_forward(const Vector& theta, const NSConfig& cfg, const KLBasis& basis) {
  Field omega0 = kl_to_vorticity(theta, basis, cfg.grid_n);
  std::vector<Field> fields = ns_solve(omega0, cfg);
  const auto pts = cfg.obs_points();
  Vector obs(cfg.n_obs());
  Eigen::Index o = 0;
  for (const Field& f : fields) {
    for (const auto& [x1, x2] : pts) {
      obs[o++] = bilinear_periodic(f, cfg.grid_n, x1, x2) -
                 bilinear_periodic(f, cfg.grid_n, kTwoPi - x1, x2);
    }
  }
  return obs;
}

Vector mirror_coefficients(const Vector& theta, const KLBasis& basis) {
  require(theta.size() <= basis.size(), "mirror_coefficients: size mismatch");
  Vector out = Vector::Zero(theta.size());
  for (int m = 0; m < theta.size(); ++m) {
    const KLMode& mode = basis.modes[m];
    int target_l1 = mode.l2 == 0 ? mode.l1 : -mode.l1;
    double sign = (mode.is_sin && mode.l2 == 0) ? 1.0 : -1.0;
    int target = -1;
    for (int q = 0; q < theta.size(); ++q) {
      const KLMode& cand = basis.modes[q];
      if (cand.l1 == target_l1 && cand.l2 == mode.l2 && cand.is_sin == mode.is_sin) {
        target = q;
        break;
      }
    }
    require(target >= 0,
            "mirror_coefficients: truncation is not closed under the mirror");
    out[target] = sign * theta[m];
  }
  return out;
}

Field mirror_field(const Field& f, int grid_n) {
  Field out(f.size());
  for (int i = 0; i < grid_n; ++i) {
    const int mi = (grid_n - i) % grid_n;
    for (int j = 0; j < grid_n; ++j) out[i * grid_n + j] = -f[mi * grid_n + j];
  }
  return out;
}

double enstrophy(const Field& f, int grid_n) {
  const double dx = kTwoPi / grid_n;
  return f.squaredNorm() * dx * dx;
}

double field_mean(const Field& f) { return f.mean(); }

double relative_l2(const Field& a, const Field& b) {
  return (a - b).norm() / b.norm();
}

ForwardProblem make_ns_problem(const NSConfig& cfg, const KLBasis& basis,
                               const Vector& y_obs) {
  cfg.validate();
  require(y_obs.size() == cfg.n_obs(), "make_ns_problem: observation size mismatch");
  require(basis.size() >= cfg.kl_modes, "make_ns_problem: basis too small");

  const Eigen::Index n_theta = cfg.kl_modes;
  const Eigen::Index n_y = cfg.n_obs();
  auto G = [cfg, basis](const Vector& theta) { return ns_forward(theta, cfg, basis); };
  Matrix sigma_eta = cfg.noise_std * cfg.noise_std * Matrix::Identity(n_y, n_y);
  Matrix sigma0 =
      2.0 * std::numbers::pi * std::numbers::pi * Matrix::Identity(n_theta, n_theta);
  ForwardProblem p = augmented_map(G, y_obs, sigma_eta, Vector::Zero(n_theta), sigma0,
                                   n_theta, n_y);
  p.id = "ns";
  return p;
}

Vector synthesize_observations(const Vector& theta_truth, const NSConfig& cfg,
                               const KLBasis& basis, std::uint64_t noise_seed) {
  Vector clean = ns_forward(theta_truth, cfg, basis);
  Rng rng(noise_seed);
  for (Eigen::Index i = 0; i < clean.size(); ++i) {
    clean[i] += cfg.noise_std * rng.normal();
  }
  return clean;
}

}  // namespace dfgmvi::ns
