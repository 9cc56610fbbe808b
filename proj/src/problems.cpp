#include "dfgmvi/problems.hpp"

#include <cmath>
#include <numbers>

namespace dfgmvi {

namespace {

void require(bool cond, const char* msg) {
  if (!cond) throw std::invalid_argument(msg);
}

InitDistribution standard_normal_init(Eigen::Index n) {
  return {Vector::Zero(n), Matrix::Identity(n, n)};
}

std::shared_ptr<const GridDensity> reference_1d(
    const std::function<double(const Vector&)>& phi, double lo, double hi) {
  auto g = grid_from_logdensity([&](const Vector& x) { return -phi(x); },
                                {GridAxis{lo, hi, 2001}});
  return std::make_shared<const GridDensity>(std::move(g));
}

std::shared_ptr<const GridDensity> reference_2d(
    const std::function<double(const Vector&)>& phi,
    GridAxis ax0 = GridAxis{-4.0, 4.0, 400}, GridAxis ax1 = GridAxis{-4.0, 4.0, 400}) {
  auto g = grid_from_logdensity([&](const Vector& x) { return -phi(x); }, {ax0, ax1});
  return std::make_shared<const GridDensity>(std::move(g));
}

void attach_half_norm_phi(ForwardProblem& p) {
  auto F = p.F;
  p.phi = [F](const Vector& theta) { return 0.5 * F(theta).squaredNorm(); };
}

}  // namespace

ForwardProblem augmented_map(std::function<Vector(const Vector&)> G, const Vector& y,
                             const Matrix& sigma_eta, const Vector& r0,
                             const Matrix& sigma0, Eigen::Index n_theta,
                             Eigen::Index n_y) {
  require(sigma_eta.rows() == n_y && sigma_eta.cols() == n_y,
          "augmented_map: sigma_eta shape");
  require(sigma0.rows() == n_theta && sigma0.cols() == n_theta,
          "augmented_map: sigma0 shape");
  require(y.size() == n_y && r0.size() == n_theta, "augmented_map: vector sizes");

  Matrix L_eta = cholesky_sqrt(sigma_eta);
  Matrix L0 = cholesky_sqrt(sigma0);

  ForwardProblem p;
  p.id = "augmented";
  p.n_theta = n_theta;
  p.n_x = n_y + n_theta;
  p.F = [G = std::move(G), y, r0, L_eta, L0, n_y, n_theta](const Vector& theta) {
    Vector out(n_y + n_theta);
    out.head(n_y) =
        L_eta.triangularView<Eigen::Lower>().solve(Vector(y - G(theta)));
    out.tail(n_theta) =
        L0.triangularView<Eigen::Lower>().solve(Vector(r0 - theta));
    return out;
  };
  attach_half_norm_phi(p);
  p.init_distribution = {r0, L0};
  return p;
}

ForwardProblem bimodal_1d(char which) {
  double sigma;
  switch (which) {
    case 'A': sigma = 0.2; break;
    case 'B': sigma = 0.5; break;
    case 'C': sigma = 1.0; break;
    case 'D': sigma = 2.0; break;
    default: throw std::invalid_argument("bimodal_1d: case must be A-D");
  }
  const double y = 1.0;
  const double prior_mean = 3.0, prior_sd = 2.0;

  ForwardProblem p;
  p.id = std::string("bimodal1d:") + which;
  p.n_theta = 1;
  p.n_x = 2;
  p.F = [=](const Vector& t) {
    Vector out(2);
    out[0] = (y - t[0] * t[0]) / sigma;
    out[1] = (prior_mean - t[0]) / prior_sd;
    return out;
  };
  attach_half_norm_phi(p);
  p.grad = [=](const Vector& t) {
    Vector g(1);
    g[0] = -2.0 * t[0] * (y - t[0] * t[0]) / (sigma * sigma) +
           (t[0] - prior_mean) / (prior_sd * prior_sd);
    return g;
  };
  p.hess = [=](const Vector& t) {
    Matrix h(1, 1);
    h(0, 0) = (6.0 * t[0] * t[0] - 2.0 * y) / (sigma * sigma) +
              1.0 / (prior_sd * prior_sd);
    return h;
  };
  p.init_distribution = {Vector::Constant(1, prior_mean),
                         Matrix::Constant(1, 1, prior_sd)};
  p.reference = which == 'D' ? reference_1d(p.phi, -6.0, 8.0)
                             : reference_1d(p.phi, -5.0, 5.0);
  return p;
}

ForwardProblem multi_2d(char which) {
  ForwardProblem p;
  p.id = std::string("multi2d:") + which;
  p.n_theta = 2;
  p.init_distribution = standard_normal_init(2);

  switch (which) {
    case 'A': {
      Matrix A(2, 2);
      A << 1, 1, 1, 2;
      Vector y(2);
      y << 0, 1;
      p.n_x = 2;
      p.F = [A, y](const Vector& t) { return Vector(y - A * t); };
      p.grad = [A, y](const Vector& t) { return Vector(A.transpose() * (A * t - y)); };
      p.hess = [A](const Vector&) { return Matrix(A.transpose() * A); };
      // The posterior itself is Gaussian with mean A^{-1}y.
      Vector mstar = A.colPivHouseholderQr().solve(y);
      Matrix cstar = (A.transpose() * A).inverse();
      auto post = std::make_shared<GaussianMixture>();
      post->weights = Vector::Ones(1);
      post->components.push_back({mstar, cholesky_sqrt(cstar)});
      p.reference_mixture = post;
      break;
    }
    case 'B': {
      Vector y(4);
      y << 4.2297, 4.2297, 0.5, 0.0;
      p.n_x = 4;
      p.F = [y](const Vector& t) {
        double d = t[0] - t[1], s = t[0] + t[1];
        Vector out(4);
        out << y[0] - d * d, y[1] - s * s, y[2] - t[0], y[3] - t[1];
        return out;
      };
      p.grad = [y](const Vector& t) {
        double d = t[0] - t[1], s = t[0] + t[1];
        Vector r(4);
        r << y[0] - d * d, y[1] - s * s, y[2] - t[0], y[3] - t[1];
        Matrix J(4, 2);
        J << 2 * d, -2 * d, 2 * s, 2 * s, 1, 0, 0, 1;
        return Vector(-J.transpose() * r);
      };
      p.hess = [y](const Vector& t) {
        double d = t[0] - t[1], s = t[0] + t[1];
        Vector r(4);
        r << y[0] - d * d, y[1] - s * s, y[2] - t[0], y[3] - t[1];
        Matrix J(4, 2);
        J << 2 * d, -2 * d, 2 * s, 2 * s, 1, 0, 0, 1;
        Matrix Hd(2, 2), Hs(2, 2);
        Hd << 2, -2, -2, 2;
        Hs << 2, 2, 2, 2;
        return Matrix(J.transpose() * J - r[0] * Hd - r[1] * Hs);
      };
      break;
    }
    case 'C': {
      const double s = 0.3;
      p.n_x = 1;
      p.F = [s](const Vector& t) {
        return Vector::Constant(1, (1.0 - t.squaredNorm()) / s);
      };
      p.grad = [s](const Vector& t) {
        double f = (1.0 - t.squaredNorm()) / s;
        return Vector(-(2.0 / s) * f * t);
      };
      p.hess = [s](const Vector& t) {
        double f = (1.0 - t.squaredNorm()) / s;
        return Matrix((4.0 / (s * s)) * t * t.transpose() -
                      (2.0 / s) * f * Matrix::Identity(2, 2));
      };
      break;
    }
    case 'D': {
      const double w = 1.0 / std::sqrt(10.0);
      Vector y(2);
      y << 0, 1;
      p.n_x = 2;
      p.F = [w, y](const Vector& t) {
        Vector g(2);
        g << 10.0 * (t[1] - t[0] * t[0]), t[0];
        return Vector(w * (y - g));
      };
      p.grad = [w, y](const Vector& t) {
        Vector g(2);
        g << 10.0 * (t[1] - t[0] * t[0]), t[0];
        Vector r = w * (y - g);
        Matrix J(2, 2);
        J << 20.0 * t[0] * w, -10.0 * w, -w, 0.0;
        return Vector(J.transpose() * r);
      };
      p.hess = [w, y](const Vector& t) {
        Vector g(2);
        g << 10.0 * (t[1] - t[0] * t[0]), t[0];
        Vector r = w * (y - g);
        Matrix J(2, 2);
        J << 20.0 * t[0] * w, -10.0 * w, -w, 0.0;
        Matrix H = J.transpose() * J;
        H(0, 0) += r[0] * 20.0 * w;
        return H;
      };
      break;
    }
    case 'E': {
      // Double banana: whitened log-residual around the value at (0, 1), so
      // that point fits the data exactly and the density splits into two
      // lobes.
      const double s = 0.3;
      const double y1 = std::log(101.0);
      p.n_x = 3;
      auto q = [](const Vector& t) {
        double a = t[1] - t[0] * t[0];
        double b = 1.0 - t[0];
        return 100.0 * a * a + b * b;
      };
      p.F = [s, y1, q](const Vector& t) {
        Vector out(3);
        out << (y1 - std::log(q(t))) / s, -t[0], -t[1];
        return out;
      };
      auto grad_q = [](const Vector& t) {
        double a = t[1] - t[0] * t[0];
        Vector g(2);
        g << -400.0 * t[0] * a - 2.0 * (1.0 - t[0]), 200.0 * a;
        return g;
      };
      p.grad = [s, y1, q, grad_q](const Vector& t) {
        double qv = q(t);
        double f1 = (y1 - std::log(qv)) / s;
        Vector df1 = -grad_q(t) / (s * qv);
        Vector g = f1 * df1;
        g[0] += t[0];
        g[1] += t[1];
        return g;
      };
      p.hess = [s, y1, q, grad_q](const Vector& t) {
        double qv = q(t);
        double f1 = (y1 - std::log(qv)) / s;
        Vector dq = grad_q(t);
        Matrix hq(2, 2);
        double a = t[1] - t[0] * t[0];
        hq << -400.0 * a + 800.0 * t[0] * t[0] + 2.0, -400.0 * t[0],
              -400.0 * t[0], 200.0;
        Vector df1 = -dq / (s * qv);
        Matrix hf1 = -(hq / qv - dq * dq.transpose() / (qv * qv)) / s;
        Matrix H = df1 * df1.transpose() + f1 * hf1 + Matrix::Identity(2, 2);
        return H;
      };
      break;
    }
    default:
      throw std::invalid_argument("multi_2d: case must be A-E");
  }
  attach_half_norm_phi(p);
  // Reference windows sized so that truncated posterior mass stays far below
  // the TV tolerances. The Gaussian case extends past 4 in theta_1 and the
  // scaled Rosenbrock carries half its mass beyond theta_2 = 4, so those two
  // get their own domains; the band widths set the resolution.
  switch (which) {
    case 'A':
      p.reference = reference_2d(p.phi, GridAxis{-9.0, 7.0, 400}, GridAxis{-4.0, 6.0, 400});
      break;
    case 'D':
      p.reference =
          reference_2d(p.phi, GridAxis{-7.0, 9.0, 800}, GridAxis{-2.0, 75.0, 1000});
      break;
    default:
      p.reference = reference_2d(p.phi);
      break;
  }
  return p;
}

ForwardProblem lift_100d(char base_case, Eigen::Index n_theta) {
  require(n_theta >= 2, "lift_100d: n_theta must be at least 2");
  ForwardProblem base = multi_2d(base_case);
  if (n_theta == 2) return base;

  const Eigen::Index nc = n_theta - 2;
  ForwardProblem p;
  p.id = std::string("lift100d:") + base_case;
  p.n_theta = n_theta;
  p.n_x = base.n_x + nc;
  p.F = [baseF = base.F, nc](const Vector& t) {
    Vector t2 = t.head(2);
    Vector fb = baseF(t2);
    Vector out(fb.size() + nc);
    out.head(fb.size()) = fb;
    double coupled = t2.sum();  // all-ones coupling K*theta
    out.tail(nc) = t.tail(nc).array() - coupled;
    return out;
  };
  attach_half_norm_phi(p);
  p.grad = [bg = base.grad, nc, n_theta](const Vector& t) {
    Vector t2 = t.head(2);
    Vector pen = t.tail(nc).array() - t2.sum();
    Vector g(n_theta);
    g.head(2) = bg(t2) - Vector::Constant(2, pen.sum());
    g.tail(nc) = pen;
    return g;
  };
  p.hess = [bh = base.hess, nc, n_theta](const Vector& t) {
    Matrix H = Matrix::Zero(n_theta, n_theta);
    H.topLeftCorner(2, 2) = bh(t.head(2)) + Matrix::Constant(2, 2, double(nc));
    H.topRightCorner(2, nc).setConstant(-1.0);
    H.bottomLeftCorner(nc, 2).setConstant(-1.0);
    H.bottomRightCorner(nc, nc).setIdentity();
    return H;
  };
  p.init_distribution = standard_normal_init(n_theta);
  p.reference = base.reference;  // the (theta_1, theta_2) marginal is exact
  p.reference_mixture = base.reference_mixture;
  return p;
}

std::pair<ForwardProblem, ForwardProblem> guidelines_targets() {
  // Three-mode Gaussian mixture target, exposed through phi and analytic
  // derivatives only: it is not of least-squares form.
  auto target = std::make_shared<GaussianMixture>();
  target->weights = Vector(3);
  target->weights << 0.3, 0.4, 0.3;
  Matrix half = cholesky_sqrt(0.25 * Matrix::Identity(2, 2));
  Vector m1(2), m2(2), m3(2);
  m1 << 1, 2;
  m2 << 2, 1;
  m3 << -1, -1;
  target->components = {{m1, half}, {m2, half}, {m3, half}};

  ForwardProblem gm;
  gm.id = "guidelines:gm";
  gm.n_theta = 2;
  gm.n_x = 0;
  gm.has_forward_map = false;
  gm.F = [](const Vector&) -> Vector {
    throw UnsupportedForm("guidelines:gm target has no residual form");
  };
  gm.phi = [target](const Vector& t) { return -gm_logpdf(*target, t); };
  gm.grad = [target](const Vector& t) { return Vector(-gm_score(*target, t)); };
  gm.hess = [target](const Vector& t) { return Matrix(-gm_loghess(*target, t)); };
  gm.init_distribution = standard_normal_init(2);
  gm.reference = reference_2d(gm.phi);
  gm.reference_mixture = target;

  ForwardProblem circle = multi_2d('C');
  circle.id = "guidelines:circle";
  return {gm, circle};
}

ForwardProblem problem_by_id(const std::string& id) {
  auto colon = id.find(':');
  std::string head = id.substr(0, colon);
  std::string tail = colon == std::string::npos ? "" : id.substr(colon + 1);
  if (head == "bimodal1d" && tail.size() == 1) return bimodal_1d(tail[0]);
  if (head == "multi2d" && tail.size() == 1) return multi_2d(tail[0]);
  if (head == "lift100d" && tail.size() == 1) return lift_100d(tail[0], 100);
  if (head == "guidelines") {
    auto [gm, circle] = guidelines_targets();
    if (tail == "gm") return gm;
    if (tail == "circle") return circle;
  }
  throw std::invalid_argument("unknown problem id: " + id);
}

std::vector<std::string> catalog_ids() {
  std::vector<std::string> ids;
  for (char c : {'A', 'B', 'C', 'D'}) ids.push_back(std::string("bimodal1d:") + c);
  for (char c : {'A', 'B', 'C', 'D', 'E'}) ids.push_back(std::string("multi2d:") + c);
  for (char c : {'A', 'B', 'C', 'D', 'E'}) ids.push_back(std::string("lift100d:") + c);
  ids.push_back("guidelines:gm");
  ids.push_back("guidelines:circle");
  return ids;
}

}  // namespace dfgmvi
