#include "dfgmvi/mixture.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include <nlohmann/json.hpp>

namespace dfgmvi {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112353;

void require(bool cond, const char* msg) {
  if (!cond) throw std::invalid_argument(msg);
}

/// Stabilized responsibilities r_i = w_i N_i(theta) / rho(theta) together
/// with log rho. Zero-weight components get r_i = 0.
struct Responsibilities {
  Vector r;
  double log_density;
};

Responsibilities responsibilities(const GaussianMixture& mix, const Vector& theta) {
  const int K = mix.size();
  Vector logterm(K);
  for (int k = 0; k < K; ++k) {
    const auto& c = mix.components[k];
    double lw = mix.weights[k] > 0.0 ? std::log(mix.weights[k])
                                     : -std::numeric_limits<double>::infinity();
    logterm[k] = lw + gaussian_logpdf(theta, c.mean, c.cov_chol);
  }
  double mx = logterm.maxCoeff();
  Vector r(K);
  double sum = 0.0;
  for (int k = 0; k < K; ++k) {
    r[k] = std::isfinite(logterm[k]) ? std::exp(logterm[k] - mx) : 0.0;
    sum += r[k];
  }
  r /= sum;
  return {r, mx + std::log(sum)};
}

}  // namespace

void GaussianMixture::validate() const {
  require(!components.empty(), "mixture has no components");
  require(weights.size() == size(), "weights/components size mismatch");
  require(weights.minCoeff() >= 0.0, "negative mixture weight");
  require(std::abs(weights.sum() - 1.0) <= 1e-12, "weights do not sum to 1");
  const Eigen::Index n = components.front().dim();
  for (const auto& c : components) {
    require(c.dim() == n, "components disagree on dimension");
    require(c.cov_chol.rows() == n && c.cov_chol.cols() == n,
            "cov_chol shape mismatch");
  }
}

Matrix cholesky_sqrt(const Matrix& C) {
  require(C.rows() == C.cols(), "cholesky_sqrt: matrix not square");
  const double asym = (C - C.transpose()).cwiseAbs().maxCoeff();
  const double scale = std::max(C.cwiseAbs().maxCoeff(), 1e-300);
  require(asym <= 1e-10 * scale, "cholesky_sqrt: matrix not symmetric");

  // Accumulation-order noise makes nominally symmetric matrices drift;
  // factorize the symmetric part.
  Matrix S = 0.5 * (C + C.transpose());
  Eigen::LLT<Matrix> llt(S);
  if (llt.info() != Eigen::Success) {
    throw PositivityLost("cholesky_sqrt: matrix not positive definite");
  }
  return llt.matrixL();
}

double gaussian_logpdf(const Vector& theta, const Vector& mean, const Matrix& cov_chol) {
  const Eigen::Index n = theta.size();
  Vector z = cov_chol.triangularView<Eigen::Lower>().solve(theta - mean);
  double logdet = cov_chol.diagonal().array().log().sum();
  return -0.5 * z.squaredNorm() - logdet - 0.5 * static_cast<double>(n) * kLog2Pi;
}

double gm_logpdf(const GaussianMixture& mix, const Vector& theta) {
  require(theta.size() == mix.dim(), "gm_logpdf: dimension mismatch");
  return responsibilities(mix, theta).log_density;
}

std::vector<Vector> component_scores(const GaussianMixture& mix, const Vector& theta) {
  require(theta.size() == mix.dim(), "component_scores: dimension mismatch");
  std::vector<Vector> v;
  v.reserve(mix.size());
  for (const auto& c : mix.components) {
    Vector y = c.cov_chol.triangularView<Eigen::Lower>().solve(theta - c.mean);
    v.push_back(c.cov_chol.triangularView<Eigen::Lower>().transpose().solve(y));
  }
  return v;
}

Vector gm_score(const GaussianMixture& mix, const Vector& theta) {
  require(theta.size() == mix.dim(), "gm_score: dimension mismatch");
  const auto resp = responsibilities(mix, theta);
  const auto v = component_scores(mix, theta);
  Vector s = Vector::Zero(mix.dim());
  for (int k = 0; k < mix.size(); ++k) {
    if (resp.r[k] > 0.0) s -= resp.r[k] * v[k];
  }
  return s;
}

Matrix gm_loghess(const GaussianMixture& mix, const Vector& theta) {
  require(theta.size() == mix.dim(), "gm_loghess: dimension mismatch");
  const Eigen::Index n = mix.dim();
  const auto resp = responsibilities(mix, theta);
  const auto v = component_scores(mix, theta);

  Matrix H = Matrix::Zero(n, n);
  Vector vbar = Vector::Zero(n);
  for (int k = 0; k < mix.size(); ++k) {
    const double rk = resp.r[k];
    if (rk <= 0.0) continue;
    const auto& c = mix.components[k];
    Matrix Linv = c.cov_chol.triangularView<Eigen::Lower>().solve(Matrix::Identity(n, n));
    H.noalias() += rk * (v[k] * v[k].transpose() - Linv.transpose() * Linv);
    vbar += rk * v[k];
  }
  H.noalias() -= vbar * vbar.transpose();
  return 0.5 * (H + H.transpose());
}

GaussianMixture marginal(const GaussianMixture& mix, const std::vector<int>& indices) {
  const Eigen::Index n = mix.dim();
  const Eigen::Index m = static_cast<Eigen::Index>(indices.size());
  require(m > 0, "marginal: empty index set");
  std::vector<bool> seen(n, false);
  for (int idx : indices) {
    require(idx >= 0 && idx < n, "marginal: index out of range");
    require(!seen[idx], "marginal: duplicate index");
    seen[idx] = true;
  }

  GaussianMixture out;
  out.weights = mix.weights;
  out.components.reserve(mix.size());
  for (const auto& c : mix.components) {
    Vector mean(m);
    Matrix cov(m, m);
    // C(i,j) = <row_i(L), row_j(L)>, so only the selected submatrix of C is
    // ever formed.
    for (Eigen::Index a = 0; a < m; ++a) {
      mean[a] = c.mean[indices[a]];
      for (Eigen::Index b = 0; b <= a; ++b) {
        double cij = c.cov_chol.row(indices[a]).dot(c.cov_chol.row(indices[b]));
        cov(a, b) = cij;
        cov(b, a) = cij;
      }
    }
    out.components.push_back({std::move(mean), cholesky_sqrt(cov)});
  }
  return out;
}

Vector sample_mixture(const GaussianMixture& mix, Rng& rng) {
  double u = rng.uniform();
  int k = 0;
  double acc = mix.weights[0];
  while (u > acc && k + 1 < mix.size()) acc += mix.weights[++k];
  const auto& c = mix.components[k];
  return c.mean + c.cov_chol * rng.normal_vector(c.dim());
}

std::string mixture_to_json(const GaussianMixture& mix) {
  nlohmann::json j;
  j["weights"] = std::vector<double>(mix.weights.begin(), mix.weights.end());
  auto& means = j["means"] = nlohmann::json::array();
  auto& chols = j["cov_chols"] = nlohmann::json::array();
  for (const auto& c : mix.components) {
    means.push_back(std::vector<double>(c.mean.begin(), c.mean.end()));
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < c.cov_chol.rows(); ++i) {
      std::vector<double> row(c.cov_chol.cols());
      for (Eigen::Index k = 0; k < c.cov_chol.cols(); ++k) row[k] = c.cov_chol(i, k);
      rows.push_back(row);
    }
    chols.push_back(rows);
  }
  return j.dump();
}

GaussianMixture mixture_from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  GaussianMixture mix;
  const auto& w = j.at("weights");
  mix.weights.resize(static_cast<Eigen::Index>(w.size()));
  for (std::size_t k = 0; k < w.size(); ++k) mix.weights[k] = w[k].get<double>();
  const auto& means = j.at("means");
  const auto& chols = j.at("cov_chols");
  require(means.size() == w.size() && chols.size() == w.size(),
          "mixture_from_json: ragged snapshot");
  for (std::size_t k = 0; k < means.size(); ++k) {
    GaussianComponent c;
    const auto& mk = means[k];
    c.mean.resize(static_cast<Eigen::Index>(mk.size()));
    for (std::size_t i = 0; i < mk.size(); ++i) c.mean[i] = mk[i].get<double>();
    const auto& rows = chols[k];
    c.cov_chol.resize(static_cast<Eigen::Index>(rows.size()),
                      static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      for (std::size_t l = 0; l < rows[i].size(); ++l) {
        c.cov_chol(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(l)) =
            rows[i][l].get<double>();
      }
    }
    mix.components.push_back(std::move(c));
  }
  mix.validate();
  return mix;
}

}  // namespace dfgmvi
