#include "stecm/params.hpp"

#include <cmath>
#include <stdexcept>

namespace stecm {

namespace {
constexpr double kTildeGammaClamp = 36.0;

double clamp_tilde(double tg) {
  if (tg > kTildeGammaClamp) return kTildeGammaClamp;
  if (tg < -kTildeGammaClamp) return -kTildeGammaClamp;
  return tg;
}
}  // namespace

void ModelDims::validate() const {
  if (n_regions <= 0) throw std::invalid_argument("n_regions must be positive");
  if (n_time < 2) throw std::invalid_argument("n_time must be at least 2");
  if (n_edges < 0 || n_edges % 2 != 0)
    throw std::invalid_argument("n_edges must be an even count");
}

void PriorConfig::override_prior(const std::string& name,
                                 const std::vector<double>& v) {
  auto two = [&](double& a, double& b) {
    if (v.size() != 2)
      throw std::invalid_argument("prior '" + name + "' takes 2 parameters");
    a = v[0];
    b = v[1];
  };
  if (name == "c_alpha") {
    two(c_alpha_mean, c_alpha_sd);
  } else if (name == "phi") {
    two(phi_a, phi_b);
  } else if (name == "sigma_alpha") {
    two(sigma_alpha_shape, sigma_alpha_rate);
  } else if (name == "sigma_lambda") {
    if (v.size() != 1)
      throw std::invalid_argument("prior 'sigma_lambda' takes 1 parameter");
    sigma_lambda_sd = v[0];
  } else if (name == "beta") {
    two(beta_shape, beta_rate);
  } else if (name == "gamma_init") {
    two(gamma_init_mean, gamma_init_sd);
  } else if (name == "sigma_gamma") {
    two(sigma_gamma_shape, sigma_gamma_rate);
  } else if (name == "mu_init") {
    two(mu_init_mean, mu_init_sd);
  } else if (name == "sigma_mu") {
    two(sigma_mu_shape, sigma_mu_rate);
  } else if (name == "sigma_y") {
    two(sigma_y_shape, sigma_y_rate);
  } else {
    throw std::invalid_argument("unknown prior name: '" + name + "'");
  }
}

void ModelParams::validate() const {
  const ModelDims d = dims();
  d.validate();
  if (alpha.size() != d.n_time - 1)
    throw std::invalid_argument("alpha length must be T-1");
  if (lambda.size() != d.n_regions)
    throw std::invalid_argument("lambda length must be N");
  if (tilde_gamma.rows() != d.n_edges || tilde_gamma.cols() != d.n_time - 1)
    throw std::invalid_argument("tilde_gamma must be n_edges x (T-1)");
  if (d.n_regions > 0 && std::abs(lambda.mean() - 1.0) > 1e-9)
    throw std::invalid_argument("mean(lambda) must be 1");
  if ((beta.array() <= 0.0).any())
    throw std::invalid_argument("beta must be positive");
  if (!(phi > 0.0 && phi < 1.0))
    throw std::invalid_argument("phi must be in (0,1)");
  for (double s : {sigma_alpha, sigma_lambda, sigma_gamma, sigma_mu, sigma_y})
    if (!(s > 0.0))
      throw std::invalid_argument("scale parameters must be positive");
}

ModelGrad ModelGrad::zero(const ModelDims& d) {
  ModelGrad g;
  g.alpha = Eigen::VectorXd::Zero(d.n_time - 1);
  g.lambda = Eigen::VectorXd::Zero(d.n_regions);
  g.beta = Eigen::VectorXd::Zero(d.n_edges);
  g.tilde_gamma = Eigen::MatrixXd::Zero(d.n_edges, d.n_time - 1);
  g.mu = Eigen::MatrixXd::Zero(d.n_regions, d.n_time);
  return g;
}

ParamLayout model_layout(const ModelDims& d) {
  d.validate();
  ParamLayout layout;
  layout.add("alpha", d.n_time - 1);
  layout.add("c_alpha", 1);
  layout.add("raw_phi", 1);
  layout.add("log_sigma_alpha", 1);
  layout.add("lambda_u", d.n_regions - 1);
  layout.add("log_sigma_lambda", 1);
  layout.add("log_beta", d.n_edges);
  layout.add("gamma_z", d.n_edges, d.n_time - 1);
  layout.add("log_sigma_gamma", 1);
  layout.add("mu", d.n_regions, d.n_time);
  layout.add("log_sigma_mu", 1);
  layout.add("log_sigma_y", 1);
  return layout;
}

std::pair<ModelParams, double> to_constrained(const Eigen::VectorXd& v,
                                              const ModelDims& d,
                                              const PriorConfig& prior) {
  const ParamLayout layout = model_layout(d);
  if (v.size() != layout.dim())
    throw std::invalid_argument("unconstrained vector has length " +
                                std::to_string(v.size()) + ", expected " +
                                std::to_string(layout.dim()));
  if (!v.allFinite())
    throw std::invalid_argument("non-finite unconstrained input");

  const int N = d.n_regions, T = d.n_time, K = d.n_edges;
  ModelParams p;
  double log_jac = 0.0;
  int off = 0;

  p.alpha = v.segment(off, T - 1);
  off += T - 1;
  p.c_alpha = v[off++];

  const double raw_phi = v[off++];
  p.phi = logistic(raw_phi);
  log_jac += std::log(p.phi) + std::log1p(-p.phi);

  auto take_sigma = [&](double& dst) {
    const double x = v[off++];
    dst = std::exp(x);
    log_jac += x;
  };
  take_sigma(p.sigma_alpha);

  // Loadings from standardized coordinates; the closure keeps the mean at
  // exactly one.
  const auto u = v.segment(off, N - 1);
  const int sigma_lambda_off = off + (N - 1);
  p.sigma_lambda = std::exp(v[sigma_lambda_off]);
  log_jac += v[sigma_lambda_off];
  p.lambda.resize(N);
  p.lambda.head(N - 1) = 1.0 + p.sigma_lambda * u.array();
  p.lambda[N - 1] = static_cast<double>(N) - p.lambda.head(N - 1).sum();
  off = sigma_lambda_off + 1;

  p.beta = v.segment(off, K).array().exp();
  log_jac += v.segment(off, K).sum();
  off += K;

  const Eigen::Map<const Eigen::MatrixXd> z(v.data() + off, K, T - 1);
  const int gamma_off = off;
  off += K * (T - 1);

  take_sigma(p.sigma_gamma);

  // Rebuild the walk from its innovations now that the scale is known.
  p.tilde_gamma.resize(K, T - 1);
  for (int k = 0; k < K; ++k) {
    double cur = prior.gamma_init_mean + prior.gamma_init_sd * z(k, 0);
    p.tilde_gamma(k, 0) = cur;
    for (int t = 1; t < T - 1; ++t) {
      cur += p.sigma_gamma * z(k, t);
      p.tilde_gamma(k, t) = cur;
    }
  }
  (void)gamma_off;

  p.mu = Eigen::Map<const Eigen::MatrixXd>(v.data() + off, N, T);
  off += N * T;

  take_sigma(p.sigma_mu);
  take_sigma(p.sigma_y);

  return {std::move(p), log_jac};
}

Eigen::VectorXd to_unconstrained(const ModelParams& p,
                                 const PriorConfig& prior) {
  const ModelDims d = p.dims();
  const ParamLayout layout = model_layout(d);
  const int N = d.n_regions, T = d.n_time, K = d.n_edges;

  Eigen::VectorXd v(layout.dim());
  int off = 0;
  v.segment(off, T - 1) = p.alpha;
  off += T - 1;
  v[off++] = p.c_alpha;
  v[off++] = logit(p.phi);
  v[off++] = std::log(p.sigma_alpha);
  v.segment(off, N - 1) =
      (p.lambda.head(N - 1).array() - 1.0) / p.sigma_lambda;
  off += N - 1;
  v[off++] = std::log(p.sigma_lambda);
  v.segment(off, K) = p.beta.array().log();
  off += K;
  Eigen::Map<Eigen::MatrixXd> z(v.data() + off, K, T - 1);
  for (int k = 0; k < K; ++k) {
    z(k, 0) =
        (p.tilde_gamma(k, 0) - prior.gamma_init_mean) / prior.gamma_init_sd;
    for (int t = 1; t < T - 1; ++t)
      z(k, t) = (p.tilde_gamma(k, t) - p.tilde_gamma(k, t - 1)) /
                p.sigma_gamma;
  }
  off += K * (T - 1);
  v[off++] = std::log(p.sigma_gamma);
  Eigen::Map<Eigen::MatrixXd>(v.data() + off, N, T) = p.mu;
  off += N * T;
  v[off++] = std::log(p.sigma_mu);
  v[off++] = std::log(p.sigma_y);
  return v;
}

double gamma_of(const ModelParams& p, int edge, int slice) {
  return -logistic(clamp_tilde(p.tilde_gamma(edge, slice)));
}

double dgamma_dtilde(double tilde_gamma) {
  const double s = logistic(clamp_tilde(tilde_gamma));
  return -s * (1.0 - s);
}

Eigen::SparseMatrix<double> build_B(const ModelParams& p,
                                    const RegionGraph& g) {
  const int n = g.n_regions;
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<size_t>(g.n_directed()));
  for (int k = 0; k < g.n_directed(); ++k) {
    const auto& [i, j] = g.directed_edges[static_cast<size_t>(k)];
    trip.emplace_back(i, j, p.beta[k]);
  }
  Eigen::SparseMatrix<double> B(n, n);
  B.setFromTriplets(trip.begin(), trip.end());
  return B;
}

Eigen::SparseMatrix<double> build_D(const ModelParams& p, const RegionGraph& g,
                                    int slice) {
  const int n = g.n_regions;
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<size_t>(g.n_directed() + n));
  Eigen::VectorXd diag = Eigen::VectorXd::Ones(n);
  for (int k = 0; k < g.n_directed(); ++k) {
    const auto& [i, j] = g.directed_edges[static_cast<size_t>(k)];
    const double gam = gamma_of(p, k, slice);
    trip.emplace_back(i, j, -(p.beta[k] + gam));
    diag[i] += gam;
  }
  for (int i = 0; i < n; ++i) trip.emplace_back(i, i, diag[i]);
  Eigen::SparseMatrix<double> D(n, n);
  D.setFromTriplets(trip.begin(), trip.end());
  return D;
}

double log_prior_base(const ModelParams& p, const PriorConfig& pr) {
  const ModelDims d = p.dims();
  const int N = d.n_regions, T = d.n_time, K = d.n_edges;
  double lp = 0.0;

  // Stationary AR(1) on the common trend.
  const double m0 = p.c_alpha / (1.0 - p.phi);
  const double s0 = p.sigma_alpha / std::sqrt(1.0 - p.phi * p.phi);
  lp += normal_lpdf(p.alpha[0], m0, s0);
  for (int t = 1; t < T - 1; ++t)
    lp += normal_lpdf(p.alpha[t], p.c_alpha + p.phi * p.alpha[t - 1],
                      p.sigma_alpha);
  lp += normal_lpdf(p.c_alpha, pr.c_alpha_mean, pr.c_alpha_sd);
  lp += beta_lpdf(p.phi, pr.phi_a, pr.phi_b);
  lp += gamma_lpdf(p.sigma_alpha, pr.sigma_alpha_shape, pr.sigma_alpha_rate);

  lp += half_normal_lpdf(p.sigma_lambda, pr.sigma_lambda_sd);

  for (int k = 0; k < K; ++k)
    lp += gamma_lpdf(p.beta[k], pr.beta_shape, pr.beta_rate);

  lp += gamma_lpdf(p.sigma_gamma, pr.sigma_gamma_shape, pr.sigma_gamma_rate);

  for (int i = 0; i < N; ++i)
    lp += normal_lpdf(p.mu(i, 0), pr.mu_init_mean, pr.mu_init_sd);
  lp += gamma_lpdf(p.sigma_mu, pr.sigma_mu_shape, pr.sigma_mu_rate);
  lp += gamma_lpdf(p.sigma_y, pr.sigma_y_shape, pr.sigma_y_rate);
  return lp;
}

double lambda_log_prior(const ModelParams& p) {
  double lp = 0.0;
  for (Eigen::Index i = 0; i < p.lambda.size(); ++i)
    lp += normal_lpdf(p.lambda[i], 1.0, p.sigma_lambda);
  return lp;
}

double gamma_walk_log_prior(const ModelParams& p, const PriorConfig& pr) {
  const ModelDims d = p.dims();
  const int T = d.n_time, K = d.n_edges;
  double lp = 0.0;
  for (int k = 0; k < K; ++k)
    lp += normal_lpdf(p.tilde_gamma(k, 0), pr.gamma_init_mean,
                      pr.gamma_init_sd);
  for (int t = 1; t < T - 1; ++t)
    for (int k = 0; k < K; ++k)
      lp += normal_lpdf(p.tilde_gamma(k, t), p.tilde_gamma(k, t - 1),
                        p.sigma_gamma);
  return lp;
}

double log_prior(const ModelParams& p, const PriorConfig& pr) {
  return log_prior_base(p, pr) + lambda_log_prior(p) +
         gamma_walk_log_prior(p, pr);
}

void accumulate_prior_base_grad(const ModelParams& p, const PriorConfig& pr,
                                ModelGrad& g) {
  const ModelDims d = p.dims();
  const int N = d.n_regions, T = d.n_time, K = d.n_edges;

  // AR(1) initial density: both moments depend on (c_alpha, phi, sigma_alpha).
  const double om = 1.0 - p.phi;
  const double om2 = 1.0 - p.phi * p.phi;
  const double m0 = p.c_alpha / om;
  const double s0 = p.sigma_alpha / std::sqrt(om2);
  {
    const double ddx = normal_lpdf_dx(p.alpha[0], m0, s0);
    const double ddm = -ddx;
    const double dds = normal_lpdf_dsd(p.alpha[0], m0, s0);
    g.alpha[0] += ddx;
    g.c_alpha += ddm / om;
    g.phi += ddm * p.c_alpha / (om * om) +
             dds * p.sigma_alpha * p.phi * std::pow(om2, -1.5);
    g.sigma_alpha += dds / std::sqrt(om2);
  }
  for (int t = 1; t < T - 1; ++t) {
    const double mean = p.c_alpha + p.phi * p.alpha[t - 1];
    const double ddx = normal_lpdf_dx(p.alpha[t], mean, p.sigma_alpha);
    g.alpha[t] += ddx;
    g.alpha[t - 1] += -ddx * p.phi;
    g.c_alpha += -ddx;
    g.phi += -ddx * p.alpha[t - 1];
    g.sigma_alpha += normal_lpdf_dsd(p.alpha[t], mean, p.sigma_alpha);
  }
  g.c_alpha += normal_lpdf_dx(p.c_alpha, pr.c_alpha_mean, pr.c_alpha_sd);
  g.phi += beta_lpdf_dx(p.phi, pr.phi_a, pr.phi_b);
  g.sigma_alpha +=
      gamma_lpdf_dx(p.sigma_alpha, pr.sigma_alpha_shape, pr.sigma_alpha_rate);

  g.sigma_lambda += half_normal_lpdf_dx(p.sigma_lambda, pr.sigma_lambda_sd);

  for (int k = 0; k < K; ++k)
    g.beta[k] += gamma_lpdf_dx(p.beta[k], pr.beta_shape, pr.beta_rate);

  g.sigma_gamma +=
      gamma_lpdf_dx(p.sigma_gamma, pr.sigma_gamma_shape, pr.sigma_gamma_rate);

  for (int i = 0; i < N; ++i)
    g.mu(i, 0) += normal_lpdf_dx(p.mu(i, 0), pr.mu_init_mean, pr.mu_init_sd);
  g.sigma_mu += gamma_lpdf_dx(p.sigma_mu, pr.sigma_mu_shape, pr.sigma_mu_rate);
  g.sigma_y += gamma_lpdf_dx(p.sigma_y, pr.sigma_y_shape, pr.sigma_y_rate);
}

Eigen::VectorXd chain_to_unconstrained(const ModelParams& p,
                                       const ModelGrad& g,
                                       const PriorConfig& prior) {
  const ModelDims d = p.dims();
  const int N = d.n_regions, T = d.n_time, K = d.n_edges;
  const ParamLayout layout = model_layout(d);

  Eigen::VectorXd out(layout.dim());
  int off = 0;
  out.segment(off, T - 1) = g.alpha;
  off += T - 1;
  out[off++] = g.c_alpha;
  // phi = logistic(raw): d phi/d raw = phi(1-phi); the Jacobian term
  // log(phi(1-phi)) contributes 1-2 phi.
  out[off++] = g.phi * p.phi * (1.0 - p.phi) + (1.0 - 2.0 * p.phi);
  out[off++] = g.sigma_alpha * p.sigma_alpha + 1.0;
  // Loadings: each standardized coordinate moves its own loading by
  // sigma_lambda and the closed one by -sigma_lambda; the scale collects
  // sum_j u_j (g_j - g_N).
  double sigma_lambda_extra = 0.0;
  for (int m = 0; m < N - 1; ++m) {
    const double diff = g.lambda[m] - g.lambda[N - 1];
    out[off + m] = p.sigma_lambda * diff;
    sigma_lambda_extra += (p.lambda[m] - 1.0) / p.sigma_lambda * diff;
  }
  off += N - 1;
  out[off++] =
      (g.sigma_lambda + sigma_lambda_extra) * p.sigma_lambda + 1.0;
  out.segment(off, K) =
      (g.beta.array() * p.beta.array() + 1.0).matrix();
  off += K;

  // Chain d/d tilde_gamma through the innovation map: each innovation
  // moves every later point of its walk, so suffix sums over time; the
  // walk scale collects sum_t G_t * (tilde_gamma_t - anchor) / sigma.
  Eigen::Map<Eigen::MatrixXd> gz(out.data() + off, K, T - 1);
  double sigma_gamma_extra = 0.0;
  for (int k = 0; k < K; ++k) {
    const double anchor = p.tilde_gamma(k, 0);
    double suffix = 0.0;
    for (int t = T - 2; t >= 1; --t) {
      suffix += g.tilde_gamma(k, t);
      gz(k, t) = p.sigma_gamma * suffix;
      sigma_gamma_extra +=
          g.tilde_gamma(k, t) * (p.tilde_gamma(k, t) - anchor) /
          p.sigma_gamma;
    }
    gz(k, 0) = prior.gamma_init_sd * (suffix + g.tilde_gamma(k, 0));
  }
  off += K * (T - 1);
  out[off++] = (g.sigma_gamma + sigma_gamma_extra) * p.sigma_gamma + 1.0;

  Eigen::Map<Eigen::MatrixXd>(out.data() + off, N, T) = g.mu;
  off += N * T;
  out[off++] = g.sigma_mu * p.sigma_mu + 1.0;
  out[off++] = g.sigma_y * p.sigma_y + 1.0;
  return out;
}

}  // namespace stecm
