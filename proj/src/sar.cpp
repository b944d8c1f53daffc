#include "stecm/sar.hpp"

#include <Eigen/SparseLU>

#include <cmath>
#include <stdexcept>

#include "stecm/density.hpp"

namespace stecm {

ParamLayout sar_layout(int n_regions, int n_time) {
  if (n_regions <= 0 || n_time < 2)
    throw std::invalid_argument("SAR model needs N >= 1 and T >= 2");
  ParamLayout layout;
  layout.add("raw_rho", 1);
  layout.add("log_sigma_mu", 1);
  layout.add("log_sigma_y", 1);
  layout.add("mu", n_regions, n_time);
  return layout;
}

std::pair<SarParams, double> sar_to_constrained(const Eigen::VectorXd& v,
                                                int n_regions, int n_time) {
  const ParamLayout layout = sar_layout(n_regions, n_time);
  if (v.size() != layout.dim())
    throw std::invalid_argument("SAR parameter vector has wrong length");
  if (!v.allFinite())
    throw std::invalid_argument("non-finite unconstrained input");

  SarParams p;
  double log_jac = 0.0;
  p.rho = std::tanh(v[0]);
  log_jac += std::log1p(-p.rho * p.rho);
  p.sigma_mu = std::exp(v[1]);
  log_jac += v[1];
  p.sigma_y = std::exp(v[2]);
  log_jac += v[2];
  p.mu = Eigen::Map<const Eigen::MatrixXd>(v.data() + 3, n_regions, n_time);
  return {std::move(p), log_jac};
}

Eigen::VectorXd sar_to_unconstrained(const SarParams& p) {
  const int N = static_cast<int>(p.mu.rows());
  const int T = static_cast<int>(p.mu.cols());
  Eigen::VectorXd v(sar_layout(N, T).dim());
  v[0] = std::atanh(p.rho);
  v[1] = std::log(p.sigma_mu);
  v[2] = std::log(p.sigma_y);
  Eigen::Map<Eigen::MatrixXd>(v.data() + 3, N, T) = p.mu;
  return v;
}

SarPosterior::SarPosterior(RegionGraph graph, PricePanel panel,
                           PriorConfig prior)
    : graph_(std::move(graph)),
      panel_(std::move(panel)),
      prior_(prior),
      layout_(sar_layout(graph_.n_regions, panel_.n_time)) {
  panel_.validate();
  if (panel_.n_regions != graph_.n_regions)
    throw std::invalid_argument("panel and graph disagree on region count");
  w_ = spectral_normalize(adjacency_matrix(graph_)).sparseView();
}

double SarPosterior::value(const Eigen::VectorXd& v,
                           Eigen::VectorXd* grad) const {
  if (v.size() != layout_.dim())
    throw std::invalid_argument("parameter vector has wrong length");
  if (!v.allFinite()) return kNegInf;
  // Same saturation guard as the main model.
  if (v.cwiseAbs().maxCoeff() > 60.0) return kNegInf;

  const int N = graph_.n_regions;
  const int T = panel_.n_time;
  const auto [p, log_jac] = sar_to_constrained(v, N, T);
  if (!(p.sigma_mu > 0.0) || !std::isfinite(p.sigma_mu) ||
      !(p.sigma_y > 0.0) || !std::isfinite(p.sigma_y))
    return kNegInf;
  if (!(std::abs(p.rho) < 1.0)) return kNegInf;

  Eigen::SparseMatrix<double> a(N, N);
  a.setIdentity();
  a -= p.rho * w_;
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  lu.compute(a);
  if (lu.info() != Eigen::Success) return kNegInf;
  const double log_abs_det = lu.logAbsDeterminant();
  if (!std::isfinite(log_abs_det) ||
      log_abs_det < std::log(1e-12 * N))
    return kNegInf;

  const double s2 = p.sigma_mu * p.sigma_mu;
  const double trans_const = -0.5 * N * (kLog2Pi + std::log(s2));

  // Priors: rho ~ uniform(-1,1); scales and mu_1 as in the main model.
  double lp = log_jac + std::log(0.5);
  lp += gamma_lpdf(p.sigma_mu, prior_.sigma_mu_shape, prior_.sigma_mu_rate);
  lp += gamma_lpdf(p.sigma_y, prior_.sigma_y_shape, prior_.sigma_y_rate);
  for (int i = 0; i < N; ++i)
    lp += normal_lpdf(p.mu(i, 0), prior_.mu_init_mean, prior_.mu_init_sd);

  Eigen::MatrixXd R(N, T - 1);
  for (int t = 1; t < T; ++t) {
    const Eigen::VectorXd delta = p.mu.col(t) - p.mu.col(t - 1);
    R.col(t - 1) = delta - p.rho * (w_ * delta);
    lp += trans_const - R.col(t - 1).squaredNorm() / (2.0 * s2) + log_abs_det;
  }

  for (int t = 0; t < T; ++t)
    for (int i = 0; i < N; ++i)
      if (panel_.observed(i, t))
        lp += normal_lpdf(panel_.y(i, t), p.mu(i, t), p.sigma_y);

  if (!(lp > -1e10) || !std::isfinite(lp)) return kNegInf;
  if (!grad) return lp;

  double g_rho = 0.0, g_sigma_mu = 0.0, g_sigma_y = 0.0;
  Eigen::MatrixXd g_mu = Eigen::MatrixXd::Zero(N, T);

  g_sigma_mu +=
      gamma_lpdf_dx(p.sigma_mu, prior_.sigma_mu_shape, prior_.sigma_mu_rate);
  g_sigma_y +=
      gamma_lpdf_dx(p.sigma_y, prior_.sigma_y_shape, prior_.sigma_y_rate);
  for (int i = 0; i < N; ++i)
    g_mu(i, 0) += normal_lpdf_dx(p.mu(i, 0), prior_.mu_init_mean,
                                 prior_.mu_init_sd);

  const double inv_s2 = 1.0 / s2;
  const double dlogdet_drho = -lu.solve(Eigen::MatrixXd(w_)).trace();
  for (int t = 1; t < T; ++t) {
    const auto r = R.col(t - 1);
    const Eigen::VectorXd delta = p.mu.col(t) - p.mu.col(t - 1);
    const Eigen::VectorXd wdelta = w_ * delta;
    const Eigen::VectorXd at_r = r - p.rho * (w_.transpose() * r);

    g_mu.col(t) -= inv_s2 * at_r;
    g_mu.col(t - 1) += inv_s2 * at_r;
    g_rho += inv_s2 * r.dot(wdelta) + dlogdet_drho;
    g_sigma_mu += -N / p.sigma_mu + r.squaredNorm() / (s2 * p.sigma_mu);
  }

  for (int t = 0; t < T; ++t)
    for (int i = 0; i < N; ++i)
      if (panel_.observed(i, t)) {
        g_mu(i, t) += normal_lpdf_dx(p.mu(i, t), panel_.y(i, t), p.sigma_y);
        g_sigma_y += normal_lpdf_dsd(panel_.y(i, t), p.mu(i, t), p.sigma_y);
      }

  grad->resize(layout_.dim());
  // raw_rho: d rho/d raw = 1 - rho^2; Jacobian log(1-rho^2) adds -2 rho.
  (*grad)[0] = g_rho * (1.0 - p.rho * p.rho) - 2.0 * p.rho;
  (*grad)[1] = g_sigma_mu * p.sigma_mu + 1.0;
  (*grad)[2] = g_sigma_y * p.sigma_y + 1.0;
  Eigen::Map<Eigen::MatrixXd>(grad->data() + 3, N, T) = g_mu;
  return lp;
}

double sar_log_posterior(const Eigen::VectorXd& v, const PricePanel& panel,
                         const RegionGraph& g, const PriorConfig& prior) {
  return SarPosterior(g, panel, prior).value(v);
}

std::pair<PricePanel, Eigen::MatrixXd> sar_synthetic(
    const RegionGraph& g, int n_time, double rho, double sigma_mu,
    double sigma_y, double missing_rate, Rng& rng, double mu_init_mean,
    double mu_init_sd) {
  const int N = g.n_regions;
  Eigen::SparseMatrix<double> w =
      spectral_normalize(adjacency_matrix(g)).sparseView();
  Eigen::SparseMatrix<double> a(N, N);
  a.setIdentity();
  a -= rho * w;
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  lu.compute(a);
  if (lu.info() != Eigen::Success)
    throw std::runtime_error("I - rho W is singular");

  Eigen::MatrixXd mu(N, n_time);
  for (int i = 0; i < N; ++i) mu(i, 0) = rng.normal(mu_init_mean, mu_init_sd);
  Eigen::VectorXd eps(N);
  for (int t = 1; t < n_time; ++t) {
    for (int i = 0; i < N; ++i) eps[i] = rng.normal(0.0, sigma_mu);
    mu.col(t) = mu.col(t - 1) + lu.solve(eps);
  }

  PricePanel panel;
  panel.n_regions = N;
  panel.n_time = n_time;
  panel.y.resize(N, n_time);
  panel.observed.resize(N, n_time);
  for (int t = 0; t < n_time; ++t)
    for (int i = 0; i < N; ++i) {
      panel.y(i, t) = mu(i, t) + rng.normal(0.0, sigma_y);
      panel.observed(i, t) = !rng.bernoulli(missing_rate);
    }
  return {std::move(panel), std::move(mu)};
}

}  // namespace stecm
