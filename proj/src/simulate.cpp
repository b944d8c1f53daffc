#include "stecm/simulate.hpp"

#include <Eigen/SparseLU>

#include <cmath>
#include <stdexcept>

namespace stecm {

ModelParams sample_prior_params(const RegionGraph& g, int n_time, Rng& rng,
                                const PriorConfig& prior) {
  const int N = g.n_regions, T = n_time, K = g.n_directed();
  ModelDims dims{N, T, K};
  dims.validate();

  ModelParams p;
  p.c_alpha = rng.normal(prior.c_alpha_mean, prior.c_alpha_sd);
  p.phi = rng.beta(prior.phi_a, prior.phi_b);
  p.sigma_alpha = rng.gamma(prior.sigma_alpha_shape, prior.sigma_alpha_rate);
  p.alpha.resize(T - 1);
  p.alpha[0] = rng.normal(p.c_alpha / (1.0 - p.phi),
                          p.sigma_alpha / std::sqrt(1.0 - p.phi * p.phi));
  for (int t = 1; t < T - 1; ++t)
    p.alpha[t] = rng.normal(p.c_alpha + p.phi * p.alpha[t - 1], p.sigma_alpha);

  p.sigma_lambda = std::abs(rng.normal(0.0, prior.sigma_lambda_sd));
  p.lambda.resize(N);
  for (int i = 0; i < N; ++i) p.lambda[i] = rng.normal(1.0, p.sigma_lambda);
  // Conditioning independent normals on their mean projects them.
  p.lambda.array() += 1.0 - p.lambda.mean();

  p.beta.resize(K);
  for (int k = 0; k < K; ++k)
    p.beta[k] = rng.gamma(prior.beta_shape, prior.beta_rate);

  p.sigma_gamma = rng.gamma(prior.sigma_gamma_shape, prior.sigma_gamma_rate);
  p.tilde_gamma.resize(K, T - 1);
  for (int k = 0; k < K; ++k)
    p.tilde_gamma(k, 0) = rng.normal(prior.gamma_init_mean,
                                     prior.gamma_init_sd);
  for (int t = 1; t < T - 1; ++t)
    for (int k = 0; k < K; ++k)
      p.tilde_gamma(k, t) = rng.normal(p.tilde_gamma(k, t - 1), p.sigma_gamma);

  p.sigma_mu = rng.gamma(prior.sigma_mu_shape, prior.sigma_mu_rate);
  p.sigma_y = rng.gamma(prior.sigma_y_shape, prior.sigma_y_rate);
  p.mu = Eigen::MatrixXd::Zero(N, T);
  return p;
}

std::pair<PricePanel, ModelParams> gen_synthetic(ModelParams truth,
                                                 const RegionGraph& g,
                                                 double missing_rate, Rng& rng,
                                                 const PriorConfig& prior) {
  const ModelDims d = truth.dims();
  d.validate();
  if (d.n_regions != g.n_regions || d.n_edges != g.n_directed())
    throw std::invalid_argument("truth parameters do not match the graph");
  if (!(missing_rate >= 0.0 && missing_rate < 1.0))
    throw std::invalid_argument("missing_rate must be in [0,1)");
  const int N = d.n_regions, T = d.n_time;

  Eigen::SparseMatrix<double> ib(N, N);
  {
    std::vector<Eigen::Triplet<double>> trip;
    for (int i = 0; i < N; ++i) trip.emplace_back(i, i, 1.0);
    for (int k = 0; k < g.n_directed(); ++k) {
      const auto& [i, j] = g.directed_edges[static_cast<size_t>(k)];
      trip.emplace_back(i, j, -truth.beta[k]);
    }
    ib.setFromTriplets(trip.begin(), trip.end());
  }
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  lu.compute(ib);
  if (lu.info() != Eigen::Success)
    throw std::runtime_error("I - B is singular for the given truth");

  truth.mu.resize(N, T);
  for (int i = 0; i < N; ++i)
    truth.mu(i, 0) = rng.normal(prior.mu_init_mean, prior.mu_init_sd);

  Eigen::VectorXd rhs(N);
  for (int t = 1; t < T; ++t) {
    const int s = t - 1;
    rhs = truth.lambda * truth.alpha[s];
    // D_{t-1} mu_{t-1} accumulated by edges, plus the latent innovation.
    rhs += truth.mu.col(t - 1);
    for (int k = 0; k < g.n_directed(); ++k) {
      const auto& [i, j] = g.directed_edges[static_cast<size_t>(k)];
      const double gam = gamma_of(truth, k, s);
      rhs[i] += gam * (truth.mu(i, t - 1) - truth.mu(j, t - 1)) -
                truth.beta[k] * truth.mu(j, t - 1);
    }
    for (int i = 0; i < N; ++i) rhs[i] += rng.normal(0.0, truth.sigma_mu);
    truth.mu.col(t) = lu.solve(rhs);
  }

  PricePanel panel;
  panel.n_regions = N;
  panel.n_time = T;
  panel.y.resize(N, T);
  panel.observed.resize(N, T);
  for (int t = 0; t < T; ++t)
    for (int i = 0; i < N; ++i) {
      panel.y(i, t) = truth.mu(i, t) + rng.normal(0.0, truth.sigma_y);
      panel.observed(i, t) = !rng.bernoulli(missing_rate);
    }
  return {std::move(panel), std::move(truth)};
}

ShockResult shock_experiment(const PosteriorDraws& draws, const RegionGraph& g,
                             int shock_region, double delta, int months,
                             int gamma_slice) {
  if (shock_region < 0 || shock_region >= g.n_regions)
    throw std::invalid_argument("shock region out of range");
  if (months < 0) throw std::invalid_argument("months must be >= 0");

  const ParamBlock* gz = draws.layout.find("gamma_z");
  if (!gz)
    throw std::invalid_argument(
        "draws do not come from the full model (no gamma_z block)");
  if (gamma_slice < 0 || gamma_slice >= gz->cols)
    throw std::invalid_argument("gamma slice out of range");

  const int N = g.n_regions;
  if (gz->rows != g.n_directed())
    throw std::invalid_argument("draws and graph disagree on edge count");
  const int ls_off = draws.layout.block("log_sigma_gamma").offset;
  const double anchor_mean = draws.find_meta("gamma_init_mean", -2.0);
  const double anchor_sd = draws.find_meta("gamma_init_sd", 2.0);

  ShockResult res;
  res.shock_region = shock_region;
  res.delta = delta;
  res.months = months;
  res.gamma_slice = gamma_slice;
  res.trajectories = Eigen::MatrixXd::Zero(N, months + 1);

  const ParamBlock& lb = draws.layout.block("log_beta");
  Eigen::SparseMatrix<double> ib(N, N);
  Eigen::VectorXd x(N), rhs(N);

  for (int c = 0; c < draws.n_chains; ++c) {
    for (int kdraw = 0; kdraw < draws.n_draws; ++kdraw) {
      const auto v = draws.draws[static_cast<size_t>(c)].col(kdraw);

      std::vector<Eigen::Triplet<double>> trip;
      trip.reserve(static_cast<size_t>(N + g.n_directed()));
      for (int i = 0; i < N; ++i) trip.emplace_back(i, i, 1.0);
      for (int k = 0; k < g.n_directed(); ++k) {
        const auto& [i, j] = g.directed_edges[static_cast<size_t>(k)];
        trip.emplace_back(i, j, -std::exp(v[lb.index(k)]));
      }
      ib.setFromTriplets(trip.begin(), trip.end());
      Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
      lu.compute(ib);
      if (lu.info() != Eigen::Success ||
          lu.logAbsDeterminant() < std::log(1e-12 * N)) {
        ++res.n_draws_skipped;
        continue;
      }

      // Rebuild the frozen gamma slice from the walk innovations.
      const double sigma_gamma = std::exp(v[ls_off]);
      Eigen::VectorXd gamma(g.n_directed());
      for (int k = 0; k < g.n_directed(); ++k) {
        double tilde = anchor_mean + anchor_sd * v[gz->index(k, 0)];
        for (int u = 1; u <= gamma_slice; ++u)
          tilde += sigma_gamma * v[gz->index(k, u)];
        gamma[k] = -logistic(std::min(36.0, std::max(-36.0, tilde)));
      }

      x.setZero();
      x[shock_region] = delta;
      res.trajectories.col(0) += x;
      for (int m = 1; m <= months; ++m) {
        // rhs = D x with gamma frozen at the chosen slice.
        rhs = x;
        for (int k = 0; k < g.n_directed(); ++k) {
          const auto& [i, j] = g.directed_edges[static_cast<size_t>(k)];
          const double beta = std::exp(v[lb.index(k)]);
          rhs[i] += gamma[k] * (x[i] - x[j]) - beta * x[j];
        }
        x = lu.solve(rhs);
        res.trajectories.col(m) += x;
      }
      ++res.n_draws_used;
    }
  }

  const long total = res.n_draws_used + res.n_draws_skipped;
  if (total == 0) throw std::invalid_argument("no draws to propagate");
  if (res.n_draws_skipped * 100 > total)
    throw std::runtime_error("more than 1% of draws had singular I - B (" +
                             std::to_string(res.n_draws_skipped) + "/" +
                             std::to_string(total) + ")");
  if (res.n_draws_used == 0) throw std::runtime_error("all draws skipped");
  res.trajectories /= static_cast<double>(res.n_draws_used);

  res.max_pct_increase.resize(N);
  res.month_of_max.assign(static_cast<size_t>(N), 0);
  for (int i = 0; i < N; ++i) {
    double best = res.trajectories(i, 0);
    int best_m = 0;
    for (int m = 1; m <= months; ++m)
      if (res.trajectories(i, m) > best) {
        best = res.trajectories(i, m);
        best_m = m;
      }
    res.max_pct_increase[i] = 100.0 * (std::exp(best) - 1.0);
    res.month_of_max[static_cast<size_t>(i)] = best_m;
  }
  return res;
}

}  // namespace stecm
