#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <string>
#include <utility>
#include <vector>

#include "stecm/density.hpp"
#include "stecm/graph.hpp"
#include "stecm/layout.hpp"

namespace stecm {

/// Problem dimensions: N regions, T time points, n_edges directed edges (2E).
struct ModelDims {
  int n_regions = 0;
  int n_time = 0;
  int n_edges = 0;

  void validate() const;
  static ModelDims of(const RegionGraph& g, int n_time) {
    return {g.n_regions, n_time, g.n_directed()};
  }
};

/// Hyperparameters of the prior block. Defaults follow the model's standard
/// weakly informative choices; gamma entries are shape-rate.
struct PriorConfig {
  double c_alpha_mean = 0.0, c_alpha_sd = 0.1;
  double phi_a = 2.0, phi_b = 2.0;
  double sigma_alpha_shape = 2.0, sigma_alpha_rate = 100.0;
  double sigma_lambda_sd = 0.5;  // half-normal
  double beta_shape = 0.5, beta_rate = 2.0;
  double gamma_init_mean = -2.0, gamma_init_sd = 2.0;
  double sigma_gamma_shape = 2.0, sigma_gamma_rate = 10.0;
  double mu_init_mean = 3.0, mu_init_sd = 0.5;
  double sigma_mu_shape = 2.0, sigma_mu_rate = 20.0;
  double sigma_y_shape = 2.0, sigma_y_rate = 20.0;

  /// Replaces the named prior's parameters; throws on unknown names or
  /// wrong arity. Known names: c_alpha, phi, sigma_alpha, sigma_lambda,
  /// beta, gamma_init, sigma_gamma, mu_init, sigma_mu, sigma_y.
  void override_prior(const std::string& name, const std::vector<double>& v);
};

/// All constrained model quantities for one posterior point.
///
/// Indexing conventions (0-based): alpha(s) and the gamma slice s drive the
/// transition into time s+1, for s = 0..T-2. mu has a column per time point.
struct ModelParams {
  Eigen::VectorXd alpha;        // T-1
  double c_alpha = 0.0;
  double phi = 0.5;             // in (0,1)
  double sigma_alpha = 1.0;
  Eigen::VectorXd lambda;       // N, mean exactly 1
  double sigma_lambda = 1.0;
  Eigen::VectorXd beta;         // n_edges, positive
  Eigen::MatrixXd tilde_gamma;  // n_edges x (T-1), unconstrained logit(-gamma)
  double sigma_gamma = 1.0;
  Eigen::MatrixXd mu;           // N x T
  double sigma_mu = 1.0;
  double sigma_y = 1.0;

  ModelDims dims() const {
    return {static_cast<int>(mu.rows()), static_cast<int>(mu.cols()),
            static_cast<int>(beta.size())};
  }

  void validate() const;  // throws if any invariant is broken
};

/// Gradient with respect to the constrained quantities, plus tilde_gamma
/// (whose prior is evaluated directly on the unconstrained scale).
struct ModelGrad {
  Eigen::VectorXd alpha;
  double c_alpha = 0.0, phi = 0.0, sigma_alpha = 0.0;
  Eigen::VectorXd lambda;
  double sigma_lambda = 0.0;
  Eigen::VectorXd beta;
  Eigen::MatrixXd tilde_gamma;
  double sigma_gamma = 0.0;
  Eigen::MatrixXd mu;
  double sigma_mu = 0.0, sigma_y = 0.0;

  static ModelGrad zero(const ModelDims& d);
};

/// Flat unconstrained layout. Block order (matrices column-major):
///   alpha (T-1), c_alpha, raw_phi, log_sigma_alpha, lambda_u (N-1),
///   log_sigma_lambda, log_beta (n_edges), gamma_z (n_edges x (T-1)),
///   log_sigma_gamma, mu (N x T), log_sigma_mu, log_sigma_y.
///
/// Two blocks are sampled in non-centered form, so the scale parameters
/// enter their values multiplicatively instead of through their priors
/// (removing the scale funnels that defeat gradient-based samplers):
///   lambda_i = 1 + sigma_lambda * u_i for i < N, and the mean-1 closure
///   gives lambda_N = 1 - sigma_lambda * sum(u);
///   tilde_gamma(k,0) = gamma_init_mean + gamma_init_sd * z(k,0),
///   tilde_gamma(k,t) = tilde_gamma(k,t-1) + sigma_gamma * z(k,t).
ParamLayout model_layout(const ModelDims& d);

/// Maps an unconstrained vector to constrained parameters (reconstructing
/// the loadings and tilde_gamma from their standardized coordinates).
/// Returns the parameters and the log-Jacobian of the transform (sum of
/// log-absolute derivatives: exp for scale parameters and beta, logistic
/// for phi; lambda_u and gamma_z contribute nothing because their priors
/// are evaluated on the sampled coordinates). Throws on non-finite input
/// or wrong length.
std::pair<ModelParams, double> to_constrained(const Eigen::VectorXd& v,
                                              const ModelDims& d,
                                              const PriorConfig& prior = {});

/// Inverse of to_constrained (exact up to floating point).
Eigen::VectorXd to_unconstrained(const ModelParams& p,
                                 const PriorConfig& prior = {});

/// Error correction coefficient gamma(k, s) = -logistic(tilde_gamma(k, s)),
/// always in (-1, 0). tilde_gamma is clamped to +-36 before exponentiation.
double gamma_of(const ModelParams& p, int edge, int slice);

/// d gamma / d tilde_gamma at a given tilde_gamma value (negative).
double dgamma_dtilde(double tilde_gamma);

/// Short-run coefficient matrix: b(i,j) = beta_{i,j} on directed edges.
Eigen::SparseMatrix<double> build_B(const ModelParams& p, const RegionGraph& g);

/// Lagged-level coefficient matrix for one gamma slice s in [0, T-2]:
/// d(i,j) = -(beta_{i,j} + gamma_{i,j,s}) on edges,
/// d(i,i) = 1 + sum_j gamma_{i,j,s}.
Eigen::SparseMatrix<double> build_D(const ModelParams& p, const RegionGraph& g,
                                    int slice);

/// Joint log-density of the full prior block evaluated at p; equals
/// log_prior_base + lambda_log_prior + gamma_walk_log_prior exactly.
double log_prior(const ModelParams& p, const PriorConfig& prior);

/// Every prior term except the loading block and the tilde_gamma random
/// walk (whose densities the posterior evaluates on the standardized
/// coordinates instead).
double log_prior_base(const ModelParams& p, const PriorConfig& prior);

/// The loading block: all N marginal N(1, sigma_lambda^2) densities,
/// including the closed one.
double lambda_log_prior(const ModelParams& p);

/// The tilde_gamma block of the prior: initial normals plus the random
/// walk increments.
double gamma_walk_log_prior(const ModelParams& p, const PriorConfig& prior);

/// Adds d log_prior_base / d (constrained quantities) into g; leaves
/// g.tilde_gamma untouched.
void accumulate_prior_base_grad(const ModelParams& p,
                                const PriorConfig& prior, ModelGrad& g);

/// Converts a constrained-space gradient (with g.tilde_gamma holding
/// d/d tilde_gamma terms) to the gradient with respect to the unconstrained
/// coordinates: chains tilde_gamma onto the innovations and the walk scale,
/// and adds the log-Jacobian's own gradient. The innovations' own standard
/// normal prior is the caller's responsibility.
Eigen::VectorXd chain_to_unconstrained(const ModelParams& p,
                                       const ModelGrad& g,
                                       const PriorConfig& prior);

}  // namespace stecm
