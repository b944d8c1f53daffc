#pragma once

#include <Eigen/Core>

#include <utility>
#include <vector>

#include "stecm/graph.hpp"
#include "stecm/panel.hpp"
#include "stecm/params.hpp"
#include "stecm/rng.hpp"
#include "stecm/sampler.hpp"

namespace stecm {

/// Draws a full set of structural parameters (everything except the latent
/// prices) from the prior. Loadings are projected onto the exact mean-1
/// constraint. mu is left zero; gen_synthetic fills it.
ModelParams sample_prior_params(const RegionGraph& g, int n_time, Rng& rng,
                                const PriorConfig& prior = {});

/// Forward-simulates the generative model using the structural quantities
/// of `truth`: initial latent prices from the mu_1 prior, then
/// (I-B) mu_t = lambda alpha_{t-1} + D_{t-1} mu_{t-1} + eps_t, observations
/// with Gaussian noise, and independent missingness at missing_rate.
/// Returns the panel and the truth with its realized latent path filled in.
std::pair<PricePanel, ModelParams> gen_synthetic(ModelParams truth,
                                                 const RegionGraph& g,
                                                 double missing_rate, Rng& rng,
                                                 const PriorConfig& prior = {});

/// Expected latent-price response to a one-region shock.
struct ShockResult {
  Eigen::MatrixXd trajectories;      // N x (months+1), log deviations
  Eigen::VectorXd max_pct_increase;  // 100 (exp(max_t traj) - 1), >= 0
  std::vector<int> month_of_max;
  int shock_region = 0;
  double delta = 0.01;
  int months = 12;
  int gamma_slice = 0;  // 0-based gamma slice frozen for the experiment
  long n_draws_used = 0;
  long n_draws_skipped = 0;
};

/// Propagates a log-price shock of size delta at shock_region through the
/// expected-value recursion E[mu_t] = (I-B)^{-1} D E[mu_{t-1}], with the
/// trend set to zero and gamma frozen at gamma_slice, separately for every
/// posterior draw, then averages the trajectories over draws. Draws with a
/// singular I-B are skipped; more than 1% skipped aborts.
ShockResult shock_experiment(const PosteriorDraws& draws, const RegionGraph& g,
                             int shock_region, double delta = 0.01,
                             int months = 12, int gamma_slice = 0);

}  // namespace stecm
