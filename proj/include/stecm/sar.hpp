#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <utility>

#include "stecm/graph.hpp"
#include "stecm/layout.hpp"
#include "stecm/panel.hpp"
#include "stecm/params.hpp"
#include "stecm/rng.hpp"

namespace stecm {

/// Simplified spatial baseline: differences follow rho W (mu_t - mu_{t-1})
/// with a fixed spectrally normalized adjacency W, so
/// mu_t ~ N(mu_{t-1}, sigma_mu^2 (I - rho W)^{-1} (I - rho W)^{-T}).
struct SarParams {
  double rho = 0.0;  // in (-1, 1)
  double sigma_mu = 1.0;
  double sigma_y = 1.0;
  Eigen::MatrixXd mu;  // N x T
};

/// Unconstrained layout: raw_rho (atanh), log_sigma_mu, log_sigma_y, mu.
ParamLayout sar_layout(int n_regions, int n_time);

/// rho = tanh(raw_rho); scales are exp-transformed. Returns the params and
/// the transform log-Jacobian.
std::pair<SarParams, double> sar_to_constrained(const Eigen::VectorXd& v,
                                                int n_regions, int n_time);

Eigen::VectorXd sar_to_unconstrained(const SarParams& p);

/// Log-posterior target for the SAR baseline. Same observation model and
/// mu_1 prior as the main model; rho is uniform on (-1,1), scales keep the
/// main model's sigma_mu / sigma_y priors.
class SarPosterior {
 public:
  SarPosterior(RegionGraph graph, PricePanel panel, PriorConfig prior = {});

  double value(const Eigen::VectorXd& v, Eigen::VectorXd* grad = nullptr) const;

  int dim() const { return layout_.dim(); }
  const ParamLayout& layout() const { return layout_; }
  const RegionGraph& graph() const { return graph_; }
  const PricePanel& panel() const { return panel_; }
  const Eigen::SparseMatrix<double>& W() const { return w_; }

 private:
  RegionGraph graph_;
  PricePanel panel_;
  PriorConfig prior_;
  ParamLayout layout_;
  Eigen::SparseMatrix<double> w_;
};

double sar_log_posterior(const Eigen::VectorXd& v, const PricePanel& panel,
                         const RegionGraph& g, const PriorConfig& prior = {});

/// Forward-simulates the SAR model; used by recovery tests. Returns the
/// panel and the latent path.
std::pair<PricePanel, Eigen::MatrixXd> sar_synthetic(
    const RegionGraph& g, int n_time, double rho, double sigma_mu,
    double sigma_y, double missing_rate, Rng& rng,
    double mu_init_mean = 3.0, double mu_init_sd = 0.5);

}  // namespace stecm
