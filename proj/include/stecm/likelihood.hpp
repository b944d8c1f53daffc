#pragma once

#include <Eigen/Core>

#include "stecm/graph.hpp"
#include "stecm/layout.hpp"
#include "stecm/panel.hpp"
#include "stecm/params.hpp"

namespace stecm {

/// Log-density of mu_t | mu_{t-1} for one transition, t in [1, T-1] 0-based
/// (driven by alpha and the gamma slice at t-1). Standalone: factorizes
/// I-B internally. Returns -inf when I-B is numerically singular.
double log_transition(const ModelParams& p, const RegionGraph& g, int t);

/// Sum of scalar Gaussian observation densities over observed cells;
/// missing entries contribute nothing.
double log_observation(const ModelParams& p, const PricePanel& panel);

/// Joint log-posterior over the unconstrained coordinate vector:
/// prior + transitions + observations + transform log-Jacobian.
///
/// Pure function of its input; safe to call concurrently from several
/// threads. Rejected states (non-finite input, singular I-B) evaluate to
/// -inf, in which case *grad is untouched.
class EcmPosterior {
 public:
  EcmPosterior(RegionGraph graph, PricePanel panel, PriorConfig prior = {});

  double value(const Eigen::VectorXd& v, Eigen::VectorXd* grad = nullptr) const;

  int dim() const { return layout_.dim(); }
  const ParamLayout& layout() const { return layout_; }
  const ModelDims& dims() const { return dims_; }
  const RegionGraph& graph() const { return graph_; }
  const PricePanel& panel() const { return panel_; }
  const PriorConfig& prior() const { return prior_; }

 private:
  RegionGraph graph_;
  PricePanel panel_;
  PriorConfig prior_;
  ModelDims dims_;
  ParamLayout layout_;
};

double log_posterior(const Eigen::VectorXd& v, const PricePanel& panel,
                     const RegionGraph& g, const PriorConfig& prior = {});

Eigen::VectorXd grad_log_posterior(const Eigen::VectorXd& v,
                                   const PricePanel& panel,
                                   const RegionGraph& g,
                                   const PriorConfig& prior = {});

}  // namespace stecm
