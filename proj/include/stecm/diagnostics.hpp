#pragma once

#include <Eigen/Core>

#include <string>
#include <utility>
#include <vector>

#include "stecm/graph.hpp"
#include "stecm/layout.hpp"
#include "stecm/sampler.hpp"

namespace stecm {

struct DiagnosticResult {
  double value = 0.0;
  bool degenerate = false;  // constant input, value not informative
};

/// Rank-normalized split potential scale reduction factor. Needs at least
/// two chains with four draws each. Constant input reports 1.0, degenerate.
DiagnosticResult split_rhat(const std::vector<Eigen::VectorXd>& chains);

/// Bulk effective sample size: rank-normalized split chains, paired
/// autocorrelation sums with the initial monotone adjustment.
DiagnosticResult bulk_ess(const std::vector<Eigen::VectorXd>& chains);

/// Linear-interpolation quantile of an unsorted sample (R type 7).
double quantile(std::vector<double> values, double q);

/// Inverse standard normal CDF (used for rank normalization).
double inv_normal_cdf(double p);

enum class Transform { identity, exp_fn, logistic_fn, neg_logistic, tanh_fn };

/// One scalar reporting quantity derived from an unconstrained draw:
///   transform(constant + sum_i coeff_i * v[i]
///             + exp(v[scale_index]) * sum_j coeff_j * v[j])
/// The scaled sum (active when scale_index >= 0) reconstructs random-walk
/// coordinates from their non-centered innovations; plain coordinates and
/// the closed loading use the linear part alone.
struct ScalarSpec {
  std::string name;
  std::string group;
  Transform transform = Transform::identity;
  double constant = 0.0;
  std::vector<std::pair<int, double>> terms;  // (flat index, coefficient)
  int scale_index = -1;
  std::vector<std::pair<int, double>> scaled_terms;

  double eval(const Eigen::VectorXd& v) const;

  static ScalarSpec coord(std::string name, int index,
                          Transform tr = Transform::identity,
                          std::string group = "");
};

struct SummaryRow {
  std::string name;
  std::string group;
  double mean = 0.0;
  double median = 0.0;
  double q025 = 0.0;
  double q975 = 0.0;
  double ess_bulk = 0.0;
  double rhat = 0.0;
  bool flagged = false;  // degenerate diagnostics or ESS above 1.5 x draws
};

/// Full list of reportable quantities for the main model. Gamma and mu
/// blocks are large and off by default. The anchors are the walk's initial
/// mean and sd (needed to rebuild gamma from its innovations).
std::vector<ScalarSpec> ecm_scalar_specs(const ParamLayout& layout,
                                         const RegionGraph& g,
                                         bool include_gamma = false,
                                         bool include_mu = false,
                                         double gamma_anchor_mean = -2.0,
                                         double gamma_anchor_sd = 2.0);

std::vector<ScalarSpec> sar_scalar_specs(const ParamLayout& layout,
                                         bool include_mu = false);

/// One identity spec per flat coordinate (generic targets).
std::vector<ScalarSpec> generic_scalar_specs(const ParamLayout& layout);

/// Filters specs by selector tokens: a token matches names by prefix, or
/// groups exactly with the "group:" syntax. Throws if a token matches
/// nothing.
std::vector<ScalarSpec> select_specs(const std::vector<ScalarSpec>& all,
                                     const std::vector<std::string>& selectors);

/// Draw-wise transformation first, then summarization. Quantiles and the
/// median are pooled across chains; R-hat and ESS split by chain.
std::vector<SummaryRow> summarize(const PosteriorDraws& draws,
                                  const std::vector<ScalarSpec>& specs);

}  // namespace stecm
