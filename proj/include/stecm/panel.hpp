#pragma once

#include <Eigen/Core>

#include <cmath>
#include <stdexcept>
#include <vector>

namespace stecm {

using MaskMatrix = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;

/// Observed log-prices over regions x time with a missingness mask.
/// Masked-out cells of y are never read by the model.
struct PricePanel {
  int n_regions = 0;
  int n_time = 0;
  Eigen::MatrixXd y;      // N x T
  MaskMatrix observed;    // N x T

  long n_observed() const {
    long c = 0;
    for (Eigen::Index i = 0; i < observed.rows(); ++i)
      for (Eigen::Index t = 0; t < observed.cols(); ++t)
        if (observed(i, t)) ++c;
    return c;
  }

  /// Regions with no observation anywhere in the panel (flagged, not fatal).
  std::vector<int> unobserved_regions() const {
    std::vector<int> out;
    for (int i = 0; i < n_regions; ++i) {
      bool any = false;
      for (int t = 0; t < n_time && !any; ++t) any = observed(i, t);
      if (!any) out.push_back(i);
    }
    return out;
  }

  void validate() const {
    if (y.rows() != n_regions || y.cols() != n_time ||
        observed.rows() != n_regions || observed.cols() != n_time)
      throw std::invalid_argument("panel dimensions are inconsistent");
    for (int i = 0; i < n_regions; ++i)
      for (int t = 0; t < n_time; ++t)
        if (observed(i, t) && !std::isfinite(y(i, t)))
          throw std::invalid_argument("non-finite observed price at region " +
                                      std::to_string(i) + ", time " +
                                      std::to_string(t));
  }
};

}  // namespace stecm
