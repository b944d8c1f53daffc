#pragma once

#include <cmath>
#include <limits>

namespace stecm {

inline constexpr double kLog2Pi = 1.8378770664093454836;
inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

inline double logistic(double x) {
  if (x >= 0.0) {
    const double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double logit(double p) { return std::log(p) - std::log1p(-p); }

inline double normal_lpdf(double x, double mean, double sd) {
  const double z = (x - mean) / sd;
  return -0.5 * kLog2Pi - std::log(sd) - 0.5 * z * z;
}

inline double normal_lpdf_dx(double x, double mean, double sd) {
  return -(x - mean) / (sd * sd);
}

inline double normal_lpdf_dsd(double x, double mean, double sd) {
  const double z = (x - mean) / sd;
  return (z * z - 1.0) / sd;
}

/// Shape-rate parameterization throughout.
inline double gamma_lpdf(double x, double shape, double rate) {
  if (!(x > 0.0)) return kNegInf;
  return shape * std::log(rate) - std::lgamma(shape) +
         (shape - 1.0) * std::log(x) - rate * x;
}

inline double gamma_lpdf_dx(double x, double shape, double rate) {
  return (shape - 1.0) / x - rate;
}

inline double beta_lpdf(double x, double a, double b) {
  if (!(x > 0.0) || !(x < 1.0)) return kNegInf;
  return std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
         (a - 1.0) * std::log(x) + (b - 1.0) * std::log1p(-x);
}

inline double beta_lpdf_dx(double x, double a, double b) {
  return (a - 1.0) / x - (b - 1.0) / (1.0 - x);
}

/// Normal truncated at zero from below.
inline double half_normal_lpdf(double x, double sd) {
  if (!(x >= 0.0)) return kNegInf;
  return std::log(2.0) + normal_lpdf(x, 0.0, sd);
}

inline double half_normal_lpdf_dx(double x, double sd) { return -x / (sd * sd); }

}  // namespace stecm
