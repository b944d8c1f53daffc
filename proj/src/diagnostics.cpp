#include "stecm/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "stecm/density.hpp"

namespace stecm {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

bool all_equal(const std::vector<Eigen::VectorXd>& chains) {
  const double v0 = chains[0][0];
  for (const auto& c : chains)
    if ((c.array() != v0).any()) return false;
  return true;
}

/// Splits every chain in half (dropping a middle element when odd).
std::vector<Eigen::VectorXd> split_halves(
    const std::vector<Eigen::VectorXd>& chains) {
  std::vector<Eigen::VectorXd> out;
  out.reserve(2 * chains.size());
  for (const auto& c : chains) {
    const Eigen::Index half = c.size() / 2;
    out.push_back(c.head(half));
    out.push_back(c.tail(half));
  }
  return out;
}

/// Pooled rank normalization with averaged ties and the Blom offset.
std::vector<Eigen::VectorXd> rank_normalize(
    const std::vector<Eigen::VectorXd>& chains) {
  size_t total = 0;
  for (const auto& c : chains) total += static_cast<size_t>(c.size());

  struct Entry {
    double value;
    size_t chain, pos;
  };
  std::vector<Entry> entries;
  entries.reserve(total);
  for (size_t m = 0; m < chains.size(); ++m)
    for (Eigen::Index i = 0; i < chains[m].size(); ++i)
      entries.push_back({chains[m][i], m, static_cast<size_t>(i)});
  std::sort(entries.begin(), entries.end(),
            [](const Entry& a, const Entry& b) { return a.value < b.value; });

  std::vector<Eigen::VectorXd> z;
  z.reserve(chains.size());
  for (const auto& c : chains) z.emplace_back(Eigen::VectorXd::Zero(c.size()));

  const double s = static_cast<double>(total);
  size_t i = 0;
  while (i < total) {
    size_t j = i;
    while (j + 1 < total && entries[j + 1].value == entries[i].value) ++j;
    const double avg_rank = 0.5 * (static_cast<double>(i) +
                                   static_cast<double>(j)) + 1.0;
    const double zval = inv_normal_cdf((avg_rank - 0.375) / (s + 0.25));
    for (size_t k = i; k <= j; ++k)
      z[entries[k].chain][static_cast<Eigen::Index>(entries[k].pos)] = zval;
    i = j + 1;
  }
  return z;
}

double chain_mean(const Eigen::VectorXd& x) { return x.mean(); }

double chain_variance(const Eigen::VectorXd& x) {
  const double m = x.mean();
  return (x.array() - m).square().sum() / static_cast<double>(x.size() - 1);
}

/// Autocovariance at a given lag with the 1/n convention.
double autocov(const Eigen::VectorXd& x, Eigen::Index lag, double mean) {
  const Eigen::Index n = x.size();
  double acc = 0.0;
  for (Eigen::Index i = 0; i + lag < n; ++i)
    acc += (x[i] - mean) * (x[i + lag] - mean);
  return acc / static_cast<double>(n);
}

}  // namespace

double inv_normal_cdf(double p) {
  if (!(p > 0.0 && p < 1.0))
    throw std::invalid_argument("inv_normal_cdf needs p in (0,1)");
  // Acklam's rational approximation, refined with one Halley step.
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  const double plow = 0.02425, phigh = 1.0 - plow;
  double x;
  if (p < plow) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= phigh) {
    const double q = p - 0.5, r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) *
        q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log(1.0 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q +
          c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  // Halley refinement against the erfc-based CDF.
  const double e =
      0.5 * std::erfc(-x / std::sqrt(2.0)) - p;
  const double u = e * std::sqrt(2.0 * 3.14159265358979323846) *
                   std::exp(0.5 * x * x);
  x -= u / (1.0 + 0.5 * x * u);
  return x;
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw std::invalid_argument("quantile of empty sample");
  if (!(q >= 0.0 && q <= 1.0))
    throw std::invalid_argument("quantile level must be in [0,1]");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * q;
  const size_t lo = static_cast<size_t>(h);
  if (lo + 1 >= values.size()) return values.back();
  const double frac = h - static_cast<double>(lo);
  return values[lo] + frac * (values[lo + 1] - values[lo]);
}

DiagnosticResult split_rhat(const std::vector<Eigen::VectorXd>& chains) {
  if (chains.size() < 2)
    throw std::invalid_argument("split_rhat needs at least 2 chains");
  for (const auto& c : chains)
    if (c.size() < 4)
      throw std::invalid_argument("split_rhat needs at least 4 draws/chain");

  if (all_equal(chains)) return {1.0, true};

  const auto splits = split_halves(rank_normalize(chains));
  const size_t m = splits.size();
  const double n = static_cast<double>(splits[0].size());

  double w = 0.0;
  Eigen::VectorXd means(static_cast<Eigen::Index>(m));
  for (size_t k = 0; k < m; ++k) {
    means[static_cast<Eigen::Index>(k)] = chain_mean(splits[k]);
    w += chain_variance(splits[k]);
  }
  w /= static_cast<double>(m);
  const double b = n * chain_variance(means);
  if (w <= 0.0)
    return {std::numeric_limits<double>::infinity(), false};
  const double var_plus = (n - 1.0) / n * w + b / n;
  return {std::sqrt(var_plus / w), false};
}

DiagnosticResult bulk_ess(const std::vector<Eigen::VectorXd>& chains) {
  if (chains.empty()) throw std::invalid_argument("bulk_ess needs chains");
  for (const auto& c : chains)
    if (c.size() < 8)
      throw std::invalid_argument("bulk_ess needs at least 8 draws/chain");

  if (all_equal(chains)) return {kNaN, true};

  const auto splits = split_halves(rank_normalize(chains));
  const size_t m = splits.size();
  const Eigen::Index n = splits[0].size();
  const double nd = static_cast<double>(n);

  std::vector<double> means(m), vars(m);
  for (size_t k = 0; k < m; ++k) {
    means[k] = chain_mean(splits[k]);
    vars[k] = chain_variance(splits[k]);
  }
  const double mean_var =
      std::accumulate(vars.begin(), vars.end(), 0.0) / static_cast<double>(m);
  double var_plus = mean_var * (nd - 1.0) / nd;
  if (m > 1) {
    Eigen::Map<const Eigen::VectorXd> mv(means.data(),
                                         static_cast<Eigen::Index>(m));
    var_plus += chain_variance(mv);
  }
  if (!(var_plus > 0.0)) return {kNaN, true};

  auto mean_acov = [&](Eigen::Index lag) {
    double acc = 0.0;
    for (size_t k = 0; k < m; ++k) acc += autocov(splits[k], lag, means[k]);
    return acc / static_cast<double>(m);
  };

  // Geyer paired sums: accumulate while even+odd autocorrelation pairs stay
  // positive, then apply the initial monotone adjustment.
  std::vector<double> rho;
  rho.push_back(1.0);
  rho.push_back(1.0 - (mean_var - mean_acov(1)) / var_plus);
  double prev_pair = rho[0] + rho[1];
  if (prev_pair <= 0.0) prev_pair = 1e-12;
  double tau = prev_pair;
  for (Eigen::Index t = 2; t + 1 < n; t += 2) {
    const double even = 1.0 - (mean_var - mean_acov(t)) / var_plus;
    const double odd = 1.0 - (mean_var - mean_acov(t + 1)) / var_plus;
    double pair = even + odd;
    if (pair <= 0.0) break;
    if (pair > prev_pair) pair = prev_pair;  // enforce monotone decrease
    tau += pair;
    prev_pair = pair;
  }
  const double total = static_cast<double>(m) * nd;
  const double tau_hat = std::max(2.0 * tau - 1.0, 1.0 / std::log10(total));
  return {total / tau_hat, false};
}

double ScalarSpec::eval(const Eigen::VectorXd& v) const {
  double x = constant;
  for (const auto& [idx, coeff] : terms) x += coeff * v[idx];
  if (scale_index >= 0) {
    double inner = 0.0;
    for (const auto& [idx, coeff] : scaled_terms) inner += coeff * v[idx];
    x += std::exp(v[scale_index]) * inner;
  }
  switch (transform) {
    case Transform::identity: return x;
    case Transform::exp_fn: return std::exp(x);
    case Transform::logistic_fn: return logistic(x);
    case Transform::neg_logistic: return -logistic(x);
    case Transform::tanh_fn: return std::tanh(x);
  }
  return x;
}

ScalarSpec ScalarSpec::coord(std::string name, int index, Transform tr,
                             std::string group) {
  ScalarSpec s;
  s.name = std::move(name);
  s.group = std::move(group);
  s.transform = tr;
  s.terms.emplace_back(index, 1.0);
  return s;
}

std::vector<ScalarSpec> ecm_scalar_specs(const ParamLayout& layout,
                                         const RegionGraph& g,
                                         bool include_gamma, bool include_mu,
                                         double gamma_anchor_mean,
                                         double gamma_anchor_sd) {
  std::vector<ScalarSpec> specs;
  const auto& alpha = layout.block("alpha");
  for (int t = 0; t < alpha.rows; ++t)
    specs.push_back(ScalarSpec::coord("alpha[" + std::to_string(t + 1) + "]",
                                      alpha.index(t)));
  specs.push_back(ScalarSpec::coord("c_alpha",
                                    layout.block("c_alpha").offset));
  specs.push_back(ScalarSpec::coord("phi", layout.block("raw_phi").offset,
                                    Transform::logistic_fn));
  specs.push_back(ScalarSpec::coord("sigma_alpha",
                                    layout.block("log_sigma_alpha").offset,
                                    Transform::exp_fn));

  const auto& lam = layout.block("lambda_u");
  const int sl = layout.block("log_sigma_lambda").offset;
  const int n = g.n_regions;
  auto kind = [&](int i) { return to_string(g.region_kinds[static_cast<size_t>(i)]); };
  for (int i = 0; i < n - 1; ++i) {
    // lambda_i = 1 + sigma_lambda * u_i
    ScalarSpec s;
    s.name = "lambda[" + g.region_label(i) + "]";
    s.group = kind(i);
    s.constant = 1.0;
    s.scale_index = sl;
    s.scaled_terms.emplace_back(lam.index(i), 1.0);
    specs.push_back(std::move(s));
  }
  {
    // Closed loading: 1 - sigma_lambda * sum(u).
    ScalarSpec s;
    s.name = "lambda[" + g.region_label(n - 1) + "]";
    s.group = kind(n - 1);
    s.constant = 1.0;
    s.scale_index = sl;
    for (int i = 0; i < n - 1; ++i)
      s.scaled_terms.emplace_back(lam.index(i), -1.0);
    specs.push_back(std::move(s));
  }
  specs.push_back(ScalarSpec::coord("sigma_lambda",
                                    layout.block("log_sigma_lambda").offset,
                                    Transform::exp_fn));

  const auto& lb = layout.block("log_beta");
  for (int k = 0; k < lb.rows; ++k) {
    const auto& [i, j] = g.directed_edges[static_cast<size_t>(k)];
    specs.push_back(ScalarSpec::coord(
        "beta[" + g.region_label(i) + "->" + g.region_label(j) + "]",
        lb.index(k), Transform::exp_fn, kind(i) + "-" + kind(j)));
  }

  if (include_gamma) {
    const auto& gz = layout.block("gamma_z");
    const int ls = layout.block("log_sigma_gamma").offset;
    for (int t = 0; t < gz.cols; ++t)
      for (int k = 0; k < gz.rows; ++k) {
        const auto& [i, j] = g.directed_edges[static_cast<size_t>(k)];
        ScalarSpec s;
        s.name = "gamma[" + g.region_label(i) + "->" + g.region_label(j) +
                 "][" + std::to_string(t + 1) + "]";
        s.group = kind(i) + "-" + kind(j);
        s.transform = Transform::neg_logistic;
        s.constant = gamma_anchor_mean;
        s.terms.emplace_back(gz.index(k, 0), gamma_anchor_sd);
        s.scale_index = ls;
        for (int u = 1; u <= t; ++u)
          s.scaled_terms.emplace_back(gz.index(k, u), 1.0);
        specs.push_back(std::move(s));
      }
  }
  specs.push_back(ScalarSpec::coord("sigma_gamma",
                                    layout.block("log_sigma_gamma").offset,
                                    Transform::exp_fn));

  if (include_mu) {
    const auto& mu = layout.block("mu");
    for (int t = 0; t < mu.cols; ++t)
      for (int i = 0; i < mu.rows; ++i)
        specs.push_back(ScalarSpec::coord(
            "mu[" + g.region_label(i) + "][" + std::to_string(t + 1) + "]",
            mu.index(i, t), Transform::identity, kind(i)));
  }
  specs.push_back(ScalarSpec::coord("sigma_mu",
                                    layout.block("log_sigma_mu").offset,
                                    Transform::exp_fn));
  specs.push_back(ScalarSpec::coord("sigma_y",
                                    layout.block("log_sigma_y").offset,
                                    Transform::exp_fn));
  return specs;
}

std::vector<ScalarSpec> sar_scalar_specs(const ParamLayout& layout,
                                         bool include_mu) {
  std::vector<ScalarSpec> specs;
  specs.push_back(ScalarSpec::coord("rho", layout.block("raw_rho").offset,
                                    Transform::tanh_fn));
  specs.push_back(ScalarSpec::coord("sigma_mu",
                                    layout.block("log_sigma_mu").offset,
                                    Transform::exp_fn));
  specs.push_back(ScalarSpec::coord("sigma_y",
                                    layout.block("log_sigma_y").offset,
                                    Transform::exp_fn));
  if (include_mu) {
    const auto& mu = layout.block("mu");
    for (int t = 0; t < mu.cols; ++t)
      for (int i = 0; i < mu.rows; ++i)
        specs.push_back(ScalarSpec::coord(
            "mu[" + std::to_string(i) + "][" + std::to_string(t + 1) + "]",
            mu.index(i, t)));
  }
  return specs;
}

std::vector<ScalarSpec> generic_scalar_specs(const ParamLayout& layout) {
  std::vector<ScalarSpec> specs;
  for (const auto& b : layout.blocks())
    for (int c = 0; c < b.cols; ++c)
      for (int r = 0; r < b.rows; ++r) {
        std::string name = b.name;
        if (b.size() > 1) {
          name += "[" + std::to_string(r + 1);
          if (b.cols > 1) name += "][" + std::to_string(c + 1);
          name += "]";
        }
        specs.push_back(ScalarSpec::coord(std::move(name), b.index(r, c)));
      }
  return specs;
}

std::vector<ScalarSpec> select_specs(
    const std::vector<ScalarSpec>& all,
    const std::vector<std::string>& selectors) {
  if (selectors.empty()) return all;
  std::vector<bool> keep(all.size(), false);
  for (const auto& sel : selectors) {
    bool matched = false;
    if (sel.rfind("group:", 0) == 0) {
      const std::string grp = sel.substr(6);
      for (size_t i = 0; i < all.size(); ++i)
        if (all[i].group == grp) {
          keep[i] = true;
          matched = true;
        }
    } else {
      for (size_t i = 0; i < all.size(); ++i)
        if (all[i].name.rfind(sel, 0) == 0) {
          keep[i] = true;
          matched = true;
        }
    }
    if (!matched)
      throw std::invalid_argument("selector matches no parameter: '" + sel +
                                  "'");
  }
  std::vector<ScalarSpec> out;
  for (size_t i = 0; i < all.size(); ++i)
    if (keep[i]) out.push_back(all[i]);
  return out;
}

std::vector<SummaryRow> summarize(const PosteriorDraws& draws,
                                  const std::vector<ScalarSpec>& specs) {
  if (specs.empty()) throw std::invalid_argument("empty parameter selection");
  std::vector<SummaryRow> rows;
  rows.reserve(specs.size());

  const double total = static_cast<double>(draws.n_chains) * draws.n_draws;
  std::vector<Eigen::VectorXd> series(static_cast<size_t>(draws.n_chains));
  std::vector<double> pooled;

  for (const auto& spec : specs) {
    pooled.clear();
    pooled.reserve(static_cast<size_t>(total));
    for (int c = 0; c < draws.n_chains; ++c) {
      auto& s = series[static_cast<size_t>(c)];
      s.resize(draws.n_draws);
      for (int k = 0; k < draws.n_draws; ++k) {
        s[k] = spec.eval(draws.draws[static_cast<size_t>(c)].col(k));
        pooled.push_back(s[k]);
      }
    }

    SummaryRow row;
    row.name = spec.name;
    row.group = spec.group;
    row.mean = std::accumulate(pooled.begin(), pooled.end(), 0.0) /
               static_cast<double>(pooled.size());
    row.median = quantile(pooled, 0.5);
    row.q025 = quantile(pooled, 0.025);
    row.q975 = quantile(pooled, 0.975);

    if (draws.n_chains >= 2 && draws.n_draws >= 8) {
      const auto rhat = split_rhat(series);
      const auto ess = bulk_ess(series);
      row.rhat = rhat.value;
      row.ess_bulk = ess.value;
      row.flagged = rhat.degenerate || ess.degenerate ||
                    (std::isfinite(ess.value) && ess.value > 1.5 * total);
    } else {
      row.rhat = kNaN;
      row.ess_bulk = kNaN;
      row.flagged = true;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace stecm
