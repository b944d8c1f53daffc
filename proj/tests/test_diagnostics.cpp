#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "stecm/diagnostics.hpp"
#include "stecm/rng.hpp"

using namespace stecm;

namespace {

std::vector<Eigen::VectorXd> iid_normal_chains(int m, int n, Rng& rng,
                                               double mean = 0.0,
                                               double sd = 1.0) {
  std::vector<Eigen::VectorXd> chains;
  for (int c = 0; c < m; ++c) {
    Eigen::VectorXd x(n);
    for (int i = 0; i < n; ++i) x[i] = rng.normal(mean, sd);
    chains.push_back(std::move(x));
  }
  return chains;
}

PosteriorDraws draws_from_series(const std::vector<Eigen::VectorXd>& chains) {
  PosteriorDraws d;
  d.n_chains = static_cast<int>(chains.size());
  d.n_draws = static_cast<int>(chains[0].size());
  d.dim = 1;
  d.layout.add("x", 1);
  for (const auto& c : chains) {
    Eigen::MatrixXd m(1, c.size());
    m.row(0) = c.transpose();
    d.draws.push_back(m);
    d.stats.push_back(Eigen::MatrixXd::Zero(kNumDrawStats, c.size()));
    d.reports.push_back({});
  }
  return d;
}

}  // namespace

TEST_CASE("split rhat near one for well-mixed chains") {
  Rng rng(301);
  const auto rhat = split_rhat(iid_normal_chains(4, 2000, rng));
  CHECK(!rhat.degenerate);
  CHECK(rhat.value >= 0.999);
  CHECK(rhat.value <= 1.01);
}

TEST_CASE("split rhat explodes for separated chains") {
  Rng rng(302);
  // Under rank normalization two fully separated chains saturate near 1.83;
  // four separated chains push past 2.
  auto two = iid_normal_chains(2, 1000, rng);
  two[1].array() += 10.0;
  CHECK(split_rhat(two).value > 1.7);

  auto four = iid_normal_chains(4, 1000, rng);
  for (int c = 0; c < 4; ++c) four[static_cast<size_t>(c)].array() += 10.0 * c;
  CHECK(split_rhat(four).value > 2.0);
}

TEST_CASE("split rhat flags constant input") {
  std::vector<Eigen::VectorXd> chains(3, Eigen::VectorXd::Constant(50, 1.23));
  const auto rhat = split_rhat(chains);
  CHECK(rhat.value == 1.0);
  CHECK(rhat.degenerate);
}

TEST_CASE("split rhat input validation") {
  std::vector<Eigen::VectorXd> one(1, Eigen::VectorXd::Zero(100));
  CHECK_THROWS(split_rhat(one));
  std::vector<Eigen::VectorXd> tiny(2, Eigen::VectorXd::Zero(2));
  CHECK_THROWS(split_rhat(tiny));
}

TEST_CASE("bulk ess of independent draws is close to the sample size") {
  Rng rng(303);
  const auto ess = bulk_ess(iid_normal_chains(4, 2000, rng));
  CHECK(!ess.degenerate);
  CHECK(ess.value > 6000.0);
  CHECK(ess.value < 10000.0);
}

TEST_CASE("bulk ess tracks the AR(1) asymptotic rate") {
  Rng rng(304);
  const double phi = 0.9;
  std::vector<Eigen::VectorXd> chains;
  for (int c = 0; c < 4; ++c) {
    Eigen::VectorXd x(2000);
    x[0] = rng.normal() / std::sqrt(1.0 - phi * phi);
    for (int i = 1; i < 2000; ++i) x[i] = phi * x[i - 1] + rng.normal();
    chains.push_back(std::move(x));
  }
  const double expect = 8000.0 * (1.0 - phi) / (1.0 + phi);  // about n/19
  const auto ess = bulk_ess(chains);
  CHECK(ess.value > expect / 2.0);
  CHECK(ess.value < expect * 2.0);
}

TEST_CASE("bulk ess flags constant input") {
  std::vector<Eigen::VectorXd> chains(2, Eigen::VectorXd::Constant(64, -3.5));
  const auto ess = bulk_ess(chains);
  CHECK(ess.degenerate);
}

TEST_CASE("quantiles by linear interpolation") {
  std::vector<double> v{1.0, 2.0, 3.0, 4.0};
  CHECK(quantile(v, 0.5) == doctest::Approx(2.5));
  CHECK(quantile(v, 0.0) == 1.0);
  CHECK(quantile(v, 1.0) == 4.0);

  Rng rng(305);
  std::vector<double> u(100000);
  for (auto& x : u) x = rng.uniform();
  CHECK(quantile(u, 0.025) == doctest::Approx(0.025).epsilon(0.2));
  CHECK(std::abs(quantile(u, 0.025) - 0.025) < 0.005);
}

TEST_CASE("inverse normal CDF hits known quantiles") {
  CHECK(inv_normal_cdf(0.5) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(inv_normal_cdf(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-9));
  CHECK(inv_normal_cdf(0.025) ==
        doctest::Approx(-1.959963984540054).epsilon(1e-9));
  CHECK(inv_normal_cdf(1e-10) == doctest::Approx(-6.361340902404056).epsilon(1e-6));
}

TEST_CASE("summary of constant draws collapses to the constant") {
  std::vector<Eigen::VectorXd> chains(4, Eigen::VectorXd::Constant(100, 7.5));
  const PosteriorDraws d = draws_from_series(chains);
  const auto rows = summarize(d, generic_scalar_specs(d.layout));
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].mean == 7.5);
  CHECK(rows[0].median == 7.5);
  CHECK(rows[0].q025 == 7.5);
  CHECK(rows[0].q975 == 7.5);
  CHECK(rows[0].flagged);
}

TEST_CASE("summaries transform draw-wise, then summarize") {
  Rng rng(306);
  auto chains = iid_normal_chains(4, 500, rng, -2.0, 0.7);
  const PosteriorDraws d = draws_from_series(chains);

  ScalarSpec spec = ScalarSpec::coord("gamma", 0, Transform::neg_logistic);
  const auto rows = summarize(d, {spec});
  REQUIRE(rows.size() == 1);

  std::vector<double> transformed;
  for (const auto& c : chains)
    for (int i = 0; i < c.size(); ++i)
      transformed.push_back(-1.0 / (1.0 + std::exp(-c[i])));
  CHECK(rows[0].median == doctest::Approx(quantile(transformed, 0.5)));
  // The transform is nonlinear: transforming the summary instead would not
  // match the draw-wise convention.
  const double median_raw = [&] {
    std::vector<double> raw;
    for (const auto& c : chains)
      for (int i = 0; i < c.size(); ++i) raw.push_back(c[i]);
    return quantile(raw, 0.5);
  }();
  CHECK(rows[0].mean != doctest::Approx(-1.0 / (1.0 + std::exp(-median_raw))));
  CHECK(rows[0].q025 <= rows[0].median);
  CHECK(rows[0].median <= rows[0].q975);
}

TEST_CASE("selectors filter by prefix and by group") {
  std::vector<ScalarSpec> all;
  all.push_back(ScalarSpec::coord("beta[a->b]", 0, Transform::exp_fn,
                                  "rural-urban"));
  all.push_back(ScalarSpec::coord("beta[b->a]", 0, Transform::exp_fn,
                                  "urban-rural"));
  all.push_back(ScalarSpec::coord("sigma_y", 0, Transform::exp_fn));

  CHECK(select_specs(all, {"beta["}).size() == 2);
  CHECK(select_specs(all, {"group:urban-rural"}).size() == 1);
  CHECK(select_specs(all, {"sigma_y", "beta[a"}).size() == 2);
  CHECK_THROWS_AS(select_specs(all, {"tau"}), std::invalid_argument);
  CHECK_THROWS_AS(select_specs(all, {"group:city"}), std::invalid_argument);
}
