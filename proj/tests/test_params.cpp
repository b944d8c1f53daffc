#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "stecm/params.hpp"
#include "stecm/rng.hpp"
#include "test_util.hpp"

using namespace stecm;
using testutil::chain_graph;
using testutil::random_model_vector;

TEST_CASE("layout covers every block with consistent offsets") {
  const ModelDims d{4, 6, 6};
  const ParamLayout layout = model_layout(d);
  int expected = 0;
  for (const auto& b : layout.blocks()) {
    CHECK(b.offset == expected);
    expected += b.size();
  }
  CHECK(layout.dim() == expected);
  CHECK(layout.dim() == 5 + 1 + 1 + 1 + 3 + 1 + 6 + 30 + 1 + 24 + 1 + 1);
  CHECK(layout.block("gamma_z").rows == 6);
  CHECK(layout.block("gamma_z").cols == 5);
  CHECK_THROWS(layout.block("nonsense"));
}

TEST_CASE("walk reconstruction from innovations") {
  const ModelDims d{2, 5, 2};
  const ParamLayout layout = model_layout(d);
  Eigen::VectorXd v = Eigen::VectorXd::Zero(layout.dim());
  const auto& gz = layout.block("gamma_z");
  v[gz.index(0, 0)] = 0.5;
  v[gz.index(0, 1)] = 1.0;
  v[gz.index(0, 2)] = -2.0;
  v[layout.block("log_sigma_gamma").offset] = std::log(0.25);

  const auto [p, jac] = to_constrained(v, d);
  // tilde_gamma_0 = -2 + 2*0.5 = -1; then += 0.25 * z_t.
  CHECK(p.tilde_gamma(0, 0) == doctest::Approx(-1.0));
  CHECK(p.tilde_gamma(0, 1) == doctest::Approx(-0.75));
  CHECK(p.tilde_gamma(0, 2) == doctest::Approx(-1.25));
  CHECK(p.tilde_gamma(0, 3) == doctest::Approx(-1.25));
  CHECK(p.tilde_gamma(1, 0) == doctest::Approx(-2.0));
}

TEST_CASE("transform fixed points: phi, scales, loadings") {
  const ModelDims d{3, 4, 4};
  const ParamLayout layout = model_layout(d);
  const Eigen::VectorXd v = Eigen::VectorXd::Zero(layout.dim());

  const auto [p, jac] = to_constrained(v, d);
  CHECK(p.phi == doctest::Approx(0.5));
  CHECK(p.sigma_y == doctest::Approx(1.0));
  CHECK(p.sigma_mu == doctest::Approx(1.0));
  CHECK((p.beta.array() == 1.0).all());
  CHECK(p.lambda.isApprox(Eigen::VectorXd::Ones(3)));
  CHECK(p.lambda.mean() == doctest::Approx(1.0).epsilon(1e-15));
  // Only the logistic contributes at zero: log(0.25).
  CHECK(jac == doctest::Approx(std::log(0.25)).epsilon(1e-14));
}

TEST_CASE("round trip through the transform") {
  Rng rng(11);
  const ModelDims d{5, 7, 8};
  for (int rep = 0; rep < 30; ++rep) {
    const Eigen::VectorXd v = random_model_vector(d, rng);
    const auto [p, jac] = to_constrained(v, d);
    const Eigen::VectorXd back = to_unconstrained(p);
    CHECK((back - v).cwiseAbs().maxCoeff() < 1e-12);

    const auto [p2, jac2] = to_constrained(back, d);
    CHECK(std::abs(jac2 - jac) < 1e-10);
  }
}

TEST_CASE("constrained invariants hold for arbitrary inputs") {
  Rng rng(12);
  const ModelDims d{6, 5, 10};
  for (int rep = 0; rep < 50; ++rep) {
    Eigen::VectorXd v = random_model_vector(d, rng);
    // Widen the ranges well beyond the usual scales.
    v *= rng.uniform(0.5, 3.0);
    const auto [p, jac] = to_constrained(v, d);
    CHECK_NOTHROW(p.validate());
    CHECK(std::abs(p.lambda.mean() - 1.0) < 1e-12);
    for (int k = 0; k < d.n_edges; ++k)
      for (int t = 0; t < d.n_time - 1; ++t) {
        const double gam = gamma_of(p, k, t);
        CHECK(gam > -1.0);
        CHECK(gam < 0.0);
      }
  }
}

TEST_CASE("transform rejects bad input") {
  const ModelDims d{3, 4, 4};
  const ParamLayout layout = model_layout(d);
  Eigen::VectorXd v = Eigen::VectorXd::Zero(layout.dim());
  v[0] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(to_constrained(v, d), std::invalid_argument);
  CHECK_THROWS_AS(to_constrained(Eigen::VectorXd::Zero(3), d),
                  std::invalid_argument);
}

TEST_CASE("gamma mapping values and monotonicity") {
  ModelParams p;
  p.tilde_gamma.resize(1, 3);
  p.tilde_gamma << 0.0, -2.0, 1e9;
  CHECK(gamma_of(p, 0, 0) == doctest::Approx(-0.5).epsilon(1e-14));
  CHECK(gamma_of(p, 0, 1) ==
        doctest::Approx(-0.11920292202211755).epsilon(1e-12));
  CHECK(gamma_of(p, 0, 2) == doctest::Approx(-1.0).epsilon(1e-14));

  double prev = 0.0;
  for (double tg = -8.0; tg <= 8.0; tg += 0.25) {
    ModelParams q;
    q.tilde_gamma.resize(1, 1);
    q.tilde_gamma(0, 0) = tg;
    const double gam = gamma_of(q, 0, 0);
    CHECK(gam < prev);
    prev = gam;
  }
}

TEST_CASE("B matrix from edge coefficients") {
  RegionGraph g2 = build_graph({{0, 1}}, 2);
  ModelParams p;
  p.beta.resize(2);
  p.beta[g2.edge_index(0, 1)] = 0.4;
  p.beta[g2.edge_index(1, 0)] = 0.1;
  const Eigen::MatrixXd B = Eigen::MatrixXd(build_B(p, g2));
  CHECK(B(0, 1) == doctest::Approx(0.4));
  CHECK(B(1, 0) == doctest::Approx(0.1));
  CHECK(B(0, 0) == 0.0);
  CHECK(B(1, 1) == 0.0);

  RegionGraph lonely = build_graph({}, 3);
  ModelParams q;
  q.beta.resize(0);
  CHECK(Eigen::MatrixXd(build_B(q, lonely)).isZero(0.0));

  RegionGraph chain = chain_graph(3);
  ModelParams r;
  r.beta = Eigen::VectorXd::Constant(4, 0.2);
  CHECK(Eigen::MatrixXd(build_B(r, chain))(0, 2) == 0.0);
}

TEST_CASE("D matrix entries") {
  RegionGraph g2 = build_graph({{0, 1}}, 2);
  ModelParams p;
  p.beta.resize(2);
  p.tilde_gamma.resize(2, 1);
  const int k01 = g2.edge_index(0, 1);
  const int k10 = g2.edge_index(1, 0);
  p.beta[k01] = 0.4;
  p.beta[k10] = 0.3;
  p.tilde_gamma(k01, 0) = logit(0.25);  // gamma_01 = -0.25
  p.tilde_gamma(k10, 0) = logit(0.5);
  const Eigen::MatrixXd D = Eigen::MatrixXd(build_D(p, g2, 0));
  CHECK(D(0, 1) == doctest::Approx(-0.15).epsilon(1e-12));
  CHECK(D(0, 0) == doctest::Approx(0.75).epsilon(1e-12));

  SUBCASE("gamma near zero collapses D to I - B") {
    p.tilde_gamma.setConstant(-36.0);
    const Eigen::MatrixXd D0 = Eigen::MatrixXd(build_D(p, g2, 0));
    const Eigen::MatrixXd IB =
        Eigen::MatrixXd::Identity(2, 2) - Eigen::MatrixXd(build_B(p, g2));
    CHECK((D0 - IB).cwiseAbs().maxCoeff() < 1e-14);
  }
}

TEST_CASE("D at the gamma boundary with two neighbours") {
  RegionGraph chain = chain_graph(3);
  ModelParams p;
  p.beta = Eigen::VectorXd::Zero(4);
  p.tilde_gamma = Eigen::MatrixXd::Constant(4, 1, 36.0);  // gamma -> -1
  const Eigen::MatrixXd D = Eigen::MatrixXd(build_D(p, chain, 0));
  CHECK(D(1, 1) == doctest::Approx(-1.0).epsilon(1e-10));
  CHECK(D(1, 0) == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(D(1, 2) == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("stationary AR(1) initial density in the prior") {
  const ModelDims d{3, 4, 4};
  Rng rng(21);
  Eigen::VectorXd v = random_model_vector(d, rng);
  const ParamLayout layout = model_layout(d);
  auto [p, jac] = to_constrained(v, d);
  p.c_alpha = 0.1;
  p.phi = 0.5;
  p.sigma_alpha = 0.2;

  // Shifting alpha_1 changes the prior by exactly the stationary density
  // with mean 0.2 and sd 0.2/sqrt(0.75).
  const double sd0 = 0.2 / std::sqrt(0.75);
  ModelParams q = p;
  q.alpha[0] = p.alpha[0] + 0.15;
  const double got = log_prior(q, {}) - log_prior(p, {});
  double expect = normal_lpdf(q.alpha[0], 0.2, sd0) -
                  normal_lpdf(p.alpha[0], 0.2, sd0);
  // alpha_2 | alpha_1 also moves.
  expect += normal_lpdf(p.alpha[1], p.c_alpha + p.phi * q.alpha[0],
                        p.sigma_alpha) -
            normal_lpdf(p.alpha[1], p.c_alpha + p.phi * p.alpha[0],
                        p.sigma_alpha);
  CHECK(got == doctest::Approx(expect).epsilon(1e-10));
}

TEST_CASE("Beta(2,2) density at one half") {
  CHECK(beta_lpdf(0.5, 2.0, 2.0) ==
        doctest::Approx(std::log(1.5)).epsilon(1e-14));
}

TEST_CASE("full prior matches the scalar-density oracle") {
  Rng rng(31);
  const RegionGraph g = chain_graph(4);
  const ModelDims d{4, 6, g.n_directed()};
  for (int rep = 0; rep < 20; ++rep) {
    const Eigen::VectorXd v = random_model_vector(d, rng);
    const auto [p, jac] = to_constrained(v, d);
    const double lib = log_prior(p, {});
    const double orc = oracle::log_prior(p, {});
    CHECK(std::abs(lib - orc) < 1e-10 * std::max(1.0, std::abs(orc)));
  }
}

TEST_CASE("prior overrides accept known names only") {
  PriorConfig pr;
  pr.override_prior("sigma_y", {3.0, 15.0});
  CHECK(pr.sigma_y_shape == 3.0);
  CHECK(pr.sigma_y_rate == 15.0);
  pr.override_prior("sigma_lambda", {0.7});
  CHECK(pr.sigma_lambda_sd == 0.7);
  CHECK_THROWS_AS(pr.override_prior("sigma_z", {1.0, 2.0}),
                  std::invalid_argument);
  CHECK_THROWS_AS(pr.override_prior("phi", {1.0}), std::invalid_argument);
}
