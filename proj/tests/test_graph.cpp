#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <set>

#include "stecm/graph.hpp"
#include "stecm/rng.hpp"

using namespace stecm;

namespace {

/// Spectral radius by power iteration on A^T A is overkill for symmetric
/// input; plain power iteration with restarts suffices here.
double power_iteration_radius(const Eigen::MatrixXd& a) {
  const Eigen::Index n = a.rows();
  Rng rng(99);
  double best = 0.0;
  for (int restart = 0; restart < 3; ++restart) {
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = rng.normal();
    v.normalize();
    double lambda = 0.0;
    for (int it = 0; it < 2000; ++it) {
      Eigen::VectorXd w = a * v;
      const double norm = w.norm();
      if (norm == 0.0) break;
      lambda = norm;
      v = w / norm;
    }
    best = std::max(best, lambda);
  }
  return best;
}

}  // namespace

TEST_CASE("single pair gives the two directed edges") {
  const RegionGraph g = build_graph({{0, 1}}, 2);
  CHECK(g.n_undirected() == 1);
  REQUIRE(g.n_directed() == 2);
  CHECK(g.directed_edges[0] == std::pair<int, int>(0, 1));
  CHECK(g.directed_edges[1] == std::pair<int, int>(1, 0));
}

TEST_CASE("chain neighbourhoods") {
  const RegionGraph g = build_graph({{0, 1}, {1, 2}}, 3);
  std::set<int> nb;
  for (const auto& [j, k] : g.neighbors[1]) {
    nb.insert(j);
    CHECK(g.directed_edges[static_cast<size_t>(k)].first == 1);
  }
  CHECK(nb == std::set<int>{0, 2});
  CHECK(g.edge_index(0, 2) == -1);
}

TEST_CASE("input order and pair orientation do not matter") {
  std::vector<std::pair<int, int>> edges{{3, 1}, {0, 1}, {2, 3}, {1, 2}};
  const RegionGraph a = build_graph(edges, 4);
  std::reverse(edges.begin(), edges.end());
  for (auto& e : edges) std::swap(e.first, e.second);
  const RegionGraph b = build_graph(edges, 4);
  CHECK(a.undirected_edges == b.undirected_edges);
  CHECK(a.directed_edges == b.directed_edges);
}

TEST_CASE("edge lookup is a bijection onto the directed index range") {
  Rng rng(7);
  // Random simple graph on 12 nodes.
  std::set<std::pair<int, int>> pool;
  while (pool.size() < 20) {
    int i = static_cast<int>(rng.uniform_int(12));
    int j = static_cast<int>(rng.uniform_int(12));
    if (i == j) continue;
    pool.emplace(std::min(i, j), std::max(i, j));
  }
  const RegionGraph g = build_graph({pool.begin(), pool.end()}, 12);
  CHECK(g.n_directed() == 40);
  std::set<int> seen;
  for (int k = 0; k < g.n_directed(); ++k) {
    const auto& [i, j] = g.directed_edges[static_cast<size_t>(k)];
    CHECK(g.edge_index(i, j) == k);
    seen.insert(k);
  }
  CHECK(static_cast<int>(seen.size()) == g.n_directed());
}

TEST_CASE("construction at the survey scale") {
  Rng rng(17);
  std::set<std::pair<int, int>> pool;
  while (pool.size() < 298) {
    int i = static_cast<int>(rng.uniform_int(80));
    int j = static_cast<int>(rng.uniform_int(80));
    if (i == j) continue;
    pool.emplace(std::min(i, j), std::max(i, j));
  }
  const RegionGraph g = build_graph({pool.begin(), pool.end()}, 80);
  CHECK(g.n_regions == 80);
  CHECK(g.n_undirected() == 298);
  CHECK(g.n_directed() == 596);
}

TEST_CASE("invalid edges are rejected with the offending pair") {
  CHECK_THROWS_WITH_AS(build_graph({{0, 0}}, 2), "self-loop edge (0,0)",
                       std::invalid_argument);
  CHECK_THROWS_WITH_AS(build_graph({{0, 5}}, 3),
                       "edge index out of range (0,5)", std::invalid_argument);
  CHECK_THROWS_WITH_AS(build_graph({{0, 1}, {1, 0}}, 2),
                       "duplicate edge (0,1)", std::invalid_argument);
  CHECK_THROWS(build_graph({{0, 1}}, 0));
}

TEST_CASE("region labels, kinds, lookup") {
  const RegionGraph g =
      build_graph({{0, 1}}, 2, {"Alpha", "Beta"},
                  {RegionKind::urban, RegionKind::rural});
  CHECK(g.region_label(0) == "Alpha");
  CHECK(g.find_region("Beta") == 1);
  CHECK(g.find_region("1") == 1);
  CHECK(g.find_region("Nope") == -1);
  CHECK(to_string(g.region_kinds[0]) == "urban");
  CHECK_THROWS(build_graph({{0, 1}}, 2, {"OnlyOne"}));
}

TEST_CASE("reachability honours disconnected components") {
  const RegionGraph g = build_graph({{0, 1}, {2, 3}}, 5);
  const auto from0 = g.reachable_from(0);
  CHECK(from0[0]);
  CHECK(from0[1]);
  CHECK(!from0[2]);
  CHECK(!from0[4]);
}

TEST_CASE("spectral normalization fixed cases") {
  Eigen::MatrixXd two(2, 2);
  two << 0, 1, 1, 0;
  CHECK((spectral_normalize(two) - two).cwiseAbs().maxCoeff() < 1e-12);

  Eigen::MatrixXd k3 = Eigen::MatrixXd::Ones(3, 3);
  k3.diagonal().setZero();
  CHECK((spectral_normalize(k3) - k3 / 2.0).cwiseAbs().maxCoeff() < 1e-12);

  // Path on three nodes: radius sqrt(2), checked against power iteration.
  Eigen::MatrixXd path(3, 3);
  path << 0, 1, 0, 1, 0, 1, 0, 1, 0;
  const double radius = power_iteration_radius(path);
  CHECK(radius == doctest::Approx(std::sqrt(2.0)).epsilon(1e-9));
  CHECK((spectral_normalize(path) - path / radius).cwiseAbs().maxCoeff() <
        1e-9);
}

TEST_CASE("spectral normalization is idempotent and unit-radius") {
  const RegionGraph g = build_graph({{0, 1}, {1, 2}, {2, 3}, {0, 3}, {1, 3}},
                                    4);
  const Eigen::MatrixXd w = spectral_normalize(adjacency_matrix(g));
  CHECK(power_iteration_radius(w) == doctest::Approx(1.0).epsilon(1e-10));
  CHECK((spectral_normalize(w) - w).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("spectral normalization rejects degenerate input") {
  CHECK_THROWS(spectral_normalize(Eigen::MatrixXd::Zero(3, 3)));
  Eigen::MatrixXd diag = Eigen::MatrixXd::Identity(2, 2);
  CHECK_THROWS(spectral_normalize(diag));
  Eigen::MatrixXd asym(2, 2);
  asym << 0, 1, 0, 0;
  CHECK_THROWS(spectral_normalize(asym));
}
