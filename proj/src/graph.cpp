#include "stecm/graph.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <stdexcept>
#include <string>

namespace stecm {

std::string to_string(RegionKind k) {
  switch (k) {
    case RegionKind::urban: return "urban";
    case RegionKind::rural: return "rural";
    default: return "unknown";
  }
}

RegionKind region_kind_from_string(const std::string& s) {
  if (s == "urban") return RegionKind::urban;
  if (s == "rural") return RegionKind::rural;
  if (s == "unknown" || s.empty()) return RegionKind::unknown;
  throw std::invalid_argument("unknown region kind: '" + s + "'");
}

int RegionGraph::edge_index(int i, int j) const {
  const auto& row = neighbors.at(static_cast<size_t>(i));
  auto it = std::lower_bound(row.begin(), row.end(), j,
                             [](const std::pair<int, int>& e, int v) {
                               return e.first < v;
                             });
  if (it != row.end() && it->first == j) return it->second;
  return -1;
}

std::string RegionGraph::region_label(int i) const {
  if (!region_names.empty()) return region_names.at(static_cast<size_t>(i));
  return std::to_string(i);
}

int RegionGraph::find_region(const std::string& name) const {
  for (int i = 0; i < n_regions; ++i) {
    if (!region_names.empty() && region_names[static_cast<size_t>(i)] == name)
      return i;
  }
  // Fall back to a decimal index.
  if (!name.empty() &&
      name.find_first_not_of("0123456789") == std::string::npos) {
    const int idx = std::stoi(name);
    if (idx >= 0 && idx < n_regions) return idx;
  }
  return -1;
}

std::vector<bool> RegionGraph::reachable_from(int origin) const {
  std::vector<bool> seen(static_cast<size_t>(n_regions), false);
  std::vector<int> stack{origin};
  seen[static_cast<size_t>(origin)] = true;
  while (!stack.empty()) {
    const int i = stack.back();
    stack.pop_back();
    for (const auto& [j, k] : neighbors[static_cast<size_t>(i)]) {
      (void)k;
      if (!seen[static_cast<size_t>(j)]) {
        seen[static_cast<size_t>(j)] = true;
        stack.push_back(j);
      }
    }
  }
  return seen;
}

RegionGraph build_graph(std::vector<std::pair<int, int>> edges, int n_regions,
                        std::vector<std::string> names,
                        std::vector<RegionKind> kinds) {
  if (n_regions <= 0) throw std::invalid_argument("n_regions must be positive");
  if (!names.empty() && static_cast<int>(names.size()) != n_regions)
    throw std::invalid_argument("names length does not match n_regions");
  if (!kinds.empty() && static_cast<int>(kinds.size()) != n_regions)
    throw std::invalid_argument("kinds length does not match n_regions");

  auto pair_str = [](const std::pair<int, int>& e) {
    return "(" + std::to_string(e.first) + "," + std::to_string(e.second) + ")";
  };

  for (auto& e : edges) {
    if (e.first == e.second)
      throw std::invalid_argument("self-loop edge " + pair_str(e));
    if (e.first < 0 || e.first >= n_regions || e.second < 0 ||
        e.second >= n_regions)
      throw std::invalid_argument("edge index out of range " + pair_str(e));
    if (e.first > e.second) std::swap(e.first, e.second);
  }
  std::sort(edges.begin(), edges.end());
  for (size_t k = 1; k < edges.size(); ++k) {
    if (edges[k] == edges[k - 1])
      throw std::invalid_argument("duplicate edge " + pair_str(edges[k]));
  }

  RegionGraph g;
  g.n_regions = n_regions;
  g.region_names = std::move(names);
  g.region_kinds = kinds.empty()
                       ? std::vector<RegionKind>(static_cast<size_t>(n_regions),
                                                 RegionKind::unknown)
                       : std::move(kinds);
  g.undirected_edges = std::move(edges);

  g.directed_edges.reserve(2 * g.undirected_edges.size());
  for (const auto& [i, j] : g.undirected_edges) {
    g.directed_edges.emplace_back(i, j);
    g.directed_edges.emplace_back(j, i);
  }
  std::sort(g.directed_edges.begin(), g.directed_edges.end());

  g.neighbors.assign(static_cast<size_t>(n_regions), {});
  for (int k = 0; k < g.n_directed(); ++k) {
    const auto& [i, j] = g.directed_edges[static_cast<size_t>(k)];
    g.neighbors[static_cast<size_t>(i)].emplace_back(j, k);
  }
  return g;
}

Eigen::MatrixXd adjacency_matrix(const RegionGraph& g) {
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(g.n_regions, g.n_regions);
  for (const auto& [i, j] : g.directed_edges) a(i, j) = 1.0;
  return a;
}

Eigen::MatrixXd spectral_normalize(const Eigen::MatrixXd& adjacency) {
  const Eigen::Index n = adjacency.rows();
  if (adjacency.cols() != n)
    throw std::invalid_argument("adjacency must be square");
  if (!adjacency.isApprox(adjacency.transpose(), 1e-12))
    throw std::invalid_argument("adjacency must be symmetric");
  if (adjacency.diagonal().cwiseAbs().maxCoeff() > 0.0)
    throw std::invalid_argument("adjacency must have zero diagonal");

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(adjacency,
                                                    Eigen::EigenvaluesOnly);
  const double radius = es.eigenvalues().cwiseAbs().maxCoeff();
  if (!(radius > 0.0))
    throw std::invalid_argument("spectral radius is zero (no edges)");
  return adjacency / radius;
}

}  // namespace stecm
