#pragma once

#include <Eigen/Core>

#include <string>
#include <utility>
#include <vector>

namespace stecm {

enum class RegionKind { unknown, urban, rural };

std::string to_string(RegionKind k);
RegionKind region_kind_from_string(const std::string& s);

/// Spatial neighbourhood structure over N regions.
///
/// Directed edges enumerate every ordered neighbour pair (i, j), sorted
/// lexicographically; all per-edge coefficient arrays (short-run and error
/// correction coefficients) use this ordering. Immutable after construction.
struct RegionGraph {
  int n_regions = 0;
  std::vector<std::string> region_names;                  // optional, size N or 0
  std::vector<RegionKind> region_kinds;                   // size N
  std::vector<std::pair<int, int>> undirected_edges;      // canonical i<j, sorted
  std::vector<std::pair<int, int>> directed_edges;        // sorted by (i,j)

  /// neighbors[i] lists (j, k) with k the directed-edge index of (i,j),
  /// sorted by j.
  std::vector<std::vector<std::pair<int, int>>> neighbors;

  int n_undirected() const { return static_cast<int>(undirected_edges.size()); }
  int n_directed() const { return static_cast<int>(directed_edges.size()); }

  /// Directed edge index of (i,j), or -1 if i and j are not neighbours.
  int edge_index(int i, int j) const;

  /// Region name if labels were given, else the decimal index.
  std::string region_label(int i) const;

  /// Index of a region by name (or decimal index string); -1 if unknown.
  int find_region(const std::string& name) const;

  /// Regions reachable from `origin` along edges (includes origin).
  std::vector<bool> reachable_from(int origin) const;
};

/// Builds the graph from undirected pairs. Pairs may come in either order;
/// they are canonicalized to i<j and sorted, so construction is independent
/// of input order. Rejects self-loops, out-of-range indices, and duplicates,
/// naming the offending pair.
RegionGraph build_graph(std::vector<std::pair<int, int>> edges, int n_regions,
                        std::vector<std::string> names = {},
                        std::vector<RegionKind> kinds = {});

/// Dense 0/1 adjacency matrix of the graph.
Eigen::MatrixXd adjacency_matrix(const RegionGraph& g);

/// Scales a symmetric matrix by its spectral radius, so the result has
/// spectral radius 1. Rejects matrices with nonzero diagonal, asymmetric
/// input, or zero spectral radius.
Eigen::MatrixXd spectral_normalize(const Eigen::MatrixXd& adjacency);

}  // namespace stecm
