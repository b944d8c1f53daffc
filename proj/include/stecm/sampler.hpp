#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "stecm/layout.hpp"
#include "stecm/rng.hpp"

namespace stecm {

/// Log-density with optional gradient. Must be a pure function of its input
/// and safe to call from several threads at once. Rejected points return
/// -inf, in which case the gradient output is not read.
using LogDensityGrad =
    std::function<double(const Eigen::VectorXd&, Eigen::VectorXd*)>;

/// Produces a candidate initial point for one chain. Called repeatedly (with
/// the chain's own generator) until the target is finite there.
using Initializer = std::function<Eigen::VectorXd(int chain, Rng& rng)>;

struct SamplerConfig {
  int n_chains = 4;
  int n_iterations = 8000;
  int n_warmup = 3000;
  double target_acceptance = 0.8;
  int max_tree_depth = 10;
  std::uint64_t seed = 0;
  int n_threads = 0;  // 0 = min(n_chains, hardware concurrency)

  void validate() const;
};

/// Row indices of the per-draw statistics matrix.
enum DrawStat : int {
  kStatLogDensity = 0,
  kStatDivergent = 1,
  kStatTreeDepth = 2,
  kStatAcceptance = 3,
};
inline constexpr int kNumDrawStats = 4;

struct ChainReport {
  double step_size = 0.0;        // adapted, fixed after warmup
  int n_divergent = 0;           // post-warmup
  double mean_acceptance = 0.0;  // post-warmup
  double mean_tree_depth = 0.0;
};

/// Post-warmup draws for all chains on the unconstrained scale, plus the
/// layout for named access.
struct PosteriorDraws {
  int n_chains = 0;
  int n_draws = 0;  // per chain
  int dim = 0;
  ParamLayout layout;
  std::vector<Eigen::MatrixXd> draws;  // per chain: dim x n_draws
  std::vector<Eigen::MatrixXd> stats;  // per chain: kNumDrawStats x n_draws
  std::vector<ChainReport> reports;

  /// Model-level constants carried with the draws (e.g. the anchors needed
  /// to rebuild a non-centered walk); persisted in the file header.
  std::vector<std::pair<std::string, double>> meta;

  double find_meta(const std::string& key, double fallback) const {
    for (const auto& [k, v] : meta)
      if (k == key) return v;
    return fallback;
  }

  /// Per-chain draw series of one flat coordinate.
  std::vector<Eigen::VectorXd> coordinate_series(int index) const;

  /// Flat index of element (r, c) of a named layout block.
  int coordinate(const std::string& block, int r = 0, int c = 0) const {
    return layout.block(block).index(r, c);
  }
};

/// Dynamic Hamiltonian Monte Carlo with a no-U-turn termination criterion,
/// dual-averaging step size adaptation, and windowed diagonal mass matrix
/// estimation. Chains run in parallel on independent generator streams
/// derived from cfg.seed; identical inputs give bit-identical output.
PosteriorDraws sample(const LogDensityGrad& target, int dim,
                      const SamplerConfig& cfg, const Initializer& init,
                      ParamLayout layout = {});

/// n_steps of leapfrog integration under a diagonal metric (inv_mass holds
/// the inverse mass diagonal). lp and grad must be valid for theta on entry
/// and are left valid for the final point. Exposed for integrator tests.
void leapfrog(const LogDensityGrad& target, const Eigen::VectorXd& inv_mass,
              double step, Eigen::VectorXd& theta, Eigen::VectorXd& momentum,
              Eigen::VectorXd& grad, double& lp, int n_steps = 1);

}  // namespace stecm
