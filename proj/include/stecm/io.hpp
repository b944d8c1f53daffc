#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "stecm/diagnostics.hpp"
#include "stecm/graph.hpp"
#include "stecm/panel.hpp"
#include "stecm/params.hpp"
#include "stecm/sampler.hpp"
#include "stecm/simulate.hpp"

namespace stecm {

/// Contents of a regions file: index,name,kind per line.
struct RegionsSpec {
  std::vector<std::string> names;
  std::vector<RegionKind> kinds;
  int n_regions() const { return static_cast<int>(names.size()); }
};

RegionsSpec read_regions_csv(const std::string& path);

/// Edge-list CSV, one undirected pair per line: region_a,region_b. Entries
/// are names resolved through `regions` when given, otherwise 0-based
/// indices. Without a regions file, n_regions defaults to max index + 1
/// unless a positive hint is passed.
RegionGraph read_graph_csv(const std::string& edges_path,
                           const RegionsSpec* regions = nullptr,
                           int n_regions_hint = -1);

/// Long-format panel CSV with header region,time,log_price. Times are
/// 1-based; absent rows and empty price fields become missing cells.
/// prices_are_raw applies a natural log on read.
PricePanel read_panel_csv(const std::string& path, const RegionGraph& g,
                          bool prices_are_raw = false);

void write_panel_csv(const std::string& path, const PricePanel& panel,
                     const RegionGraph& g);

/// Columnar binary draw storage with a plain-text layout header; lossless
/// round-trip. Readers reject version or endianness mismatches and
/// truncated files.
void write_draws(const std::string& path, const PosteriorDraws& draws);
PosteriorDraws read_draws(const std::string& path);

void write_summary_csv(const std::string& path,
                       const std::vector<SummaryRow>& rows);

void write_params_json(const std::string& path, const ModelParams& p);
ModelParams read_params_json(const std::string& path);

void write_shock_csv(const std::string& path, const ShockResult& res,
                     const RegionGraph& g);
void write_shock_trajectories_csv(const std::string& path,
                                  const ShockResult& res,
                                  const RegionGraph& g);
void write_shock_meta_json(const std::string& path, const ShockResult& res,
                           const RegionGraph& g);

/// Run configuration; flags mirror these fields and override them.
struct RunConfig {
  std::string panel_path;
  std::string graph_path;
  std::string regions_path;
  std::string output_dir;
  std::string model = "full";  // full | sar
  SamplerConfig sampler;
  PriorConfig priors;
  bool prices_are_raw = false;
  double rhat_gate = 1.05;

  void validate() const;
};

RunConfig read_run_config(const std::string& path);

}  // namespace stecm
