#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "stecm/diagnostics.hpp"
#include "stecm/io.hpp"
#include "stecm/likelihood.hpp"
#include "stecm/sampler.hpp"
#include "stecm/sar.hpp"
#include "stecm/simulate.hpp"

namespace {

using namespace stecm;

constexpr int kExitError = 1;
constexpr int kExitConvergence = 3;

struct CommonArgs {
  std::string config_path;
  std::string graph_path;
  std::string regions_path;
  std::string panel_path;
  std::string out_dir;
  bool prices_are_raw = false;
};

struct SamplerArgs {
  int chains = 4;
  int iterations = 8000;
  int warmup = 3000;
  double target_accept = 0.8;
  int max_depth = 10;
  std::uint64_t seed = 0;
  int threads = 0;
};

void add_common(CLI::App* sub, CommonArgs& a, bool with_panel) {
  sub->add_option("--config", a.config_path,
                  "JSON run configuration; flags override its values");
  sub->add_option("--graph", a.graph_path, "edge-list CSV (region_a,region_b)");
  sub->add_option("--regions", a.regions_path,
                  "regions CSV (index,name,kind)");
  if (with_panel) {
    sub->add_option("--panel", a.panel_path,
                    "long-format panel CSV (region,time,log_price)");
    sub->add_flag("--prices-are-raw", a.prices_are_raw,
                  "apply natural log to prices on read");
  }
  sub->add_option("--out", a.out_dir, "output directory");
}

void add_sampler(CLI::App* sub, SamplerArgs& s) {
  sub->add_option("--chains", s.chains, "number of chains");
  sub->add_option("--iterations", s.iterations, "iterations per chain");
  sub->add_option("--warmup", s.warmup, "warmup iterations discarded");
  sub->add_option("--target-accept", s.target_accept,
                  "dual-averaging target acceptance");
  sub->add_option("--max-depth", s.max_depth, "maximum trajectory doublings");
  sub->add_option("--seed", s.seed, "master seed; all randomness flows from it");
  sub->add_option("--threads", s.threads,
                  "chain parallelism cap (0 = hardware)");
}

RunConfig merge_config(const CLI::App* sub, const CommonArgs& a,
                       const SamplerArgs* s) {
  RunConfig cfg;
  if (!a.config_path.empty()) cfg = read_run_config(a.config_path);
  auto used = [&](const char* flag) { return sub->count(flag) > 0; };
  if (used("--graph")) cfg.graph_path = a.graph_path;
  if (used("--regions")) cfg.regions_path = a.regions_path;
  if (sub->get_option_no_throw("--panel") && used("--panel"))
    cfg.panel_path = a.panel_path;
  if (sub->get_option_no_throw("--prices-are-raw") && used("--prices-are-raw"))
    cfg.prices_are_raw = a.prices_are_raw;
  if (used("--out")) cfg.output_dir = a.out_dir;
  if (s) {
    if (used("--chains")) cfg.sampler.n_chains = s->chains;
    if (used("--iterations")) cfg.sampler.n_iterations = s->iterations;
    if (used("--warmup")) cfg.sampler.n_warmup = s->warmup;
    if (used("--target-accept"))
      cfg.sampler.target_acceptance = s->target_accept;
    if (used("--max-depth")) cfg.sampler.max_tree_depth = s->max_depth;
    if (used("--seed")) cfg.sampler.seed = s->seed;
    if (used("--threads")) cfg.sampler.n_threads = s->threads;
  }
  return cfg;
}

RegionGraph load_graph(const RunConfig& cfg) {
  if (cfg.graph_path.empty())
    throw std::runtime_error("a graph file is required (--graph)");
  if (!cfg.regions_path.empty()) {
    const RegionsSpec regions = read_regions_csv(cfg.regions_path);
    return read_graph_csv(cfg.graph_path, &regions);
  }
  return read_graph_csv(cfg.graph_path);
}

std::string out_path(const RunConfig& cfg, const std::string& name) {
  if (cfg.output_dir.empty())
    throw std::runtime_error("an output directory is required (--out)");
  std::filesystem::create_directories(cfg.output_dir);
  return (std::filesystem::path(cfg.output_dir) / name).string();
}

std::vector<std::string> split_selectors(
    const std::vector<std::string>& raw) {
  std::vector<std::string> out;
  for (const auto& token : raw) {
    size_t start = 0;
    while (start <= token.size()) {
      const size_t comma = token.find(',', start);
      const std::string piece =
          token.substr(start, comma == std::string::npos ? std::string::npos
                                                         : comma - start);
      if (!piece.empty()) out.push_back(piece);
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
  }
  return out;
}

/// Data-informed latent-price start: observed values, gaps from the region
/// mean (global mean for fully missing regions).
Eigen::MatrixXd initial_mu(const PricePanel& panel) {
  double global_sum = 0.0;
  long global_n = 0;
  for (int i = 0; i < panel.n_regions; ++i)
    for (int t = 0; t < panel.n_time; ++t)
      if (panel.observed(i, t)) {
        global_sum += panel.y(i, t);
        ++global_n;
      }
  const double global_mean = global_n > 0 ? global_sum / global_n : 0.0;

  Eigen::MatrixXd mu(panel.n_regions, panel.n_time);
  for (int i = 0; i < panel.n_regions; ++i) {
    double sum = 0.0;
    long n = 0;
    for (int t = 0; t < panel.n_time; ++t)
      if (panel.observed(i, t)) {
        sum += panel.y(i, t);
        ++n;
      }
    const double mean = n > 0 ? sum / n : global_mean;
    for (int t = 0; t < panel.n_time; ++t)
      mu(i, t) = panel.observed(i, t) ? panel.y(i, t) : mean;
  }
  return mu;
}

int cmd_simulate(const CLI::App* sub, const CommonArgs& common,
                 int n_time, double missing_rate, std::uint64_t seed,
                 const std::string& truth_path) {
  RunConfig cfg = merge_config(sub, common, nullptr);
  const RegionGraph g = load_graph(cfg);

  // Separate streams so re-simulating from a saved truth file with the same
  // seed reproduces the panel.
  ModelParams truth;
  if (!truth_path.empty()) {
    truth = read_params_json(truth_path);
    if (truth.dims().n_regions != g.n_regions ||
        truth.dims().n_edges != g.n_directed())
      throw std::runtime_error("truth file does not match the graph");
    if (n_time > 0 && truth.dims().n_time != n_time)
      throw std::runtime_error("truth file does not match --n-time");
  } else {
    if (n_time < 2)
      throw std::runtime_error("--n-time is required when sampling the truth");
    Rng truth_rng(derive_seed(seed, 7001));
    truth = sample_prior_params(g, n_time, truth_rng, cfg.priors);
  }

  Rng noise_rng(derive_seed(seed, 7002));
  auto [panel, realized] = gen_synthetic(std::move(truth), g, missing_rate,
                                         noise_rng, cfg.priors);
  write_panel_csv(out_path(cfg, "panel.csv"), panel, g);
  write_params_json(out_path(cfg, "truth.json"), realized);

  std::cout << "regions " << panel.n_regions << ", time points "
            << panel.n_time << ", observed " << panel.n_observed() << "/"
            << (static_cast<long>(panel.n_regions) * panel.n_time) << "\n";
  return 0;
}

int cmd_fit(const CLI::App* sub, const CommonArgs& common,
            const SamplerArgs& sargs, const std::string& model_flag,
            bool force_sar, double rhat_gate_flag,
            const std::vector<std::string>& selectors, bool with_gamma,
            bool with_mu) {
  RunConfig cfg = merge_config(sub, common, &sargs);
  if (force_sar)
    cfg.model = "sar";
  else if (sub->get_option_no_throw("--model") && sub->count("--model"))
    cfg.model = model_flag;
  if (sub->count("--rhat-gate")) cfg.rhat_gate = rhat_gate_flag;
  cfg.validate();

  const RegionGraph g = load_graph(cfg);
  if (cfg.panel_path.empty())
    throw std::runtime_error("a panel file is required (--panel)");
  const PricePanel panel =
      read_panel_csv(cfg.panel_path, g, cfg.prices_are_raw);
  for (int i : panel.unobserved_regions())
    std::cerr << "warning: region " << g.region_label(i)
              << " has no observations anywhere in the panel\n";
  const Eigen::MatrixXd mu0 = initial_mu(panel);

  PosteriorDraws draws;
  std::vector<ScalarSpec> specs;

  if (cfg.model == "sar") {
    SarPosterior post(g, panel, cfg.priors);
    const ParamLayout layout = post.layout();
    const ParamBlock mu_block = layout.block("mu");
    Initializer init = [&](int, Rng& rng) {
      Eigen::VectorXd v(layout.dim());
      for (int i = 0; i < layout.dim(); ++i) v[i] = rng.uniform(-2.0, 2.0);
      Eigen::Map<Eigen::MatrixXd>(v.data() + mu_block.offset, mu0.rows(),
                                  mu0.cols()) = mu0;
      return v;
    };
    LogDensityGrad target = [&post](const Eigen::VectorXd& v,
                                    Eigen::VectorXd* grad) {
      return post.value(v, grad);
    };
    draws = sample(target, post.dim(), cfg.sampler, init, layout);
    specs = sar_scalar_specs(layout, with_mu);
  } else {
    EcmPosterior post(g, panel, cfg.priors);
    const ParamLayout layout = post.layout();
    const ParamBlock mu_block = layout.block("mu");
    Initializer init = [&](int, Rng& rng) {
      Eigen::VectorXd v(layout.dim());
      for (int i = 0; i < layout.dim(); ++i) v[i] = rng.uniform(-2.0, 2.0);
      Eigen::Map<Eigen::MatrixXd>(v.data() + mu_block.offset, mu0.rows(),
                                  mu0.cols()) = mu0;
      return v;
    };
    LogDensityGrad target = [&post](const Eigen::VectorXd& v,
                                    Eigen::VectorXd* grad) {
      return post.value(v, grad);
    };
    draws = sample(target, post.dim(), cfg.sampler, init, layout);
    draws.meta.emplace_back("gamma_init_mean", cfg.priors.gamma_init_mean);
    draws.meta.emplace_back("gamma_init_sd", cfg.priors.gamma_init_sd);
    specs = ecm_scalar_specs(layout, g, with_gamma, with_mu,
                             cfg.priors.gamma_init_mean,
                             cfg.priors.gamma_init_sd);
  }

  write_draws(out_path(cfg, "draws.bin"), draws);

  if (!selectors.empty())
    specs = select_specs(specs, split_selectors(selectors));
  const std::vector<SummaryRow> rows = summarize(draws, specs);
  write_summary_csv(out_path(cfg, "summary.csv"), rows);

  double max_rhat = 0.0;
  long total_divergent = 0;
  for (const auto& r : rows)
    if (std::isfinite(r.rhat)) max_rhat = std::max(max_rhat, r.rhat);
  for (const auto& rep : draws.reports) total_divergent += rep.n_divergent;

  nlohmann::json report;
  report["model"] = cfg.model;
  report["seed"] = cfg.sampler.seed;
  report["chains"] = cfg.sampler.n_chains;
  report["iterations"] = cfg.sampler.n_iterations;
  report["warmup"] = cfg.sampler.n_warmup;
  report["target_acceptance"] = cfg.sampler.target_acceptance;
  report["max_tree_depth"] = cfg.sampler.max_tree_depth;
  report["max_rhat"] = max_rhat;
  report["divergences"] = total_divergent;
  if (cfg.model == "sar") report["rho_prior"] = "uniform(-1,1)";
  auto chains = nlohmann::json::array();
  for (const auto& rep : draws.reports) {
    nlohmann::json c;
    c["step_size"] = rep.step_size;
    c["divergences"] = rep.n_divergent;
    c["mean_acceptance"] = rep.mean_acceptance;
    c["mean_tree_depth"] = rep.mean_tree_depth;
    chains.push_back(c);
  }
  report["chain_reports"] = chains;
  {
    std::ofstream out(out_path(cfg, "sampler_report.json"));
    out << report.dump(2) << "\n";
  }

  std::cout << "draws " << draws.n_chains << " x " << draws.n_draws
            << ", max rhat " << max_rhat << ", divergences "
            << total_divergent << "\n";
  const long total_kept =
      static_cast<long>(draws.n_chains) * draws.n_draws;
  if (total_divergent * 100 > total_kept)
    std::cerr << "warning: " << total_divergent << "/" << total_kept
              << " post-warmup iterations diverged at the adapted step size;"
              << " results are unreliable\n";
  if (max_rhat > cfg.rhat_gate) {
    std::cerr << "convergence gate failed: max rhat " << max_rhat << " > "
              << cfg.rhat_gate << "\n";
    return kExitConvergence;
  }
  return 0;
}

int cmd_shock(const CLI::App* sub, const CommonArgs& common,
              const std::string& draws_path, const std::string& region,
              int gamma_time, double delta, int months, bool trajectories) {
  RunConfig cfg = merge_config(sub, common, nullptr);
  const RegionGraph g = load_graph(cfg);
  const PosteriorDraws draws = read_draws(draws_path);

  const int region_idx = g.find_region(region);
  if (region_idx < 0)
    throw std::runtime_error("unknown region '" + region + "'");

  const ShockResult res = shock_experiment(draws, g, region_idx, delta,
                                           months, gamma_time - 1);
  write_shock_csv(out_path(cfg, "shock.csv"), res, g);
  if (trajectories)
    write_shock_trajectories_csv(out_path(cfg, "shock_trajectories.csv"), res,
                                 g);
  write_shock_meta_json(out_path(cfg, "shock_meta.json"), res, g);

  std::cout << "shock at " << g.region_label(region_idx) << ", max increase "
            << res.max_pct_increase.maxCoeff() << "% ("
            << res.n_draws_used << " draws)\n";
  return 0;
}

int cmd_diagnose(const CLI::App* sub, const CommonArgs& common,
                 const std::string& draws_path, const std::string& out_file,
                 const std::vector<std::string>& selectors, bool with_gamma,
                 bool with_mu) {
  const PosteriorDraws draws = read_draws(draws_path);

  std::vector<ScalarSpec> specs;
  const bool is_ecm = draws.layout.find("gamma_z") != nullptr;
  const bool is_sar = draws.layout.find("raw_rho") != nullptr;
  if (is_ecm && !common.graph_path.empty()) {
    RunConfig cfg = merge_config(sub, common, nullptr);
    const RegionGraph g = load_graph(cfg);
    specs = ecm_scalar_specs(draws.layout, g, with_gamma, with_mu,
                             draws.find_meta("gamma_init_mean", -2.0),
                             draws.find_meta("gamma_init_sd", 2.0));
  } else if (is_sar) {
    specs = sar_scalar_specs(draws.layout, with_mu);
  } else {
    specs = generic_scalar_specs(draws.layout);
  }
  if (!selectors.empty())
    specs = select_specs(specs, split_selectors(selectors));

  const std::vector<SummaryRow> rows = summarize(draws, specs);
  write_summary_csv(out_file, rows);
  std::cout << rows.size() << " parameters summarized\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spatio-temporal error correction model for price panels"};
  app.require_subcommand(1);

  // simulate
  auto* sim = app.add_subcommand("simulate", "generate a synthetic panel");
  CommonArgs sim_common;
  add_common(sim, sim_common, false);
  int sim_n_time = 0;
  double sim_missing = 0.05;
  std::uint64_t sim_seed = 0;
  std::string sim_truth;
  sim->add_option("--n-time", sim_n_time, "number of monthly time points");
  sim->add_option("--missing-rate", sim_missing,
                  "independent missingness probability");
  sim->add_option("--seed", sim_seed, "seed for truth and noise");
  sim->add_option("--truth", sim_truth,
                  "parameter JSON to simulate from (default: prior draw)");

  // fit / fit-sar
  auto* fit = app.add_subcommand("fit", "sample the posterior");
  auto* fit_sar =
      app.add_subcommand("fit-sar", "sample the SAR baseline posterior");
  CommonArgs fit_common, fitsar_common;
  SamplerArgs fit_sampler, fitsar_sampler;
  std::string fit_model = "full";
  double fit_gate = 1.05, fitsar_gate = 1.05;
  std::vector<std::string> fit_select, fitsar_select;
  bool fit_gamma = false, fit_mu = false, fitsar_mu = false;
  add_common(fit, fit_common, true);
  add_sampler(fit, fit_sampler);
  fit->add_option("--model", fit_model, "full | sar");
  fit->add_option("--rhat-gate", fit_gate,
                  "exit nonzero when any rhat exceeds this");
  fit->add_option("--select", fit_select,
                  "summary selectors (name prefixes or group:<kind-kind>)");
  fit->add_flag("--summary-gamma", fit_gamma,
                "include all gamma coefficients in the summary");
  fit->add_flag("--summary-mu", fit_mu,
                "include latent prices in the summary");
  add_common(fit_sar, fitsar_common, true);
  add_sampler(fit_sar, fitsar_sampler);
  fit_sar->add_option("--rhat-gate", fitsar_gate,
                      "exit nonzero when any rhat exceeds this");
  fit_sar->add_option("--select", fitsar_select, "summary selectors");
  fit_sar->add_flag("--summary-mu", fitsar_mu,
                    "include latent prices in the summary");

  // shock
  auto* shock = app.add_subcommand(
      "shock", "propagate a one-region price shock through the posterior");
  CommonArgs shock_common;
  add_common(shock, shock_common, false);
  std::string shock_draws, shock_region;
  int shock_gamma_time = 1, shock_months = 12;
  double shock_delta = 0.01;
  bool shock_traj = false;
  shock->add_option("--draws", shock_draws, "draws file from fit")->required();
  shock->add_option("--region", shock_region, "shock origin (name or index)")
      ->required();
  shock->add_option("--gamma-time", shock_gamma_time,
                    "1-based gamma slice to freeze (1..T-1)");
  shock->add_option("--delta", shock_delta, "log-price shock size");
  shock->add_option("--months", shock_months, "propagation window");
  shock->add_flag("--trajectories", shock_traj,
                  "also write the full trajectory CSV");

  // diagnose
  auto* diag = app.add_subcommand("diagnose",
                                  "summarize draws without refitting");
  CommonArgs diag_common;
  add_common(diag, diag_common, false);
  std::string diag_draws, diag_out = "summary.csv";
  std::vector<std::string> diag_select;
  bool diag_gamma = false, diag_mu = false;
  diag->add_option("--draws", diag_draws, "draws file")->required();
  diag->add_option("--out-file", diag_out, "summary CSV path");
  diag->add_option("--select", diag_select, "summary selectors");
  diag->add_flag("--summary-gamma", diag_gamma, "include gamma coefficients");
  diag->add_flag("--summary-mu", diag_mu, "include latent prices");

  CLI11_PARSE(app, argc, argv);

  try {
    if (sim->parsed())
      return cmd_simulate(sim, sim_common, sim_n_time, sim_missing, sim_seed,
                          sim_truth);
    if (fit->parsed())
      return cmd_fit(fit, fit_common, fit_sampler, fit_model, false, fit_gate,
                     fit_select, fit_gamma, fit_mu);
    if (fit_sar->parsed())
      return cmd_fit(fit_sar, fitsar_common, fitsar_sampler, "sar", true,
                     fitsar_gate, fitsar_select, false, fitsar_mu);
    if (shock->parsed())
      return cmd_shock(shock, shock_common, shock_draws, shock_region,
                       shock_gamma_time, shock_delta, shock_months,
                       shock_traj);
    if (diag->parsed())
      return cmd_diagnose(diag, diag_common, diag_draws, diag_out, diag_select,
                          diag_gamma, diag_mu);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  }
  return kExitError;
}
