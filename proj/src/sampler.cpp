#include "stecm/sampler.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <stdexcept>
#include <thread>

#include "stecm/density.hpp"

namespace stecm {

void SamplerConfig::validate() const {
  if (n_chains < 1) throw std::invalid_argument("n_chains must be >= 1");
  if (n_warmup < 0 || n_warmup >= n_iterations)
    throw std::invalid_argument("n_warmup must be in [0, n_iterations)");
  if (!(target_acceptance > 0.0 && target_acceptance < 1.0))
    throw std::invalid_argument("target_acceptance must be in (0,1)");
  if (max_tree_depth < 1 || max_tree_depth > 14)
    throw std::invalid_argument("max_tree_depth must be in [1, 14]");
}

std::vector<Eigen::VectorXd> PosteriorDraws::coordinate_series(
    int index) const {
  std::vector<Eigen::VectorXd> out;
  out.reserve(static_cast<size_t>(n_chains));
  for (const auto& m : draws) out.push_back(m.row(index).transpose());
  return out;
}

namespace {

constexpr double kDivergenceThreshold = 1000.0;

struct Phase {
  Eigen::VectorXd theta;
  Eigen::VectorXd p;
  Eigen::VectorXd grad;
  double lp = kNegInf;
};

double kinetic(const Eigen::VectorXd& p, const Eigen::VectorXd& inv_mass) {
  return 0.5 * p.dot(inv_mass.cwiseProduct(p));
}

double log_add_exp(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

/// One leapfrog step; the gradient at the new point is only trustworthy
/// when the new log density is finite.
void leapfrog_step(const LogDensityGrad& target,
                   const Eigen::VectorXd& inv_mass, double step, Phase& z) {
  z.p += 0.5 * step * z.grad;
  z.theta += step * inv_mass.cwiseProduct(z.p);
  z.lp = target(z.theta, &z.grad);
  if (std::isfinite(z.lp) && !z.grad.allFinite())
    throw std::runtime_error(
        "non-finite gradient at a point with finite log density");
  z.p += 0.5 * step * z.grad;
}

bool is_uturn(const Phase& left, const Phase& right,
              const Eigen::VectorXd& inv_mass) {
  const Eigen::VectorXd span = right.theta - left.theta;
  return span.dot(inv_mass.cwiseProduct(left.p)) < 0.0 ||
         span.dot(inv_mass.cwiseProduct(right.p)) < 0.0;
}

struct Subtree {
  Phase left, right;
  Eigen::VectorXd proposal;
  Eigen::VectorXd proposal_grad;
  double proposal_lp = kNegInf;
  double log_sum_w = kNegInf;
  double sum_accept = 0.0;
  long n_leapfrog = 0;
  bool divergent = false;
  bool turned = false;
};

/// Builds a balanced subtree of 2^depth leapfrog steps in one direction,
/// with multinomial selection of the in-tree proposal.
Subtree build_tree(const LogDensityGrad& target,
                   const Eigen::VectorXd& inv_mass, double step, int depth,
                   const Phase& from, int direction, double h0, Rng& rng) {
  if (depth == 0) {
    Subtree t;
    Phase z = from;
    leapfrog_step(target, inv_mass, direction * step, z);
    const double h = std::isfinite(z.lp) ? -z.lp + kinetic(z.p, inv_mass)
                                         : std::numeric_limits<double>::infinity();
    const double log_w = h0 - h;  // weight relative to the initial energy
    t.divergent = !(log_w > -kDivergenceThreshold);
    t.sum_accept = std::min(1.0, std::exp(log_w));
    t.n_leapfrog = 1;
    t.log_sum_w = log_w;
    t.proposal = z.theta;
    t.proposal_grad = z.grad;
    t.proposal_lp = z.lp;
    t.left = z;
    t.right = std::move(z);
    return t;
  }

  Subtree first = build_tree(target, inv_mass, step, depth - 1, from,
                             direction, h0, rng);
  if (first.divergent || first.turned) return first;

  const Phase& edge = direction > 0 ? first.right : first.left;
  Subtree second =
      build_tree(target, inv_mass, step, depth - 1, edge, direction, h0, rng);

  Subtree t;
  t.n_leapfrog = first.n_leapfrog + second.n_leapfrog;
  t.sum_accept = first.sum_accept + second.sum_accept;
  t.divergent = second.divergent;
  t.turned = second.turned;
  t.log_sum_w = log_add_exp(first.log_sum_w, second.log_sum_w);

  // Multinomial selection between the two halves.
  const double u = rng.uniform();
  if (std::log(u) < second.log_sum_w - t.log_sum_w) {
    t.proposal = std::move(second.proposal);
    t.proposal_grad = std::move(second.proposal_grad);
    t.proposal_lp = second.proposal_lp;
  } else {
    t.proposal = std::move(first.proposal);
    t.proposal_grad = std::move(first.proposal_grad);
    t.proposal_lp = first.proposal_lp;
  }

  t.left = direction > 0 ? std::move(first.left) : std::move(second.left);
  t.right = direction > 0 ? std::move(second.right) : std::move(first.right);
  if (!t.divergent && !t.turned)
    t.turned = is_uturn(t.left, t.right, inv_mass);
  return t;
}

struct TransitionResult {
  double accept_stat = 0.0;
  int depth = 0;
  bool divergent = false;
};

/// One dynamic-HMC transition; z carries (theta, lp, grad) and is updated
/// in place to the next state.
TransitionResult nuts_transition(const LogDensityGrad& target,
                                 const Eigen::VectorXd& inv_mass, double step,
                                 int max_depth, Phase& z, Rng& rng) {
  for (Eigen::Index i = 0; i < z.p.size(); ++i)
    z.p[i] = rng.normal() / std::sqrt(inv_mass[i]);
  const double h0 = -z.lp + kinetic(z.p, inv_mass);

  Phase left = z, right = z;
  Eigen::VectorXd proposal = z.theta;
  Eigen::VectorXd proposal_grad = z.grad;
  double proposal_lp = z.lp;
  double log_sum_w = 0.0;  // initial point has weight exp(h0 - h0) = 1
  double sum_accept = 0.0;
  long n_leapfrog = 0;

  TransitionResult res;
  for (int depth = 0; depth < max_depth; ++depth) {
    const int direction = rng.bernoulli(0.5) ? 1 : -1;
    Subtree sub = build_tree(target, inv_mass, step, depth,
                             direction > 0 ? right : left, direction, h0, rng);
    n_leapfrog += sub.n_leapfrog;
    sum_accept += sub.sum_accept;

    if (sub.divergent) {
      res.divergent = true;
      break;
    }
    if (sub.turned) break;

    // Biased progressive sampling: favour the fresh subtree.
    if (std::log(rng.uniform()) < sub.log_sum_w - log_sum_w) {
      proposal = std::move(sub.proposal);
      proposal_grad = std::move(sub.proposal_grad);
      proposal_lp = sub.proposal_lp;
    }
    log_sum_w = log_add_exp(log_sum_w, sub.log_sum_w);

    if (direction > 0)
      right = std::move(sub.right);
    else
      left = std::move(sub.left);

    res.depth = depth + 1;
    if (is_uturn(left, right, inv_mass)) break;
  }

  res.accept_stat =
      n_leapfrog > 0 ? sum_accept / static_cast<double>(n_leapfrog) : 0.0;

  z.theta = std::move(proposal);
  z.grad = std::move(proposal_grad);
  z.lp = proposal_lp;
  return res;
}

double find_reasonable_step(const LogDensityGrad& target,
                            const Eigen::VectorXd& inv_mass, const Phase& at,
                            Rng& rng) {
  double step = 1.0;
  Phase z = at;
  for (Eigen::Index i = 0; i < z.p.size(); ++i)
    z.p[i] = rng.normal() / std::sqrt(inv_mass[i]);
  const double h0 = -z.lp + kinetic(z.p, inv_mass);

  auto log_ratio = [&](double eps) {
    Phase w = z;
    leapfrog_step(target, inv_mass, eps, w);
    if (!std::isfinite(w.lp)) return -std::numeric_limits<double>::infinity();
    return h0 - (-w.lp + kinetic(w.p, inv_mass));
  };

  double lr = log_ratio(step);
  const double dir = lr > std::log(0.5) ? 1.0 : -1.0;
  for (int it = 0; it < 100; ++it) {
    if (dir * lr <= dir * std::log(0.5)) break;
    step *= dir > 0 ? 2.0 : 0.5;
    if (step > 1e7 || step < 1e-10) break;
    lr = log_ratio(step);
  }
  return step;
}

/// Nesterov-style dual averaging toward the target acceptance statistic.
struct DualAveraging {
  double mu = 0.0, log_eps = 0.0, log_eps_bar = 0.0, h_bar = 0.0;
  int count = 0;
  static constexpr double kGamma = 0.05, kT0 = 10.0, kKappa = 0.75;

  void init(double eps0) {
    mu = std::log(10.0 * eps0);
    log_eps = std::log(eps0);
    log_eps_bar = std::log(eps0);
    h_bar = 0.0;
    count = 0;
  }
  double update(double accept, double target) {
    ++count;
    const double eta = 1.0 / (count + kT0);
    h_bar = (1.0 - eta) * h_bar + eta * (target - accept);
    log_eps = mu - std::sqrt(static_cast<double>(count)) / kGamma * h_bar;
    const double w = std::pow(static_cast<double>(count), -kKappa);
    log_eps_bar = w * log_eps + (1.0 - w) * log_eps_bar;
    return std::exp(log_eps);
  }
  double adapted() const { return std::exp(log_eps_bar); }
};

/// Warmup phases: fast start (step size only), doubling slow windows
/// (covariance collection), fast tail.
struct WarmupSchedule {
  int init_buffer = 0, term_buffer = 0;
  std::vector<int> window_ends;  // exclusive warmup-iteration bounds

  explicit WarmupSchedule(int n_warmup) {
    if (n_warmup <= 0) return;
    int base = 25;
    if (n_warmup >= 150) {
      init_buffer = 75;
      term_buffer = 50;
    } else {
      init_buffer = std::max(1, n_warmup * 15 / 100);
      term_buffer = std::max(1, n_warmup * 10 / 100);
      base = std::max(1, (n_warmup - init_buffer - term_buffer) / 4);
    }
    const int slow_end = n_warmup - term_buffer;
    int pos = init_buffer;
    int w = base;
    while (pos < slow_end) {
      int end = pos + w;
      if (end + 2 * w > slow_end) end = slow_end;  // absorb the remainder
      window_ends.push_back(end);
      pos = end;
      w *= 2;
    }
  }

  bool in_slow(int m) const {
    return !window_ends.empty() && m >= init_buffer &&
           m < window_ends.back();
  }
  bool window_closes(int m) const {
    return std::find(window_ends.begin(), window_ends.end(), m + 1) !=
           window_ends.end();
  }
};

/// Streaming mean/variance.
struct Welford {
  long n = 0;
  Eigen::VectorXd mean, m2;

  explicit Welford(int dim)
      : mean(Eigen::VectorXd::Zero(dim)), m2(Eigen::VectorXd::Zero(dim)) {}
  void add(const Eigen::VectorXd& x) {
    ++n;
    const Eigen::VectorXd d = x - mean;
    mean += d / static_cast<double>(n);
    m2 += d.cwiseProduct(x - mean);
  }
  Eigen::VectorXd variance() const {
    if (n < 2) return Eigen::VectorXd::Ones(mean.size());
    return m2 / static_cast<double>(n - 1);
  }
  void reset() {
    n = 0;
    mean.setZero();
    m2.setZero();
  }
};

struct ChainOutput {
  Eigen::MatrixXd draws;
  Eigen::MatrixXd stats;
  ChainReport report;
};

ChainOutput run_chain(const LogDensityGrad& target, int dim,
                      const SamplerConfig& cfg, const Initializer& init,
                      int chain) {
  Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(chain)));

  Phase z;
  z.grad.resize(dim);
  bool found = false;
  for (int attempt = 0; attempt < 100 && !found; ++attempt) {
    z.theta = init(chain, rng);
    if (z.theta.size() != dim)
      throw std::runtime_error("initializer returned wrong dimension");
    z.lp = target(z.theta, &z.grad);
    found = std::isfinite(z.lp);
  }
  if (!found)
    throw std::runtime_error(
        "failed to find a finite initial point after 100 attempts");
  z.p = Eigen::VectorXd::Zero(dim);

  Eigen::VectorXd inv_mass = Eigen::VectorXd::Ones(dim);
  double step = find_reasonable_step(target, inv_mass, z, rng);
  DualAveraging da;
  da.init(step);
  const WarmupSchedule schedule(cfg.n_warmup);
  Welford welford(dim);

  const int n_keep = cfg.n_iterations - cfg.n_warmup;
  ChainOutput out;
  out.draws.resize(dim, n_keep);
  out.stats.resize(kNumDrawStats, n_keep);

  double sum_accept = 0.0, sum_depth = 0.0;
  int n_divergent = 0;

  for (int m = 0; m < cfg.n_iterations; ++m) {
    const bool warming = m < cfg.n_warmup;
    const TransitionResult res = nuts_transition(
        target, inv_mass, step, cfg.max_tree_depth, z, rng);

    if (warming) {
      step = da.update(res.accept_stat, cfg.target_acceptance);
      if (schedule.in_slow(m)) {
        welford.add(z.theta);
        if (schedule.window_closes(m)) {
          const Eigen::VectorXd var = welford.variance();
          const double n = static_cast<double>(welford.n);
          inv_mass = (n / (n + 5.0)) * var.array() + 1e-3 * (5.0 / (n + 5.0));
          welford.reset();
          step = find_reasonable_step(target, inv_mass, z, rng);
          da.init(step);
        }
      }
      if (m + 1 == cfg.n_warmup) step = da.adapted();
    } else {
      const int k = m - cfg.n_warmup;
      out.draws.col(k) = z.theta;
      out.stats(kStatLogDensity, k) = z.lp;
      out.stats(kStatDivergent, k) = res.divergent ? 1.0 : 0.0;
      out.stats(kStatTreeDepth, k) = res.depth;
      out.stats(kStatAcceptance, k) = res.accept_stat;
      sum_accept += res.accept_stat;
      sum_depth += res.depth;
      if (res.divergent) ++n_divergent;
    }
  }

  out.report.step_size = step;
  out.report.n_divergent = n_divergent;
  out.report.mean_acceptance = n_keep > 0 ? sum_accept / n_keep : 0.0;
  out.report.mean_tree_depth = n_keep > 0 ? sum_depth / n_keep : 0.0;
  return out;
}

}  // namespace

void leapfrog(const LogDensityGrad& target, const Eigen::VectorXd& inv_mass,
              double step, Eigen::VectorXd& theta, Eigen::VectorXd& momentum,
              Eigen::VectorXd& grad, double& lp, int n_steps) {
  Phase z;
  z.theta = theta;
  z.p = momentum;
  z.grad = grad;
  z.lp = lp;
  for (int i = 0; i < n_steps; ++i) leapfrog_step(target, inv_mass, step, z);
  theta = z.theta;
  momentum = z.p;
  grad = z.grad;
  lp = z.lp;
}

PosteriorDraws sample(const LogDensityGrad& target, int dim,
                      const SamplerConfig& cfg, const Initializer& init,
                      ParamLayout layout) {
  cfg.validate();
  if (dim <= 0) throw std::invalid_argument("dimension must be positive");
  if (!layout.empty() && layout.dim() != dim)
    throw std::invalid_argument("layout does not match dimension");

  std::vector<ChainOutput> outputs(static_cast<size_t>(cfg.n_chains));
  std::vector<std::string> errors(static_cast<size_t>(cfg.n_chains));

  int n_threads = cfg.n_threads;
  if (n_threads <= 0)
    n_threads = std::max(1u, std::thread::hardware_concurrency());
  n_threads = std::min(n_threads, cfg.n_chains);

  std::atomic<int> next{0};
  auto worker = [&]() {
    for (;;) {
      const int c = next.fetch_add(1);
      if (c >= cfg.n_chains) return;
      try {
        outputs[static_cast<size_t>(c)] =
            run_chain(target, dim, cfg, init, c);
      } catch (const std::exception& e) {
        errors[static_cast<size_t>(c)] = e.what();
      }
    }
  };
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(n_threads));
    for (int i = 0; i < n_threads; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  for (int c = 0; c < cfg.n_chains; ++c)
    if (!errors[static_cast<size_t>(c)].empty())
      throw std::runtime_error("chain " + std::to_string(c) + ": " +
                               errors[static_cast<size_t>(c)]);

  PosteriorDraws d;
  d.n_chains = cfg.n_chains;
  d.n_draws = cfg.n_iterations - cfg.n_warmup;
  d.dim = dim;
  d.layout = std::move(layout);
  if (d.layout.empty()) d.layout.add("x", dim);
  for (auto& o : outputs) {
    d.draws.push_back(std::move(o.draws));
    d.stats.push_back(std::move(o.stats));
    d.reports.push_back(o.report);
  }
  return d;
}

}  // namespace stecm
