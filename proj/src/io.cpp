#include "stecm/io.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

namespace stecm {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw std::runtime_error(path + ": " + what);
}

std::ifstream open_in(const std::string& path, bool binary = false) {
  std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
  if (!in) fail(path, "cannot open for reading");
  return in;
}

std::ofstream open_out(const std::string& path, bool binary = false) {
  std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
  if (!out) fail(path, "cannot open for writing");
  return out;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (ch == '"') {
        quoted = false;
      } else {
        cur += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  fields.push_back(cur);
  return fields;
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += "\"\"";
    else out += ch;
  }
  out += "\"";
  return out;
}

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

/// Strict numeric parse: the whole field must be consumed.
double parse_double(const std::string& s, const std::string& path,
                    const std::string& context) {
  const std::string t = trim(s);
  if (t.empty()) fail(path, "empty numeric field in " + context);
  size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(t, &pos);
  } catch (const std::exception&) {
    fail(path, "non-numeric value '" + s + "' in " + context);
  }
  if (pos != t.size())
    fail(path, "non-numeric value '" + s + "' in " + context);
  return v;
}

long parse_long(const std::string& s, const std::string& path,
                const std::string& context) {
  const std::string t = trim(s);
  size_t pos = 0;
  long v = 0;
  try {
    v = std::stol(t, &pos);
  } catch (const std::exception&) {
    fail(path, "non-integer value '" + s + "' in " + context);
  }
  if (t.empty() || pos != t.size())
    fail(path, "non-integer value '" + s + "' in " + context);
  return v;
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

bool host_is_little_endian() {
  const std::uint16_t probe = 0x0102;
  unsigned char bytes[2];
  std::memcpy(bytes, &probe, 2);
  return bytes[0] == 0x02;
}

json params_to_json(const ModelParams& p) {
  const ModelDims d = p.dims();
  json j;
  j["n_regions"] = d.n_regions;
  j["n_time"] = d.n_time;
  j["n_edges"] = d.n_edges;
  j["alpha"] = std::vector<double>(p.alpha.data(), p.alpha.data() + p.alpha.size());
  j["c_alpha"] = p.c_alpha;
  j["phi"] = p.phi;
  j["sigma_alpha"] = p.sigma_alpha;
  j["lambda"] = std::vector<double>(p.lambda.data(),
                                    p.lambda.data() + p.lambda.size());
  j["sigma_lambda"] = p.sigma_lambda;
  j["beta"] = std::vector<double>(p.beta.data(), p.beta.data() + p.beta.size());
  auto matrix_rows = [](const Eigen::MatrixXd& m) {
    std::vector<std::vector<double>> rows;
    rows.reserve(static_cast<size_t>(m.rows()));
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      std::vector<double> row(static_cast<size_t>(m.cols()));
      for (Eigen::Index c = 0; c < m.cols(); ++c)
        row[static_cast<size_t>(c)] = m(r, c);
      rows.push_back(std::move(row));
    }
    return rows;
  };
  j["tilde_gamma"] = matrix_rows(p.tilde_gamma);
  j["sigma_gamma"] = p.sigma_gamma;
  j["mu"] = matrix_rows(p.mu);
  j["sigma_mu"] = p.sigma_mu;
  j["sigma_y"] = p.sigma_y;
  return j;
}

ModelParams params_from_json(const json& j, const std::string& path) {
  ModelParams p;
  try {
    const int N = j.at("n_regions").get<int>();
    const int T = j.at("n_time").get<int>();
    const int K = j.at("n_edges").get<int>();
    auto vec = [&](const char* key, int len) {
      const auto data = j.at(key).get<std::vector<double>>();
      if (static_cast<int>(data.size()) != len)
        fail(path, std::string(key) + " has wrong length");
      return Eigen::Map<const Eigen::VectorXd>(data.data(), len).eval();
    };
    auto mat = [&](const char* key, int rows, int cols) {
      const auto data = j.at(key).get<std::vector<std::vector<double>>>();
      if (static_cast<int>(data.size()) != rows)
        fail(path, std::string(key) + " has wrong row count");
      Eigen::MatrixXd m(rows, cols);
      for (int r = 0; r < rows; ++r) {
        if (static_cast<int>(data[static_cast<size_t>(r)].size()) != cols)
          fail(path, std::string(key) + " has ragged rows");
        for (int c = 0; c < cols; ++c)
          m(r, c) = data[static_cast<size_t>(r)][static_cast<size_t>(c)];
      }
      return m;
    };
    p.alpha = vec("alpha", T - 1);
    p.c_alpha = j.at("c_alpha").get<double>();
    p.phi = j.at("phi").get<double>();
    p.sigma_alpha = j.at("sigma_alpha").get<double>();
    p.lambda = vec("lambda", N);
    p.sigma_lambda = j.at("sigma_lambda").get<double>();
    p.beta = vec("beta", K);
    p.tilde_gamma = mat("tilde_gamma", K, T - 1);
    p.sigma_gamma = j.at("sigma_gamma").get<double>();
    p.mu = mat("mu", N, T);
    p.sigma_mu = j.at("sigma_mu").get<double>();
    p.sigma_y = j.at("sigma_y").get<double>();
  } catch (const json::exception& e) {
    fail(path, std::string("malformed parameter file: ") + e.what());
  }
  return p;
}

}  // namespace

RegionsSpec read_regions_csv(const std::string& path) {
  auto in = open_in(path);
  std::string line;
  if (!std::getline(in, line)) fail(path, "empty regions file");
  auto header = split_csv_line(line);
  if (header.size() < 2 || trim(header[0]) != "index" ||
      trim(header[1]) != "name")
    fail(path, "expected header index,name[,kind]");

  std::map<long, std::pair<std::string, RegionKind>> rows;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    auto f = split_csv_line(line);
    if (f.size() < 2) fail(path, "regions row needs index,name");
    const long idx = parse_long(f[0], path, "regions index");
    RegionKind kind = RegionKind::unknown;
    if (f.size() >= 3) {
      try {
        kind = region_kind_from_string(trim(f[2]));
      } catch (const std::exception& e) {
        fail(path, e.what());
      }
    }
    if (!rows.emplace(idx, std::make_pair(trim(f[1]), kind)).second)
      fail(path, "duplicate region index " + std::to_string(idx));
  }
  if (rows.empty()) fail(path, "no regions listed");

  RegionsSpec spec;
  long expect = 0;
  for (const auto& [idx, entry] : rows) {
    if (idx != expect)
      fail(path, "region indices must be 0-based and contiguous (missing " +
                     std::to_string(expect) + ")");
    spec.names.push_back(entry.first);
    spec.kinds.push_back(entry.second);
    ++expect;
  }
  return spec;
}

RegionGraph read_graph_csv(const std::string& edges_path,
                           const RegionsSpec* regions, int n_regions_hint) {
  auto in = open_in(edges_path);
  std::string line;
  if (!std::getline(in, line)) fail(edges_path, "empty edge file");
  auto header = split_csv_line(line);
  if (header.size() < 2 || trim(header[0]) != "region_a" ||
      trim(header[1]) != "region_b")
    fail(edges_path, "expected header region_a,region_b");

  auto resolve = [&](const std::string& field) -> int {
    const std::string name = trim(field);
    if (regions) {
      for (int i = 0; i < regions->n_regions(); ++i)
        if (regions->names[static_cast<size_t>(i)] == name) return i;
      // Names take precedence; fall through to a numeric index.
    }
    if (!name.empty() &&
        name.find_first_not_of("0123456789") == std::string::npos)
      return static_cast<int>(parse_long(name, edges_path, "edge endpoint"));
    fail(edges_path, "unknown region '" + name + "'");
  };

  std::vector<std::pair<int, int>> edges;
  int max_index = -1;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    auto f = split_csv_line(line);
    if (f.size() < 2) fail(edges_path, "edge row needs two fields");
    const int a = resolve(f[0]);
    const int b = resolve(f[1]);
    max_index = std::max({max_index, a, b});
    edges.emplace_back(a, b);
  }

  int n = regions ? regions->n_regions() : n_regions_hint;
  if (n <= 0) n = max_index + 1;
  if (n <= 0) fail(edges_path, "cannot determine region count");
  try {
    return build_graph(std::move(edges), n,
                       regions ? regions->names : std::vector<std::string>{},
                       regions ? regions->kinds : std::vector<RegionKind>{});
  } catch (const std::exception& e) {
    fail(edges_path, e.what());
  }
}

PricePanel read_panel_csv(const std::string& path, const RegionGraph& g,
                          bool prices_are_raw) {
  auto in = open_in(path);
  std::string line;
  if (!std::getline(in, line)) fail(path, "empty panel file");
  auto header = split_csv_line(line);
  if (header.size() < 3 || trim(header[0]) != "region" ||
      trim(header[1]) != "time" || trim(header[2]) != "log_price")
    fail(path, "expected header region,time,log_price");

  struct Cell {
    int region;
    long time;
    bool missing;
    double value;
  };
  std::vector<Cell> cells;
  long max_time = 0;
  std::set<std::pair<int, long>> seen;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    auto f = split_csv_line(line);
    if (f.size() < 3) fail(path, "panel row needs region,time,log_price");
    const int region = g.find_region(trim(f[0]));
    if (region < 0) fail(path, "unknown region '" + trim(f[0]) + "'");
    const long time = parse_long(f[1], path, "time column");
    if (time < 1) fail(path, "time must be >= 1");
    if (!seen.emplace(region, time).second)
      fail(path, "duplicate cell for region '" + trim(f[0]) + "', time " +
                     std::to_string(time));
    max_time = std::max(max_time, time);
    Cell cell{region, time, trim(f[2]).empty(), 0.0};
    if (!cell.missing) {
      cell.value = parse_double(f[2], path, "log_price column");
      if (prices_are_raw) {
        if (!(cell.value > 0.0))
          fail(path, "raw prices must be positive to take logs");
        cell.value = std::log(cell.value);
      }
    }
    cells.push_back(cell);
  }
  if (cells.empty()) fail(path, "panel has no rows");
  if (max_time < 2) fail(path, "panel needs at least two time points");

  PricePanel panel;
  panel.n_regions = g.n_regions;
  panel.n_time = static_cast<int>(max_time);
  panel.y = Eigen::MatrixXd::Zero(panel.n_regions, panel.n_time);
  panel.observed = MaskMatrix::Constant(panel.n_regions, panel.n_time, false);
  for (const auto& c : cells) {
    if (c.missing) continue;
    panel.y(c.region, static_cast<int>(c.time) - 1) = c.value;
    panel.observed(c.region, static_cast<int>(c.time) - 1) = true;
  }
  panel.validate();
  return panel;
}

void write_panel_csv(const std::string& path, const PricePanel& panel,
                     const RegionGraph& g) {
  auto out = open_out(path);
  out << "region,time,log_price\n";
  for (int i = 0; i < panel.n_regions; ++i)
    for (int t = 0; t < panel.n_time; ++t) {
      out << csv_escape(g.region_label(i)) << "," << (t + 1) << ",";
      if (panel.observed(i, t)) out << fmt_double(panel.y(i, t));
      out << "\n";
    }
}

void write_draws(const std::string& path, const PosteriorDraws& d) {
  if (!host_is_little_endian())
    throw std::runtime_error("draw files are little-endian only");
  auto out = open_out(path, true);
  out << "stecm-draws 1\n";
  out << "endianness little\n";
  out << "n_chains " << d.n_chains << "\n";
  out << "n_draws " << d.n_draws << "\n";
  out << "dim " << d.dim << "\n";
  out << "stats lp divergent tree_depth accept_stat\n";
  for (const auto& [k, val] : d.meta)
    out << "meta " << k << " " << fmt_double(val) << "\n";
  for (const auto& b : d.layout.blocks())
    out << "block " << b.name << " " << b.rows << " " << b.cols << " "
        << b.offset << "\n";
  for (int c = 0; c < d.n_chains; ++c) {
    const auto& r = d.reports[static_cast<size_t>(c)];
    out << "chain " << c << " step_size " << fmt_double(r.step_size)
        << " divergences " << r.n_divergent << " accept "
        << fmt_double(r.mean_acceptance) << " depth "
        << fmt_double(r.mean_tree_depth) << "\n";
  }
  out << "end_header\n";
  for (int c = 0; c < d.n_chains; ++c) {
    const auto& m = d.draws[static_cast<size_t>(c)];
    const auto& s = d.stats[static_cast<size_t>(c)];
    out.write(reinterpret_cast<const char*>(m.data()),
              static_cast<std::streamsize>(sizeof(double)) * m.size());
    out.write(reinterpret_cast<const char*>(s.data()),
              static_cast<std::streamsize>(sizeof(double)) * s.size());
  }
  if (!out) fail(path, "write failed");
}

PosteriorDraws read_draws(const std::string& path) {
  auto in = open_in(path, true);
  std::string line;
  if (!std::getline(in, line)) fail(path, "empty draws file");
  {
    std::istringstream ls(line);
    std::string magic;
    int version = 0;
    ls >> magic >> version;
    if (magic != "stecm-draws") fail(path, "not a draws file");
    if (version != 1)
      fail(path, "unsupported draws file version " + std::to_string(version));
  }

  PosteriorDraws d;
  std::vector<ChainReport> reports;
  bool header_done = false;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "end_header") {
      header_done = true;
      break;
    } else if (key == "endianness") {
      std::string e;
      ls >> e;
      if (e != "little" || !host_is_little_endian())
        fail(path, "endianness mismatch (file is " + e + ")");
    } else if (key == "n_chains") {
      ls >> d.n_chains;
    } else if (key == "n_draws") {
      ls >> d.n_draws;
    } else if (key == "dim") {
      ls >> d.dim;
    } else if (key == "stats") {
      // fixed stat set in version 1
    } else if (key == "meta") {
      std::string name;
      double value;
      ls >> name >> value;
      if (!ls) fail(path, "malformed meta line");
      d.meta.emplace_back(name, value);
    } else if (key == "block") {
      std::string name;
      int rows, cols, offset;
      ls >> name >> rows >> cols >> offset;
      if (!ls) fail(path, "malformed block line");
      const int off = d.layout.add(name, rows, cols);
      if (off != offset) fail(path, "inconsistent block offsets");
    } else if (key == "chain") {
      int idx;
      std::string k1, k2, k3, k4;
      ChainReport r;
      ls >> idx >> k1 >> r.step_size >> k2 >> r.n_divergent >> k3 >>
          r.mean_acceptance >> k4 >> r.mean_tree_depth;
      if (!ls) fail(path, "malformed chain line");
      reports.push_back(r);
    } else {
      fail(path, "unknown header line: " + line);
    }
  }
  if (!header_done) fail(path, "missing end_header (truncated file?)");
  if (d.n_chains <= 0 || d.n_draws <= 0 || d.dim <= 0)
    fail(path, "incomplete header");
  if (d.layout.dim() != d.dim) fail(path, "layout does not cover dim");
  if (static_cast<int>(reports.size()) != d.n_chains)
    fail(path, "chain report count mismatch");
  d.reports = std::move(reports);

  for (int c = 0; c < d.n_chains; ++c) {
    Eigen::MatrixXd m(d.dim, d.n_draws);
    Eigen::MatrixXd s(kNumDrawStats, d.n_draws);
    in.read(reinterpret_cast<char*>(m.data()),
            static_cast<std::streamsize>(sizeof(double)) * m.size());
    in.read(reinterpret_cast<char*>(s.data()),
            static_cast<std::streamsize>(sizeof(double)) * s.size());
    if (!in) fail(path, "truncated draws file");
    d.draws.push_back(std::move(m));
    d.stats.push_back(std::move(s));
  }
  char extra;
  if (in.read(&extra, 1)) fail(path, "trailing bytes after draws");
  return d;
}

void write_summary_csv(const std::string& path,
                       const std::vector<SummaryRow>& rows) {
  auto out = open_out(path);
  out << "name,mean,median,q2.5,q97.5,ess_bulk,rhat,group\n";
  for (const auto& r : rows) {
    out << csv_escape(r.name) << "," << fmt_double(r.mean) << ","
        << fmt_double(r.median) << "," << fmt_double(r.q025) << ","
        << fmt_double(r.q975) << "," << fmt_double(r.ess_bulk) << ","
        << fmt_double(r.rhat) << "," << csv_escape(r.group) << "\n";
  }
}

void write_params_json(const std::string& path, const ModelParams& p) {
  auto out = open_out(path);
  out << params_to_json(p).dump(2) << "\n";
}

ModelParams read_params_json(const std::string& path) {
  auto in = open_in(path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    fail(path, std::string("invalid JSON: ") + e.what());
  }
  ModelParams p = params_from_json(j, path);
  p.validate();
  return p;
}

void write_shock_csv(const std::string& path, const ShockResult& res,
                     const RegionGraph& g) {
  auto out = open_out(path);
  out << "region,max_pct_increase,month_of_max\n";
  for (int i = 0; i < g.n_regions; ++i)
    out << csv_escape(g.region_label(i)) << ","
        << fmt_double(res.max_pct_increase[i]) << ","
        << res.month_of_max[static_cast<size_t>(i)] << "\n";
}

void write_shock_trajectories_csv(const std::string& path,
                                  const ShockResult& res,
                                  const RegionGraph& g) {
  auto out = open_out(path);
  out << "region";
  for (int m = 0; m <= res.months; ++m) out << ",month_" << m;
  out << "\n";
  for (int i = 0; i < g.n_regions; ++i) {
    out << csv_escape(g.region_label(i));
    for (int m = 0; m <= res.months; ++m)
      out << "," << fmt_double(res.trajectories(i, m));
    out << "\n";
  }
}

void write_shock_meta_json(const std::string& path, const ShockResult& res,
                           const RegionGraph& g) {
  json j;
  j["shock_region"] = g.region_label(res.shock_region);
  j["delta"] = res.delta;
  j["months"] = res.months;
  j["gamma_time"] = res.gamma_slice + 1;  // 1-based in interfaces
  j["n_draws_used"] = res.n_draws_used;
  j["n_draws_skipped"] = res.n_draws_skipped;
  j["averaging"] =
      "trajectories averaged over posterior draws, then maximum over months";
  auto out = open_out(path);
  out << j.dump(2) << "\n";
}

void RunConfig::validate() const {
  auto check_exists = [](const std::string& p, const char* what) {
    if (p.empty()) return;
    std::ifstream f(p);
    if (!f)
      throw std::runtime_error(std::string(what) + " file not found: " + p);
  };
  check_exists(panel_path, "panel");
  check_exists(graph_path, "graph");
  check_exists(regions_path, "regions");
  if (model != "full" && model != "sar")
    throw std::runtime_error("model must be 'full' or 'sar', got '" + model +
                             "'");
  sampler.validate();
  if (!(rhat_gate > 1.0))
    throw std::runtime_error("rhat gate must exceed 1");
}

RunConfig read_run_config(const std::string& path) {
  auto in = open_in(path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    fail(path, std::string("invalid JSON: ") + e.what());
  }
  RunConfig cfg;
  try {
    cfg.panel_path = j.value("panel", "");
    cfg.graph_path = j.value("graph", "");
    cfg.regions_path = j.value("regions", "");
    cfg.output_dir = j.value("output_dir", "");
    cfg.model = j.value("model", "full");
    cfg.prices_are_raw = j.value("prices_are_raw", false);
    cfg.rhat_gate = j.value("rhat_gate", 1.05);
    if (j.contains("sampler")) {
      const auto& s = j.at("sampler");
      cfg.sampler.n_chains = s.value("chains", cfg.sampler.n_chains);
      cfg.sampler.n_iterations =
          s.value("iterations", cfg.sampler.n_iterations);
      cfg.sampler.n_warmup = s.value("warmup", cfg.sampler.n_warmup);
      cfg.sampler.target_acceptance =
          s.value("target_acceptance", cfg.sampler.target_acceptance);
      cfg.sampler.max_tree_depth =
          s.value("max_tree_depth", cfg.sampler.max_tree_depth);
      cfg.sampler.seed = s.value("seed", cfg.sampler.seed);
      cfg.sampler.n_threads = s.value("threads", cfg.sampler.n_threads);
    }
    if (j.contains("priors")) {
      for (const auto& [name, value] : j.at("priors").items())
        cfg.priors.override_prior(name, value.get<std::vector<double>>());
    }
  } catch (const json::exception& e) {
    fail(path, std::string("malformed config: ") + e.what());
  }
  return cfg;
}

}  // namespace stecm
