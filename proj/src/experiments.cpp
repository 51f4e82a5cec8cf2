#include "attnlab/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <mutex>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <nlohmann/json.hpp>

namespace attnlab {

namespace {

void fail(const std::string& what) { throw std::invalid_argument("experiments: " + what); }

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct Welford {
  std::size_t n = 0;
  double sum = 0.0, sq = 0.0;
  void add(double v) {
    ++n;
    sum += v;
    sq += v * v;
  }
  double mean() const { return n ? sum / static_cast<double>(n) : kNan; }
  double sample_std() const {
    if (n < 2) return 0.0;
    const double nn = static_cast<double>(n);
    return std::sqrt(std::max(0.0, (sq - sum * sum / nn) / (nn - 1.0)));
  }
};

}  // namespace

void validate(const SweepManifest& m) {
  if (m.n_values.empty() || m.mu_values.empty() || m.sigma_p_values.empty() ||
      m.alpha_values.empty() || m.eta_values.empty() || m.sigma_v_values.empty())
    fail("every axis must be nonempty");
  if (m.repeats < 1) fail("repeats must be >= 1");
  if (m.eval_mc < 1) fail("eval_mc must be >= 1");
  for (std::size_t n : m.n_values)
    if (n < 1) fail("n axis values must be >= 1");
  for (double mu : m.mu_values)
    if (!(mu >= 0.0)) fail("mu axis values must be >= 0");
  for (double sp : m.sigma_p_values)
    if (!(sp >= 0.0)) fail("sigma_p axis values must be >= 0");
  for (double a : m.alpha_values)
    if (!(a >= 0.0 && a < 0.5)) fail("alpha axis values must lie in [0, 1/2)");
  for (double e : m.eta_values)
    if (!(e >= 0.0)) fail("eta axis values must be >= 0");
  for (double sv : m.sigma_v_values)
    if (!(sv >= 0.0)) fail("sigma_v axis values must be >= 0");
  if (m.d < 2) fail("d must be >= 2");
  if (m.m_k < 1 || m.m_v < 1) fail("widths must be >= 1");
  if (!(m.sigma_k >= 0.0)) fail("sigma_k must be >= 0");
  if (!(m.upsilon_norm > 0.0)) fail("upsilon_norm must be > 0");
  if (!(m.target_loss > 0.0)) fail("target_loss must be > 0");
}

std::size_t cell_count(const SweepManifest& m) {
  return m.n_values.size() * m.mu_values.size() * m.sigma_p_values.size() *
         m.alpha_values.size() * m.eta_values.size() * m.sigma_v_values.size();
}

CellCoords cell_coords(const SweepManifest& m, std::size_t cell) {
  if (cell >= cell_count(m)) fail("cell index out of range");
  std::size_t idx = cell;
  const std::size_t i_sv = idx % m.sigma_v_values.size();
  idx /= m.sigma_v_values.size();
  const std::size_t i_eta = idx % m.eta_values.size();
  idx /= m.eta_values.size();
  const std::size_t i_al = idx % m.alpha_values.size();
  idx /= m.alpha_values.size();
  const std::size_t i_sp = idx % m.sigma_p_values.size();
  idx /= m.sigma_p_values.size();
  const std::size_t i_mu = idx % m.mu_values.size();
  idx /= m.mu_values.size();
  return CellCoords{m.n_values[idx], m.mu_values[i_mu], m.sigma_p_values[i_sp],
                    m.alpha_values[i_al], m.eta_values[i_eta], m.sigma_v_values[i_sv]};
}

SweepManifest manifest_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(std::string("manifest parse: ") + e.what());
  }
  if (!j.is_object()) fail("manifest must be a JSON object");
  SweepManifest m;
  static const char* known[] = {
      "n_values",  "mu_values", "sigma_p_values", "alpha_values", "eta_values",
      "sigma_v_values", "repeats", "base_seed", "d", "m_k", "m_v", "sigma_k",
      "upsilon_norm", "target_loss", "max_iters", "train_upsilon", "eval_mc", "jobs"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    const bool ok = std::any_of(std::begin(known), std::end(known),
                                [&](const char* k) { return it.key() == k; });
    if (!ok) fail("manifest has unknown key '" + it.key() + "'");
  }
  auto get = [&](const char* key, auto& into) {
    if (j.contains(key)) into = j.at(key).get<std::decay_t<decltype(into)>>();
  };
  get("n_values", m.n_values);
  get("mu_values", m.mu_values);
  get("sigma_p_values", m.sigma_p_values);
  get("alpha_values", m.alpha_values);
  get("eta_values", m.eta_values);
  get("sigma_v_values", m.sigma_v_values);
  get("repeats", m.repeats);
  get("base_seed", m.base_seed);
  get("d", m.d);
  get("m_k", m.m_k);
  get("m_v", m.m_v);
  get("sigma_k", m.sigma_k);
  get("upsilon_norm", m.upsilon_norm);
  get("target_loss", m.target_loss);
  get("max_iters", m.max_iters);
  get("train_upsilon", m.train_upsilon);
  get("eval_mc", m.eval_mc);
  get("jobs", m.jobs);
  validate(m);
  return m;
}

std::string manifest_to_json(const SweepManifest& m) {
  nlohmann::json j;
  j["n_values"] = m.n_values;
  j["mu_values"] = m.mu_values;
  j["sigma_p_values"] = m.sigma_p_values;
  j["alpha_values"] = m.alpha_values;
  j["eta_values"] = m.eta_values;
  j["sigma_v_values"] = m.sigma_v_values;
  j["repeats"] = m.repeats;
  j["base_seed"] = m.base_seed;
  j["d"] = m.d;
  j["m_k"] = m.m_k;
  j["m_v"] = m.m_v;
  j["sigma_k"] = m.sigma_k;
  j["upsilon_norm"] = m.upsilon_norm;
  j["target_loss"] = m.target_loss;
  j["max_iters"] = m.max_iters;
  j["train_upsilon"] = m.train_upsilon;
  j["eval_mc"] = m.eval_mc;
  j["jobs"] = m.jobs;
  return j.dump(2) + "\n";
}

namespace {

RunResult execute_run(const SweepManifest& m, std::size_t cell, std::size_t repeat) {
  RunResult r;
  r.cell = cell;
  r.repeat = repeat;
  r.stream_id = static_cast<std::uint64_t>(cell) * m.repeats + repeat;
  r.coords = cell_coords(m, cell);
  RngStream rng(m.base_seed, r.stream_id);
  DataConfig dcfg;
  dcfg.d = m.d;
  dcfg.mu_norm = r.coords.mu_norm;
  dcfg.sigma_p = r.coords.sigma_p;
  dcfg.alpha = r.coords.alpha;
  dcfg.n = r.coords.n;
  RngStream data_rng = rng.substream(0);
  const Dataset ds = sample_dataset(dcfg, data_rng);
  ModelConfig mcfg;
  mcfg.d = m.d;
  mcfg.m_k = m.m_k;
  mcfg.m_v = m.m_v;
  mcfg.sigma_k = m.sigma_k;
  mcfg.sigma_v = r.coords.sigma_v;
  mcfg.upsilon_norm = m.upsilon_norm;
  TrainConfig tcfg;
  tcfg.eta = r.coords.eta;
  tcfg.max_iters = m.max_iters;
  tcfg.target_loss = m.target_loss;
  tcfg.train_upsilon = m.train_upsilon;
  tcfg.record_every = 0;  // terminal metrics only
  try {
    const TrainingRecord rec = train(ds, mcfg, tcfg, rng.substream(1));
    r.ok = true;
    r.iters = rec.iters;
    r.reached_target = rec.reason == StopReason::target_reached;
    r.final_train_loss = rec.final_loss;
    r.test = estimate_test(rec.final_params, dcfg, ds.signals, m.eval_mc,
                           rng.substream(2));
  } catch (const TrainingDivergedError& e) {
    r.ok = false;
    r.iters = e.record.iters;
    r.reached_target = false;
    r.final_train_loss = kNan;
    r.test.loss = kNan;
    r.test.error01 = kNan;
    r.test.error01_clean = kNan;
    r.test.std_err = kNan;
    r.test.loss_std_err = kNan;
    r.test.n_mc = 0;
  }
  return r;
}

}  // namespace

SweepResult run_sweep(const SweepManifest& m) {
  validate(m);
  const std::size_t cells = cell_count(m);
  const std::size_t total = cells * m.repeats;
  SweepResult out;
  out.manifest = m;
  out.runs.resize(total);
  const std::size_t jobs = std::max<std::size_t>(1, m.jobs);
  if (jobs == 1) {
    for (std::size_t t = 0; t < total; ++t)
      out.runs[t] = execute_run(m, t / m.repeats, t % m.repeats);
  } else {
    std::atomic<std::size_t> next{0};
    std::mutex err_mutex;
    std::exception_ptr first_error;
    auto worker = [&] {
      for (;;) {
        const std::size_t t = next.fetch_add(1);
        if (t >= total) return;
        try {
          out.runs[t] = execute_run(m, t / m.repeats, t % m.repeats);
        } catch (...) {
          std::lock_guard<std::mutex> lock(err_mutex);
          if (!first_error) first_error = std::current_exception();
        }
      }
    };
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < jobs; ++w) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
  }
  out.cells.resize(cells);
  for (std::size_t c = 0; c < cells; ++c) {
    CellResult& agg = out.cells[c];
    agg.cell = c;
    agg.coords = cell_coords(m, c);
    Welford train_l, test_l, err01, err01c, iters, reached;
    for (std::size_t rep = 0; rep < m.repeats; ++rep) {
      const RunResult& r = out.runs[c * m.repeats + rep];
      if (!r.ok) {
        ++agg.n_failed;
        continue;
      }
      ++agg.n_ok;
      train_l.add(r.final_train_loss);
      test_l.add(r.test.loss);
      err01.add(r.test.error01);
      err01c.add(r.test.error01_clean);
      iters.add(static_cast<double>(r.iters));
      reached.add(r.reached_target ? 1.0 : 0.0);
    }
    agg.train_loss_mean = train_l.mean();
    agg.test_loss_mean = test_l.mean();
    agg.test_loss_std = test_l.sample_std();
    agg.error01_mean = err01.mean();
    agg.error01_std = err01.sample_std();
    agg.error01_clean_mean = err01c.mean();
    agg.iters_mean = iters.mean();
    agg.reached_target_frac = reached.mean();
  }
  return out;
}

std::string runs_csv(const SweepResult& r) {
  std::string out =
      "cell,repeat,stream_id,n,mu_norm,sigma_p,alpha,eta,sigma_v,ok,"
      "reached_target,iters,final_train_loss,test_loss,test_error01,"
      "test_error01_clean,test_std_err\n";
  for (const auto& run : r.runs) {
    out += std::to_string(run.cell) + "," + std::to_string(run.repeat) + "," +
           std::to_string(run.stream_id) + "," + std::to_string(run.coords.n) + "," +
           fmt(run.coords.mu_norm) + "," + fmt(run.coords.sigma_p) + "," +
           fmt(run.coords.alpha) + "," + fmt(run.coords.eta) + "," +
           fmt(run.coords.sigma_v) + "," + (run.ok ? "1" : "0") + "," +
           (run.reached_target ? "1" : "0") + "," + std::to_string(run.iters) + "," +
           fmt(run.final_train_loss) + "," + fmt(run.test.loss) + "," +
           fmt(run.test.error01) + "," + fmt(run.test.error01_clean) + "," +
           fmt(run.test.std_err) + "\n";
  }
  return out;
}

std::string cells_csv(const SweepResult& r) {
  std::string out =
      "cell,n,mu_norm,sigma_p,alpha,eta,sigma_v,d,snr,n_ok,n_failed,"
      "train_loss_mean,test_loss_mean,test_loss_std,error01_mean,error01_std,"
      "error01_clean_mean,iters_mean,reached_target_frac\n";
  const double sqrt_d = std::sqrt(static_cast<double>(r.manifest.d));
  for (const auto& c : r.cells) {
    const double snr =
        c.coords.sigma_p > 0.0 ? c.coords.mu_norm / (c.coords.sigma_p * sqrt_d) : kNan;
    out += std::to_string(c.cell) + "," + std::to_string(c.coords.n) + "," +
           fmt(c.coords.mu_norm) + "," + fmt(c.coords.sigma_p) + "," +
           fmt(c.coords.alpha) + "," + fmt(c.coords.eta) + "," + fmt(c.coords.sigma_v) +
           "," + std::to_string(r.manifest.d) + "," + fmt(snr) + "," +
           std::to_string(c.n_ok) + "," + std::to_string(c.n_failed) + "," +
           fmt(c.train_loss_mean) + "," + fmt(c.test_loss_mean) + "," +
           fmt(c.test_loss_std) + "," + fmt(c.error01_mean) + "," + fmt(c.error01_std) +
           "," + fmt(c.error01_clean_mean) + "," + fmt(c.iters_mean) + "," +
           fmt(c.reached_target_frac) + "\n";
  }
  return out;
}

namespace {

std::vector<std::size_t> ascending_order(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  return idx;
}

}  // namespace

PhaseGrid to_phase_grid(const SweepResult& r) {
  const SweepManifest& m = r.manifest;
  if (m.sigma_p_values.size() != 1 || m.alpha_values.size() != 1 ||
      m.eta_values.size() != 1 || m.sigma_v_values.size() != 1)
    fail("to_phase_grid needs single-valued sigma_p, alpha, eta, sigma_v axes");
  PhaseGrid g;
  g.sigma_p = m.sigma_p_values[0];
  g.alpha = m.alpha_values[0];
  g.eta = m.eta_values[0];
  g.sigma_v = m.sigma_v_values[0];
  g.d = m.d;
  std::vector<double> n_dbl(m.n_values.begin(), m.n_values.end());
  const std::vector<std::size_t> n_ord = ascending_order(n_dbl);
  const std::vector<std::size_t> mu_ord = ascending_order(m.mu_values);
  for (std::size_t i : n_ord) g.n_axis.push_back(m.n_values[i]);
  for (std::size_t j : mu_ord) g.mu_axis.push_back(m.mu_values[j]);
  const double sqrt_d = std::sqrt(static_cast<double>(m.d));
  for (double mu : g.mu_axis) g.snr_axis.push_back(mu / (g.sigma_p * sqrt_d));
  const std::size_t rows = g.n_axis.size(), cols = g.mu_axis.size();
  g.error01_mean = Matrix(rows, cols);
  g.error01_std = Matrix(rows, cols);
  g.test_loss_mean = Matrix(rows, cols);
  g.test_loss_std = Matrix(rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      // cell index in manifest axis order; inner four axes are singletons
      const std::size_t cell = n_ord[i] * m.mu_values.size() + mu_ord[j];
      const CellResult& c = r.cells[cell];
      g.error01_mean(i, j) = c.error01_mean;
      g.error01_std(i, j) = c.error01_std;
      g.test_loss_mean(i, j) = c.test_loss_mean;
      g.test_loss_std(i, j) = c.test_loss_std;
    }
  }
  return g;
}

PhaseGrid phase_grid_from_cells_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) fail("cells csv: empty input");
  std::vector<std::string> cols;
  {
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) cols.push_back(tok);
  }
  auto col = [&](const std::string& name) {
    const auto it = std::find(cols.begin(), cols.end(), name);
    if (it == cols.end()) fail("cells csv: missing column " + name);
    return static_cast<std::size_t>(it - cols.begin());
  };
  const std::size_t c_n = col("n"), c_mu = col("mu_norm"), c_sp = col("sigma_p"),
                    c_al = col("alpha"), c_eta = col("eta"), c_sv = col("sigma_v"),
                    c_d = col("d"), c_em = col("error01_mean"), c_es = col("error01_std"),
                    c_tm = col("test_loss_mean"), c_ts = col("test_loss_std");
  struct Row {
    std::size_t n;
    double mu, em, es, tm, ts;
  };
  std::vector<Row> rows;
  double sp = 0, al = 0, eta = 0, sv = 0;
  std::size_t d = 0;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) f.push_back(tok);
    if (f.size() < cols.size()) fail("cells csv: short row");
    const double row_sp = std::stod(f[c_sp]), row_al = std::stod(f[c_al]),
                 row_eta = std::stod(f[c_eta]), row_sv = std::stod(f[c_sv]);
    const std::size_t row_d = std::stoul(f[c_d]);
    if (first) {
      sp = row_sp;
      al = row_al;
      eta = row_eta;
      sv = row_sv;
      d = row_d;
      first = false;
    } else if (row_sp != sp || row_al != al || row_eta != eta || row_sv != sv ||
               row_d != d) {
      fail("cells csv: multiple (sigma_p, alpha, eta, sigma_v, d) slices");
    }
    rows.push_back(Row{std::stoul(f[c_n]), std::stod(f[c_mu]), std::stod(f[c_em]),
                       std::stod(f[c_es]), std::stod(f[c_tm]), std::stod(f[c_ts])});
  }
  if (rows.empty()) fail("cells csv: no data rows");
  std::vector<std::size_t> n_axis;
  std::vector<double> mu_axis;
  for (const Row& r : rows) {
    if (std::find(n_axis.begin(), n_axis.end(), r.n) == n_axis.end())
      n_axis.push_back(r.n);
    if (std::find(mu_axis.begin(), mu_axis.end(), r.mu) == mu_axis.end())
      mu_axis.push_back(r.mu);
  }
  std::sort(n_axis.begin(), n_axis.end());
  std::sort(mu_axis.begin(), mu_axis.end());
  if (rows.size() != n_axis.size() * mu_axis.size())
    fail("cells csv: grid is not a full (n, mu) product");
  PhaseGrid g;
  g.n_axis = n_axis;
  g.mu_axis = mu_axis;
  g.sigma_p = sp;
  g.alpha = al;
  g.eta = eta;
  g.sigma_v = sv;
  g.d = d;
  const double sqrt_d = std::sqrt(static_cast<double>(d));
  for (double mu : mu_axis) g.snr_axis.push_back(mu / (sp * sqrt_d));
  const std::size_t nr = n_axis.size(), nc = mu_axis.size();
  g.error01_mean = Matrix(nr, nc);
  g.error01_std = Matrix(nr, nc);
  g.test_loss_mean = Matrix(nr, nc);
  g.test_loss_std = Matrix(nr, nc);
  Matrix seen(nr, nc);
  for (const Row& r : rows) {
    const std::size_t i =
        std::find(n_axis.begin(), n_axis.end(), r.n) - n_axis.begin();
    const std::size_t j =
        std::find(mu_axis.begin(), mu_axis.end(), r.mu) - mu_axis.begin();
    if (seen(i, j) != 0.0) fail("cells csv: duplicate (n, mu) cell");
    seen(i, j) = 1.0;
    g.error01_mean(i, j) = r.em;
    g.error01_std(i, j) = r.es;
    g.test_loss_mean(i, j) = r.tm;
    g.test_loss_std(i, j) = r.ts;
  }
  return g;
}

Matrix binarize_phase(const PhaseGrid& g, double threshold) {
  if (!(threshold > 0.0)) fail("binarize threshold must be > 0");
  Matrix b(g.error01_mean.rows(), g.error01_mean.cols());
  for (std::size_t i = 0; i < b.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j)
      b(i, j) = g.error01_mean(i, j) <= g.alpha + threshold ? 1.0 : 0.0;
  return b;
}

double upward_closure_fraction(const Matrix& benign) {
  std::size_t total = 0, consistent = 0;
  for (std::size_t i = 0; i < benign.rows(); ++i) {
    for (std::size_t j = 0; j + 1 < benign.cols(); ++j) {
      ++total;
      if (!(benign(i, j) == 1.0 && benign(i, j + 1) == 0.0)) ++consistent;
    }
  }
  for (std::size_t j = 0; j < benign.cols(); ++j) {
    for (std::size_t i = 0; i + 1 < benign.rows(); ++i) {
      ++total;
      if (!(benign(i, j) == 1.0 && benign(i + 1, j) == 0.0)) ++consistent;
    }
  }
  if (total == 0) fail("upward_closure_fraction needs a grid with adjacent cells");
  return static_cast<double>(consistent) / static_cast<double>(total);
}

CriticalFit fit_critical_line(const PhaseGrid& g, double threshold) {
  if (!(threshold > 0.0)) fail("fit threshold must be > 0");
  if (g.snr_axis.size() < 2) fail("fit needs >= 2 snr columns");
  const double level = g.alpha + threshold;
  CriticalFit fit;
  fit.threshold = threshold;
  std::vector<double> logs;
  for (std::size_t i = 0; i < g.n_axis.size(); ++i) {
    for (std::size_t j = 0; j + 1 < g.snr_axis.size(); ++j) {
      const double e0 = g.error01_mean(i, j), e1 = g.error01_mean(i, j + 1);
      if (!std::isfinite(e0) || !std::isfinite(e1)) continue;
      if (e0 > level && e1 <= level) {
        const double x0 = std::log(g.snr_axis[j]), x1 = std::log(g.snr_axis[j + 1]);
        const double t = (e0 - level) / (e0 - e1);
        const double snr_b = std::exp(x0 + t * (x1 - x0));
        fit.boundary_n.push_back(g.n_axis[i]);
        fit.boundary_snr.push_back(snr_b);
        logs.push_back(std::log(static_cast<double>(g.n_axis[i]) * snr_b * snr_b));
        break;
      }
    }
  }
  if (logs.empty())
    throw std::runtime_error(
        "experiments: no boundary: grid does not contain both phases along any row");
  const double mean = std::accumulate(logs.begin(), logs.end(), 0.0) /
                      static_cast<double>(logs.size());
  double var = 0.0;
  for (double v : logs) var += (v - mean) * (v - mean);
  var /= static_cast<double>(logs.size());
  fit.c_hat = std::exp(mean);
  fit.residual = std::sqrt(var);
  return fit;
}

std::string critical_json(const CriticalFit& f) {
  nlohmann::json j;
  j["c_hat"] = f.c_hat;
  j["residual"] = f.residual;
  j["threshold"] = f.threshold;
  j["rows"] = nlohmann::json::array();
  for (std::size_t i = 0; i < f.boundary_n.size(); ++i)
    j["rows"].push_back({{"n", f.boundary_n[i]}, {"snr_boundary", f.boundary_snr[i]}});
  return j.dump(2) + "\n";
}

double heatmap_similarity(const PhaseGrid& a, const PhaseGrid& b) {
  if (a.n_axis != b.n_axis || a.mu_axis != b.mu_axis)
    fail("heatmap_similarity: grids have different axes");
  const std::size_t n = a.error01_mean.flat().size();
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(a.error01_mean.flat()[i]) ||
        !std::isfinite(b.error01_mean.flat()[i]))
      fail("heatmap_similarity: non-finite cell mean");
    ma += a.error01_mean.flat()[i];
    mb += b.error01_mean.flat()[i];
  }
  ma /= static_cast<double>(n);
  mb /= static_cast<double>(n);
  double saa = 0.0, sbb = 0.0, sab = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double da = a.error01_mean.flat()[i] - ma;
    const double db = b.error01_mean.flat()[i] - mb;
    saa += da * da;
    sbb += db * db;
    sab += da * db;
  }
  if (saa == 0.0 || sbb == 0.0) fail("heatmap_similarity: zero-variance grid");
  return sab / std::sqrt(saa * sbb);
}

std::string heatmap_svg(const PhaseGrid& g) {
  const std::size_t rows = g.n_axis.size(), cols = g.mu_axis.size();
  if (rows == 0 || cols == 0) fail("heatmap_svg: empty grid");
  constexpr int cell = 28, ml = 64, mt = 36, mb = 56, mr = 16;
  const int w = ml + mr + cell * static_cast<int>(cols);
  const int h = mt + mb + cell * static_cast<int>(rows);
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (double v : g.error01_mean.flat())
    if (std::isfinite(v)) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  if (!(hi > lo)) hi = lo + 1.0;
  std::string s;
  char buf[256];
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(w) +
       "\" height=\"" + std::to_string(h) + "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  std::snprintf(buf, sizeof buf,
                "<title>error01 mean; alpha=%g; linear color ramp blue(%.3g) to "
                "red(%.3g); gray = no data</title>\n",
                g.alpha, lo, hi);
  s += buf;
  // color scale: linear in value, blue #2166ac at lo to red #b2182b at hi
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      const double v = g.error01_mean(i, j);
      std::string fill = "#bbbbbb";
      if (std::isfinite(v)) {
        const double t = (v - lo) / (hi - lo);
        const int r = static_cast<int>(0x21 + t * (0xb2 - 0x21));
        const int gg = static_cast<int>(0x66 + t * (0x18 - 0x66));
        const int bb = static_cast<int>(0xac + t * (0x2b - 0xac));
        std::snprintf(buf, sizeof buf, "#%02x%02x%02x", r, gg, bb);
        fill = buf;
      }
      // row 0 (smallest n) at the bottom
      const int x = ml + static_cast<int>(j) * cell;
      const int y = mt + static_cast<int>(rows - 1 - i) * cell;
      std::snprintf(buf, sizeof buf,
                    "<rect x=\"%d\" y=\"%d\" width=\"%d\" height=\"%d\" fill=\"%s\"/>\n",
                    x, y, cell, cell, fill.c_str());
      s += buf;
    }
  }
  for (std::size_t i = 0; i < rows; ++i) {
    const int y = mt + static_cast<int>(rows - 1 - i) * cell + cell / 2 + 4;
    std::snprintf(buf, sizeof buf,
                  "<text x=\"%d\" y=\"%d\" text-anchor=\"end\">%zu</text>\n", ml - 6, y,
                  g.n_axis[i]);
    s += buf;
  }
  for (std::size_t j = 0; j < cols; ++j) {
    const int x = ml + static_cast<int>(j) * cell + cell / 2;
    const int y = mt + static_cast<int>(rows) * cell + 14;
    std::snprintf(buf, sizeof buf,
                  "<text x=\"%d\" y=\"%d\" text-anchor=\"middle\">%.3g</text>\n", x, y,
                  g.snr_axis[j]);
    s += buf;
  }
  std::snprintf(buf, sizeof buf,
                "<text x=\"%d\" y=\"%d\" text-anchor=\"middle\">snr</text>\n",
                ml + cell * static_cast<int>(cols) / 2,
                mt + cell * static_cast<int>(rows) + 34);
  s += buf;
  std::snprintf(buf, sizeof buf,
                "<text x=\"14\" y=\"%d\" transform=\"rotate(-90 14 %d)\" "
                "text-anchor=\"middle\">n</text>\n",
                mt + cell * static_cast<int>(rows) / 2, mt + cell * static_cast<int>(rows) / 2);
  s += buf;
  std::snprintf(buf, sizeof buf,
                "<text x=\"%d\" y=\"20\">error01 mean, alpha=%g</text>\n", ml, g.alpha);
  s += buf;
  s += "</svg>\n";
  return s;
}

std::vector<CurvePoint> curve_from(const SweepResult& r) {
  const SweepManifest& m = r.manifest;
  struct Axis {
    const char* name;
    std::size_t size;
  };
  const Axis axes[] = {{"n", m.n_values.size()},         {"mu", m.mu_values.size()},
                       {"sigma_p", m.sigma_p_values.size()}, {"alpha", m.alpha_values.size()},
                       {"eta", m.eta_values.size()},     {"sigma_v", m.sigma_v_values.size()}};
  int varying = -1;
  for (int a = 0; a < 6; ++a) {
    if (axes[a].size > 1) {
      if (varying >= 0) fail("curve_from: more than one axis varies");
      varying = a;
    }
  }
  if (varying < 0) fail("curve_from: no axis varies");
  std::vector<CurvePoint> curve;
  for (const CellResult& c : r.cells) {
    CurvePoint p;
    switch (varying) {
      case 0: p.value = static_cast<double>(c.coords.n); break;
      case 1: p.value = c.coords.mu_norm; break;
      case 2: p.value = c.coords.sigma_p; break;
      case 3: p.value = c.coords.alpha; break;
      case 4: p.value = c.coords.eta; break;
      default: p.value = c.coords.sigma_v; break;
    }
    p.test_loss_mean = c.test_loss_mean;
    p.test_loss_std = c.test_loss_std;
    p.error01_mean = c.error01_mean;
    p.train_loss_mean = c.train_loss_mean;
    curve.push_back(p);
  }
  return curve;
}

std::vector<CurvePoint> single_variable_sweep(const SweepManifest& m) {
  return curve_from(run_sweep(m));
}

}  // namespace attnlab
