#include "attnlab/data.hpp"

#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace attnlab {

namespace {

void fail(const std::string& what) { throw std::invalid_argument("data: " + what); }

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void index_points(Dataset& ds) {
  ds.s_plus.clear();
  ds.s_minus.clear();
  for (std::size_t i = 0; i < ds.points.size(); ++i)
    (ds.points[i].y_obs > 0 ? ds.s_plus : ds.s_minus).push_back(i);
}

}  // namespace

void validate(const DataConfig& cfg) {
  if (cfg.d < 2) fail("d must be >= 2");
  if (!(cfg.mu_norm >= 0.0) || !std::isfinite(cfg.mu_norm)) fail("mu_norm must be >= 0");
  if (!(cfg.sigma_p >= 0.0) || !std::isfinite(cfg.sigma_p)) fail("sigma_p must be >= 0");
  if (!(cfg.alpha >= 0.0 && cfg.alpha < 0.5)) fail("alpha must be in [0, 0.5)");
  if (cfg.n < 1) fail("n must be >= 1");
}

double snr(const DataConfig& cfg) {
  validate(cfg);
  if (cfg.sigma_p == 0.0) fail("snr undefined at sigma_p = 0");
  return cfg.mu_norm / (cfg.sigma_p * std::sqrt(static_cast<double>(cfg.d)));
}

SignalPair make_signals(const DataConfig& cfg) {
  validate(cfg);
  SignalPair s{Vec(cfg.d, 0.0), Vec(cfg.d, 0.0)};
  s.mu_plus[0] = cfg.mu_norm;
  s.mu_minus[1] = cfg.mu_norm;
  return s;
}

SignalPair random_orthogonal_signals(const DataConfig& cfg, RngStream& rng) {
  validate(cfg);
  Vec a = gaussian_vec(cfg.d, 1.0, rng);
  Vec b = gaussian_vec(cfg.d, 1.0, rng);
  axpy(-dot(a, b) / dot(a, a), a, b);  // project a out of b
  scal(cfg.mu_norm / nrm2(a), a);
  scal(cfg.mu_norm / nrm2(b), b);
  return {std::move(a), std::move(b)};
}

Dataset sample_dataset(const DataConfig& cfg, const SignalPair& signals, RngStream& rng) {
  validate(cfg);
  if (signals.mu_plus.size() != cfg.d || signals.mu_minus.size() != cfg.d)
    fail("signal dimension does not match config");
  Dataset ds{cfg, signals, {}, {}, {}};
  ds.points.reserve(cfg.n);
  for (std::size_t i = 0; i < cfg.n; ++i) {
    DataPoint p;
    p.y_true = (rng.next_u64() & 1) ? 1 : -1;
    const bool flip = rng.next_uniform() < cfg.alpha;  // uniform drawn even at alpha = 0
    p.y_obs = flip ? -p.y_true : p.y_true;
    p.x1 = p.y_true > 0 ? signals.mu_plus : signals.mu_minus;
    p.x2 = gaussian_vec(cfg.d, cfg.sigma_p, rng);
    ds.points.push_back(std::move(p));
  }
  index_points(ds);
  return ds;
}

Dataset sample_dataset(const DataConfig& cfg, RngStream& rng) {
  return sample_dataset(cfg, make_signals(cfg), rng);
}

std::size_t Dataset::count_flipped() const {
  std::size_t k = 0;
  for (const auto& p : points) k += p.flipped();
  return k;
}

void write_dataset_csv(const Dataset& ds, std::ostream& out) {
  const auto& c = ds.config;
  out << "# attnlab dataset v1\n";
  out << "# d=" << c.d << " mu_norm=" << fmt(c.mu_norm) << " sigma_p=" << fmt(c.sigma_p)
      << " alpha=" << fmt(c.alpha) << " n=" << c.n << "\n";
  auto vec_line = [&](const char* name, const Vec& v) {
    out << "# " << name << "=";
    for (std::size_t i = 0; i < v.size(); ++i) out << (i ? "," : "") << fmt(v[i]);
    out << "\n";
  };
  vec_line("mu_plus", ds.signals.mu_plus);
  vec_line("mu_minus", ds.signals.mu_minus);
  out << "y_true,y_obs";
  for (std::size_t j = 0; j < c.d; ++j) out << ",x1_" << j;
  for (std::size_t j = 0; j < c.d; ++j) out << ",x2_" << j;
  out << "\n";
  for (const auto& p : ds.points) {
    out << p.y_true << "," << p.y_obs;
    for (double v : p.x1) out << "," << fmt(v);
    for (double v : p.x2) out << "," << fmt(v);
    out << "\n";
  }
}

namespace {

Vec parse_vec_line(const std::string& line, const std::string& name, std::size_t d) {
  const std::string prefix = "# " + name + "=";
  if (line.rfind(prefix, 0) != 0) fail("expected " + name + " line");
  Vec v;
  v.reserve(d);
  std::stringstream ss(line.substr(prefix.size()));
  std::string tok;
  while (std::getline(ss, tok, ',')) v.push_back(std::stod(tok));
  if (v.size() != d) fail(name + " has wrong length");
  return v;
}

}  // namespace

Dataset read_dataset_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "# attnlab dataset v1") fail("bad header");
  if (!std::getline(in, line)) fail("missing config line");
  DataConfig cfg;
  if (std::sscanf(line.c_str(), "# d=%zu mu_norm=%lf sigma_p=%lf alpha=%lf n=%zu", &cfg.d,
                  &cfg.mu_norm, &cfg.sigma_p, &cfg.alpha, &cfg.n) != 5)
    fail("bad config line");
  SignalPair sig;
  if (!std::getline(in, line)) fail("missing mu_plus");
  sig.mu_plus = parse_vec_line(line, "mu_plus", cfg.d);
  if (!std::getline(in, line)) fail("missing mu_minus");
  sig.mu_minus = parse_vec_line(line, "mu_minus", cfg.d);
  if (!std::getline(in, line)) fail("missing column header");
  Dataset ds{cfg, std::move(sig), {}, {}, {}};
  ds.points.reserve(cfg.n);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    DataPoint p;
    std::stringstream ss(line);
    std::string tok;
    if (!std::getline(ss, tok, ',')) fail("bad row");
    p.y_true = std::stoi(tok);
    if (!std::getline(ss, tok, ',')) fail("bad row");
    p.y_obs = std::stoi(tok);
    Vec vals;
    vals.reserve(2 * cfg.d);
    while (std::getline(ss, tok, ',')) vals.push_back(std::stod(tok));
    if (vals.size() != 2 * cfg.d) fail("row has wrong dimension");
    p.x1.assign(vals.begin(), vals.begin() + static_cast<std::ptrdiff_t>(cfg.d));
    p.x2.assign(vals.begin() + static_cast<std::ptrdiff_t>(cfg.d), vals.end());
    if (std::abs(p.y_true) != 1 || std::abs(p.y_obs) != 1) fail("labels must be +1/-1");
    ds.points.push_back(std::move(p));
  }
  if (ds.points.size() != cfg.n) fail("row count does not match n");
  index_points(ds);
  return ds;
}

}  // namespace attnlab
