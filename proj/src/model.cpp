#include "attnlab/model.hpp"

#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>

namespace attnlab {

namespace {

void fail(const char* what) { throw std::invalid_argument(std::string("model: ") + what); }

// Overflow-safe logistic; equals the 2-entry max-subtracted softmax.
double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

void validate(const ModelConfig& cfg) {
  if (cfg.d < 1 || cfg.m_k < 1 || cfg.m_v < 1) fail("dims must be >= 1");
  if (!(cfg.sigma_k >= 0.0) || !(cfg.sigma_v >= 0.0)) fail("init scales must be >= 0");
  if (!(cfg.upsilon_norm > 0.0)) fail("upsilon_norm must be > 0");
}

ModelParams init_params(const ModelConfig& cfg, RngStream& rng) {
  validate(cfg);
  ModelParams p;
  p.w_q = gaussian_matrix(cfg.m_k, cfg.d, cfg.sigma_k, rng);
  p.w_k = gaussian_matrix(cfg.m_k, cfg.d, cfg.sigma_k, rng);
  p.w_v = gaussian_matrix(cfg.m_v, cfg.d, cfg.sigma_v, rng);
  p.upsilon = gaussian_vec(cfg.m_v, 1.0, rng);
  const double norm = nrm2(p.upsilon);
  if (norm == 0.0) fail("degenerate upsilon draw");
  scal(cfg.upsilon_norm / norm, p.upsilon);
  return p;
}

ForwardTrace forward(const ModelParams& p, std::span<const double> x1,
                     std::span<const double> x2) {
  if (x1.size() != p.w_q.cols() || x2.size() != p.w_q.cols())
    fail("token dimension does not match params");
  ForwardTrace t;
  t.q1 = matvec(p.w_q, x1);
  t.q2 = matvec(p.w_q, x2);
  t.k1 = matvec(p.w_k, x1);
  t.k2 = matvec(p.w_k, x2);
  t.lambda_sig = dot(t.q1, t.k1) - dot(t.q1, t.k2);
  t.lambda_noise = dot(t.q2, t.k1) - dot(t.q2, t.k2);
  t.s11 = sigmoid(t.lambda_sig);
  t.s12 = 1.0 - t.s11;
  t.s21 = sigmoid(t.lambda_noise);
  t.s22 = 1.0 - t.s21;
  t.v_sig = dot(matvec(p.w_v, x1), p.upsilon);
  t.v_noise = dot(matvec(p.w_v, x2), p.upsilon);
  t.f = ((t.s11 + t.s21) * t.v_sig + (t.s12 + t.s22) * t.v_noise) /
        static_cast<double>(p.upsilon.size());
  return t;
}

ForwardTrace forward(const ModelParams& p, const DataPoint& point) {
  return forward(p, point.x1, point.x2);
}

double predict(const ModelParams& p, std::span<const double> x1,
               std::span<const double> x2) {
  return forward(p, x1, x2).f;
}

std::vector<ForwardTrace> forward_all(const ModelParams& p, const Dataset& ds) {
  std::vector<ForwardTrace> traces;
  traces.reserve(ds.size());
  for (const auto& point : ds.points) traces.push_back(forward(p, point));
  return traces;
}

AttentionSummary attention_summary(std::span<const ForwardTrace> traces) {
  if (traces.empty()) fail("attention_summary of empty trace list");
  double sig = 0.0;
  for (const auto& t : traces) sig += (t.s11 + t.s21) / 2.0;
  sig /= static_cast<double>(traces.size());
  return {sig, 1.0 - sig};
}

AttentionSummary attention_summary(const ModelParams& p, const Dataset& ds) {
  if (ds.size() == 0) fail("attention_summary of empty dataset");
  double sig = 0.0;
  for (const auto& point : ds.points) {
    const ForwardTrace t = forward(p, point);
    sig += (t.s11 + t.s21) / 2.0;
  }
  sig /= static_cast<double>(ds.size());
  return {sig, 1.0 - sig};
}

double value_readout(const ModelParams& p, std::span<const double> x) {
  return dot(matvec(p.w_v, x), p.upsilon);
}

ValueSummary value_summary(const ModelParams& p, const SignalPair& signals,
                           const Dataset& ds) {
  // V(x) = <w, x> with w = W_V^T upsilon hoisted out of the loop.
  const Vec w = matvec_t(p.w_v, p.upsilon);
  ValueSummary s;
  s.v_plus = dot(std::span<const double>(w), std::span<const double>(signals.mu_plus));
  s.v_minus = dot(std::span<const double>(w), std::span<const double>(signals.mu_minus));
  s.v_xi_mean = 0.0;
  for (const auto& point : ds.points)
    s.v_xi_mean += dot(std::span<const double>(w), std::span<const double>(point.x2));
  s.v_xi_mean /= static_cast<double>(ds.size());
  return s;
}

namespace {

constexpr char MAGIC[8] = {'A', 'T', 'N', 'L', 'P', '1', '\n', '\0'};

void write_u64(std::ostream& out, std::uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::uint64_t read_u64(std::istream& in) {
  std::uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}

void write_doubles(std::ostream& out, std::span<const double> v) {
  out.write(reinterpret_cast<const char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(double)));
}

void read_doubles(std::istream& in, std::span<double> v) {
  in.read(reinterpret_cast<char*>(v.data()),
          static_cast<std::streamsize>(v.size() * sizeof(double)));
}

}  // namespace

void save_params(const ModelParams& p, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_params: cannot open " + path);
  out.write(MAGIC, sizeof MAGIC);
  write_u64(out, p.w_q.rows());
  write_u64(out, p.w_q.cols());
  write_u64(out, p.w_v.rows());
  write_doubles(out, p.w_q.flat());
  write_doubles(out, p.w_k.flat());
  write_doubles(out, p.w_v.flat());
  write_doubles(out, p.upsilon);
  if (!out) throw std::runtime_error("save_params: write failed for " + path);
}

ModelParams load_params(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_params: cannot open " + path);
  char magic[sizeof MAGIC];
  in.read(magic, sizeof magic);
  if (!in || std::string(magic, sizeof magic) != std::string(MAGIC, sizeof MAGIC))
    throw std::runtime_error("load_params: bad magic in " + path);
  const std::size_t m_k = read_u64(in);
  const std::size_t d = read_u64(in);
  const std::size_t m_v = read_u64(in);
  ModelParams p;
  p.w_q = Matrix(m_k, d);
  p.w_k = Matrix(m_k, d);
  p.w_v = Matrix(m_v, d);
  p.upsilon.resize(m_v);
  read_doubles(in, p.w_q.flat());
  read_doubles(in, p.w_k.flat());
  read_doubles(in, p.w_v.flat());
  read_doubles(in, p.upsilon);
  if (!in) throw std::runtime_error("load_params: truncated file " + path);
  return p;
}

}  // namespace attnlab
