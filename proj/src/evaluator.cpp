#include "attnlab/evaluator.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "attnlab/trainer.hpp"

namespace attnlab {

namespace {

void fail(const std::string& what) { throw std::invalid_argument("evaluator: " + what); }

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// out(i, :) = w x_i for i < cnt. Streams w once per block; the x block stays
// cache-resident across the row sweep.
void project_block(const Matrix& w, const std::vector<Vec>& xs, std::size_t cnt,
                   Matrix& out) {
  for (std::size_t r = 0; r < w.rows(); ++r) {
    const std::span<const double> wr = w.row(r);
    for (std::size_t i = 0; i < cnt; ++i) out(i, r) = dot(wr, xs[i]);
  }
}

struct McSums {
  std::size_t n = 0;
  double loss_sum = 0.0, loss_sq = 0.0;
  std::size_t err01 = 0, err01_clean = 0;
  // strata by flip flag
  std::size_t n_flipped = 0;
  double flip_loss_sum = 0.0, flip_loss_sq = 0.0;
  double keep_loss_sum = 0.0, keep_loss_sq = 0.0;
};

// One pass of fresh draws. Per-draw stream order matches sample_dataset
// exactly: one u64 for the true label, one uniform for the flip, d gaussians
// for the noise token.
McSums mc_pass(const ModelParams& p, const DataConfig& cfg, const SignalPair& signals,
               std::size_t n_mc, RngStream& rng) {
  validate(cfg);
  if (n_mc == 0) fail("n_mc must be >= 1");
  if (p.w_q.cols() != cfg.d) fail("model d does not match data config d");
  if (signals.mu_plus.size() != cfg.d) fail("signal dimension mismatch");
  const std::size_t m_v = p.w_v.rows();
  const double inv_mv = 1.0 / static_cast<double>(m_v);
  // Class-side hoists: the signal token is one of two vectors.
  const Vec q_cls[2] = {matvec(p.w_q, signals.mu_plus), matvec(p.w_q, signals.mu_minus)};
  const Vec k_cls[2] = {matvec(p.w_k, signals.mu_plus), matvec(p.w_k, signals.mu_minus)};
  const Vec w_ups = matvec_t(p.w_v, p.upsilon);  // length d: v_x = <w_ups, x>
  const double a11_cls[2] = {dot(q_cls[0], k_cls[0]), dot(q_cls[1], k_cls[1])};
  const double v_cls[2] = {dot(w_ups, signals.mu_plus), dot(w_ups, signals.mu_minus)};

  constexpr std::size_t kBlock = 8;
  std::vector<Vec> xi(kBlock, Vec(cfg.d));
  int y_true[kBlock], y_obs[kBlock];
  Matrix qb(kBlock, p.w_q.rows()), kb(kBlock, p.w_k.rows());
  McSums s;
  for (std::size_t done = 0; done < n_mc; done += kBlock) {
    const std::size_t cnt = std::min(kBlock, n_mc - done);
    for (std::size_t i = 0; i < cnt; ++i) {
      y_true[i] = (rng.next_u64() & 1u) ? 1 : -1;
      const bool flip = rng.next_uniform() < cfg.alpha;
      y_obs[i] = flip ? -y_true[i] : y_true[i];
      for (std::size_t j = 0; j < cfg.d; ++j)
        xi[i][j] = cfg.sigma_p * rng.next_gaussian();
    }
    project_block(p.w_q, xi, cnt, qb);
    project_block(p.w_k, xi, cnt, kb);
    for (std::size_t i = 0; i < cnt; ++i) {
      const std::size_t c = y_true[i] > 0 ? 0 : 1;
      const double a12 = dot(q_cls[c], kb.row(i));
      const double a21 = dot(qb.row(i), k_cls[c]);
      const double a22 = dot(qb.row(i), kb.row(i));
      const double s11 = sigmoid(a11_cls[c] - a12);
      const double s21 = sigmoid(a21 - a22);
      const double c1 = s11 + s21;
      const double v_xi = dot(w_ups, xi[i]);
      const double f = (c1 * v_cls[c] + (2.0 - c1) * v_xi) * inv_mv;
      const double l = logistic_loss(y_obs[i] * f);
      s.loss_sum += l;
      s.loss_sq += l * l;
      const int pred = f >= 0.0 ? 1 : -1;  // sign(0) = +1
      if (pred != y_obs[i]) ++s.err01;
      if (y_true[i] * f <= 0.0) ++s.err01_clean;
      if (y_obs[i] != y_true[i]) {
        ++s.n_flipped;
        s.flip_loss_sum += l;
        s.flip_loss_sq += l * l;
      } else {
        s.keep_loss_sum += l;
        s.keep_loss_sq += l * l;
      }
    }
  }
  s.n = n_mc;
  return s;
}

double mean_std_err(double sum, double sq, std::size_t n) {
  if (n < 2) return 0.0;
  const double nn = static_cast<double>(n);
  const double var = std::max(0.0, (sq - sum * sum / nn) / (nn - 1.0));
  return std::sqrt(var / nn);
}

}  // namespace

TestEstimate estimate_test(const ModelParams& p, const DataConfig& cfg,
                           const SignalPair& signals, std::size_t n_mc, RngStream rng) {
  const McSums s = mc_pass(p, cfg, signals, n_mc, rng);
  TestEstimate est;
  est.n_mc = s.n;
  const double nn = static_cast<double>(s.n);
  est.loss = s.loss_sum / nn;
  est.error01 = static_cast<double>(s.err01) / nn;
  est.error01_clean = static_cast<double>(s.err01_clean) / nn;
  est.std_err = std::sqrt(est.error01 * (1.0 - est.error01) / nn);
  est.loss_std_err = mean_std_err(s.loss_sum, s.loss_sq, s.n);
  return est;
}

SplitLoss split_test_loss(const ModelParams& p, const DataConfig& cfg,
                          const SignalPair& signals, std::size_t n_mc, RngStream rng) {
  const McSums s = mc_pass(p, cfg, signals, n_mc, rng);
  SplitLoss out;
  out.n_flipped = s.n_flipped;
  out.n_unflipped = s.n - s.n_flipped;
  if (out.n_unflipped > 0) {
    out.unflipped_part = s.keep_loss_sum / static_cast<double>(out.n_unflipped);
    out.unflipped_std_err = mean_std_err(s.keep_loss_sum, s.keep_loss_sq, out.n_unflipped);
  }
  if (out.n_flipped > 0) {
    out.flipped_part = s.flip_loss_sum / static_cast<double>(out.n_flipped);
    out.flipped_std_err = mean_std_err(s.flip_loss_sum, s.flip_loss_sq, out.n_flipped);
  }
  out.total = s.loss_sum / static_cast<double>(s.n);
  out.total_std_err = mean_std_err(s.loss_sum, s.loss_sq, s.n);
  return out;
}

double harmful_lower_bound(double alpha) {
  if (!(alpha >= 0.0 && alpha <= 0.5)) fail("harmful_lower_bound needs alpha in [0, 1/2]");
  const double r = std::exp(0.5);
  const double clean_term = std::log((1.0 + 2.0 * r) / (1.0 + r));
  const double flip_term = std::log(2.0 + 1.0 / r);
  return (1.0 - alpha) * clean_term + alpha * flip_term;
}

RhoCoefficients rho_coefficients(const ModelParams& params_t, const ModelParams& params_0,
                                 const SignalPair& signals, const Dataset& ds) {
  if (!params_t.w_v.same_shape(params_0.w_v) ||
      params_t.upsilon.size() != params_0.upsilon.size())
    fail("rho_coefficients: parameter shapes differ");
  if (params_t.upsilon != params_0.upsilon)
    fail("rho_coefficients: upsilon moved between snapshots");
  const double denom = dot(params_t.upsilon, params_t.upsilon);
  if (denom == 0.0) fail("rho_coefficients: zero upsilon");
  if (params_t.w_v.cols() != ds.config.d) fail("rho_coefficients: dimension mismatch");
  Vec diff = matvec_t(params_t.w_v, params_t.upsilon);
  const Vec base = matvec_t(params_0.w_v, params_0.upsilon);
  for (std::size_t j = 0; j < diff.size(); ++j) diff[j] -= base[j];
  RhoCoefficients out;
  out.rho_plus = dot(diff, signals.mu_plus) / denom;
  out.rho_minus = dot(diff, signals.mu_minus) / denom;
  out.rho_xi.reserve(ds.size());
  for (const auto& pt : ds.points) out.rho_xi.push_back(dot(diff, pt.x2) / denom);
  return out;
}

}  // namespace attnlab
