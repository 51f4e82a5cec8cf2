#include "attnlab/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <string>
#include <utility>

#include "attnlab/evaluator.hpp"

namespace attnlab {

namespace {

void fail(const std::string& what) { throw std::invalid_argument("trainer: " + what); }

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// dest += g * a, with a's column blocks kept hot across the row loop. dest and
// a are (P x m), g is (P x P); the straightforward loop order would stream all
// of a once per dest row.
void add_matmul_tiled(Matrix& dest, const Matrix& g, const Matrix& a) {
  const std::size_t p = g.rows(), m = a.cols();
  constexpr std::size_t kBlock = 256;
  for (std::size_t j0 = 0; j0 < m; j0 += kBlock) {
    const std::size_t j1 = std::min(m, j0 + kBlock);
    for (std::size_t i = 0; i < p; ++i) {
      double* drow = dest.row(i).data();
      for (std::size_t k = 0; k < p; ++k) {
        const double gik = g(i, k);
        if (gik == 0.0) continue;
        const double* arow = a.row(k).data();
        for (std::size_t j = j0; j < j1; ++j) drow[j] += gik * arow[j];
      }
    }
  }
}

}  // namespace

void validate(const TrainConfig& cfg) {
  // eta = 0 is a legal degenerate run (frozen params, cap-reached), used by
  // the flat-curve and no-op contracts.
  if (!(cfg.eta >= 0.0) || !std::isfinite(cfg.eta)) fail("eta must be >= 0");
  if (!(cfg.target_loss > 0.0)) fail("target_loss must be > 0");
  if (!(cfg.divergence_loss > 0.0)) fail("divergence_loss must be > 0");
}

double logistic_loss(double z) {
  if (z >= 0.0) return std::log1p(std::exp(-z));
  return -z + std::log1p(std::exp(z));
}

double train_loss(const ModelParams& p, const Dataset& ds) {
  if (ds.size() == 0) fail("train_loss of empty dataset");
  double total = 0.0;
  for (const auto& point : ds.points)
    total += logistic_loss(point.y_obs * predict(p, point.x1, point.x2));
  return total / static_cast<double>(ds.size());
}

Gradients analytic_gradients(const ModelParams& p, const Dataset& ds) {
  if (ds.size() == 0) fail("analytic_gradients of empty dataset");
  const std::size_t m_v = p.w_v.rows();
  const double inv_mv = 1.0 / static_cast<double>(m_v);
  const double inv_n = 1.0 / static_cast<double>(ds.size());
  Gradients g{Matrix(p.w_q.rows(), p.w_q.cols()), Matrix(p.w_k.rows(), p.w_k.cols()),
              Matrix(p.w_v.rows(), p.w_v.cols()), Vec(m_v, 0.0)};
  Vec u(p.w_q.rows());
  Vec kd(p.w_k.rows());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& pt = ds.points[i];
    const Vec q1 = matvec(p.w_q, pt.x1);
    const Vec q2 = matvec(p.w_q, pt.x2);
    const Vec k1 = matvec(p.w_k, pt.x1);
    const Vec k2 = matvec(p.w_k, pt.x2);
    const Vec wv_x1 = matvec(p.w_v, pt.x1);
    const Vec wv_x2 = matvec(p.w_v, pt.x2);
    const double s11 = sigmoid(dot(q1, k1) - dot(q1, k2));
    const double s21 = sigmoid(dot(q2, k1) - dot(q2, k2));
    const double v1 = dot(wv_x1, p.upsilon);
    const double v2 = dot(wv_x2, p.upsilon);
    const double c1 = s11 + s21;
    const double c2 = 2.0 - c1;
    const double f = (c1 * v1 + c2 * v2) * inv_mv;
    if (!std::isfinite(f))
      throw std::runtime_error("trainer: non-finite forward value at sample " +
                               std::to_string(i));
    const double y = pt.y_obs;
    const double gc = -y * sigmoid(-y * f) * inv_n;
    // Value path: d f / d W_V = (1/m_v) upsilon (c1 x1 + c2 x2)^T, and the
    // upsilon direction picks up W_V applied to the same combination.
    add_outer(g.w_v, gc * inv_mv * c1, p.upsilon, pt.x1);
    add_outer(g.w_v, gc * inv_mv * c2, p.upsilon, pt.x2);
    axpy(gc * inv_mv * c1, wv_x1, g.upsilon);
    axpy(gc * inv_mv * c2, wv_x2, g.upsilon);
    // Attention path: each softmax row contributes through its margin only.
    const double d1 = s11 * (1.0 - s11) * (v1 - v2) * inv_mv;
    const double d2 = s21 * (1.0 - s21) * (v1 - v2) * inv_mv;
    for (std::size_t r = 0; r < kd.size(); ++r) kd[r] = k1[r] - k2[r];
    add_outer(g.w_q, gc * d1, kd, pt.x1);
    add_outer(g.w_q, gc * d2, kd, pt.x2);
    for (std::size_t r = 0; r < u.size(); ++r) u[r] = d1 * q1[r] + d2 * q2[r];
    add_outer(g.w_k, gc, u, pt.x1);
    add_outer(g.w_k, -gc, u, pt.x2);
  }
  return g;
}

ModelParams gd_step(const ModelParams& p, const Dataset& ds, const TrainConfig& cfg) {
  validate(cfg);
  const Gradients g = analytic_gradients(p, ds);
  ModelParams next = p;
  axpy(-cfg.eta, g.w_q.flat(), next.w_q.flat());
  axpy(-cfg.eta, g.w_k.flat(), next.w_k.flat());
  axpy(-cfg.eta, g.w_v.flat(), next.w_v.flat());
  if (cfg.train_upsilon) axpy(-cfg.eta, g.upsilon, next.upsilon);
  return next;
}

namespace {

// Factorized trainer state. Every weight delta lies in the span of the P = n+2
// distinct tokens (mu_plus, mu_minus, xi_1..xi_n), so the iteration runs on
// (P x m) coefficient matrices against the token Gram matrix and never touches
// d until materialization. Row p of each matrix belongs to token p; sample i
// uses token sig[i] (0 or 1) and token 2+i.
class Engine {
 public:
  Engine(const ModelParams& p0, const Dataset& dataset)
      : n_(dataset.size()),
        p_(n_ + 2),
        m_k_(p0.w_q.rows()),
        m_v_(p0.w_v.rows()),
        inv_mv_(1.0 / static_cast<double>(m_v_)),
        ds_(&dataset),
        init_(&p0),
        g_(p_, p_),
        q0t_(p_, m_k_),
        k0t_(p_, m_k_),
        mv0t_(p_, m_v_),
        aq_(p_, m_k_),
        ak_(p_, m_k_),
        av_(p_, m_v_),
        qt_(p_, m_k_),
        kt_(p_, m_k_),
        ups_(p0.upsilon),
        v_(p_),
        v0_ups_(p_),
        w_av_(p_),
        sig_(n_),
        y_(n_),
        s11_(n_),
        s21_(n_),
        f_(n_),
        zeta_(p_),
        gu_(m_v_) {
    for (std::size_t a = 0; a < p_; ++a) {
      for (std::size_t b = a; b < p_; ++b) g_(a, b) = g_(b, a) = dot(token(a), token(b));
      const Vec q = matvec(p0.w_q, token(a));
      const Vec k = matvec(p0.w_k, token(a));
      const Vec mv = matvec(p0.w_v, token(a));
      std::copy(q.begin(), q.end(), q0t_.row(a).begin());
      std::copy(k.begin(), k.end(), k0t_.row(a).begin());
      std::copy(mv.begin(), mv.end(), mv0t_.row(a).begin());
    }
    for (std::size_t i = 0; i < n_; ++i) {
      sig_[i] = ds_->points[i].y_true > 0 ? 0 : 1;
      y_[i] = ds_->points[i].y_obs;
    }
  }

  std::span<const double> token(std::size_t p) const {
    if (p == 0) return ds_->signals.mu_plus;
    if (p == 1) return ds_->signals.mu_minus;
    return ds_->points[p - 2].x2;
  }

  // Rebuilds the current projections and per-sample forward statistics from
  // the coefficients. Value readouts avoid materializing the full value
  // projection matrix: v = Mv0^T ups + G (av ups).
  double refresh() {
    std::copy(q0t_.flat().begin(), q0t_.flat().end(), qt_.flat().begin());
    std::copy(k0t_.flat().begin(), k0t_.flat().end(), kt_.flat().begin());
    add_matmul_tiled(qt_, g_, aq_);
    add_matmul_tiled(kt_, g_, ak_);
    for (std::size_t p = 0; p < p_; ++p) {
      v0_ups_[p] = dot(mv0t_.row(p), ups_);
      w_av_[p] = dot(av_.row(p), ups_);
    }
    const Vec gw = matvec(g_, w_av_);
    for (std::size_t p = 0; p < p_; ++p) v_[p] = v0_ups_[p] + gw[p];
    double total = 0.0;
    for (std::size_t i = 0; i < n_; ++i) {
      const std::size_t sc = sig_[i], nc = 2 + i;
      const double a11 = dot(qt_.row(sc), kt_.row(sc));
      const double a12 = dot(qt_.row(sc), kt_.row(nc));
      const double a21 = dot(qt_.row(nc), kt_.row(sc));
      const double a22 = dot(qt_.row(nc), kt_.row(nc));
      s11_[i] = sigmoid(a11 - a12);
      s21_[i] = sigmoid(a21 - a22);
      const double c1 = s11_[i] + s21_[i];
      f_[i] = (c1 * v_[sc] + (2.0 - c1) * v_[nc]) * inv_mv_;
      total += logistic_loss(y_[i] * f_[i]);
    }
    return total / static_cast<double>(n_);
  }

  // One simultaneous GD step from the statistics of the current refresh().
  void step(double eta, bool train_upsilon) {
    std::fill(zeta_.begin(), zeta_.end(), 0.0);
    const double inv_n = 1.0 / static_cast<double>(n_);
    for (std::size_t i = 0; i < n_; ++i) {
      const std::size_t sc = sig_[i], nc = 2 + i;
      const double gc = -y_[i] * sigmoid(-y_[i] * f_[i]) * inv_n;
      const double c1 = s11_[i] + s21_[i];
      const double vd = v_[sc] - v_[nc];
      const double d1 = s11_[i] * (1.0 - s11_[i]) * vd * inv_mv_;
      const double d2 = s21_[i] * (1.0 - s21_[i]) * vd * inv_mv_;
      const double w1 = eta * gc * d1;
      const double w2 = eta * gc * d2;
      // A_Q rows against key differences, A_K rows against query mixes.
      axpy(-w1, kt_.row(sc), aq_.row(sc));
      axpy(w1, kt_.row(nc), aq_.row(sc));
      axpy(-w2, kt_.row(sc), aq_.row(nc));
      axpy(w2, kt_.row(nc), aq_.row(nc));
      axpy(-w1, qt_.row(sc), ak_.row(sc));
      axpy(-w2, qt_.row(nc), ak_.row(sc));
      axpy(w1, qt_.row(sc), ak_.row(nc));
      axpy(w2, qt_.row(nc), ak_.row(nc));
      zeta_[sc] += gc * c1;
      zeta_[nc] += gc * (2.0 - c1);
    }
    // gu = W_V zeta in token space, taken before av moves (simultaneity).
    std::fill(gu_.begin(), gu_.end(), 0.0);
    const Vec gz = matvec(g_, zeta_);
    for (std::size_t p = 0; p < p_; ++p) {
      if (zeta_[p] != 0.0) axpy(zeta_[p], mv0t_.row(p), gu_);
      if (gz[p] != 0.0) axpy(gz[p], av_.row(p), gu_);
    }
    for (std::size_t p = 0; p < p_; ++p)
      if (zeta_[p] != 0.0) axpy(-eta * inv_mv_ * zeta_[p], ups_, av_.row(p));
    if (train_upsilon) axpy(-eta * inv_mv_, gu_, ups_);
  }

  double atten_signal() const {
    double s = 0.0;
    for (std::size_t i = 0; i < n_; ++i) s += (s11_[i] + s21_[i]) / 2.0;
    return s / static_cast<double>(n_);
  }

  double v_at(std::size_t p) const { return v_[p]; }
  double v_xi_mean() const {
    double s = 0.0;
    for (std::size_t p = 2; p < p_; ++p) s += v_[p];
    return s / static_cast<double>(n_);
  }
  // rho_b = <delta W_V x_b, ups> / ||ups||^2 = (v_b - <mv0_b, ups>) / ||ups||^2.
  double rho_at(std::size_t p) const { return (v_[p] - v0_ups_[p]) / dot(ups_, ups_); }
  double rho_xi_mean() const {
    double s = 0.0;
    for (std::size_t p = 2; p < p_; ++p) s += rho_at(p);
    return s / static_cast<double>(n_);
  }

  struct Coeffs {
    Matrix aq, ak, av;
    Vec ups;
    std::size_t iter = 0;
    double loss = 0.0;
  };
  void stash(Coeffs& c, std::size_t iter, double loss) const {
    c.aq = aq_;
    c.ak = ak_;
    c.av = av_;
    c.ups = ups_;
    c.iter = iter;
    c.loss = loss;
  }
  ModelParams materialize_coeffs(const Coeffs& c) const {
    ModelParams out;
    out.w_q = init_->w_q;
    out.w_k = init_->w_k;
    out.w_v = init_->w_v;
    out.upsilon = c.ups;
    for (std::size_t p = 0; p < p_; ++p) {
      add_outer(out.w_q, 1.0, c.aq.row(p), token(p));
      add_outer(out.w_k, 1.0, c.ak.row(p), token(p));
      add_outer(out.w_v, 1.0, c.av.row(p), token(p));
    }
    return out;
  }

 private:
  std::size_t n_, p_, m_k_, m_v_;
  double inv_mv_;
  const Dataset* ds_;
  const ModelParams* init_;
  Matrix g_;
  Matrix q0t_, k0t_, mv0t_;
  Matrix aq_, ak_, av_;
  Matrix qt_, kt_;
  Vec ups_;
  Vec v_, v0_ups_, w_av_;
  std::vector<std::size_t> sig_;
  Vec y_;
  Vec s11_, s21_, f_;
  Vec zeta_, gu_;
};

}  // namespace

TrainingDivergedError::TrainingDivergedError(const std::string& msg, TrainingRecord rec)
    : std::runtime_error(msg), record(std::move(rec)) {}

namespace {

bool record_due(const TrainConfig& tc, std::size_t t) {
  return t == 0 || (tc.record_every > 0 && t % tc.record_every == 0);
}

TrainingRecord run_training(const ModelParams& init, const Dataset& ds,
                            const TrainConfig& tc, RngStream eval_base) {
  validate(tc);
  if (init.w_q.cols() != ds.config.d) fail("model dimension does not match dataset");
  Engine eng(init, ds);
  TrainingRecord rec;
  rec.config = tc;
  Engine::Coeffs last_good;
  eng.stash(last_good, 0, 0.0);
  double prev_loss = 0.0;
  for (std::size_t t = 0;; ++t) {
    const double loss = eng.refresh();
    if (t == 0)
      rec.initial_loss = loss;
    else if (loss > prev_loss + 1e-6)
      ++rec.descent_violations;
    if (!std::isfinite(loss) || loss > tc.divergence_loss) {
      rec.iters = last_good.iter;
      rec.final_loss = last_good.loss;
      rec.reason = StopReason::iteration_cap;
      rec.final_params = eng.materialize_coeffs(last_good);
      if (rec.rows.size() >= 3) rec.stages = detect_stages(rec);
      char buf[128];
      std::snprintf(buf, sizeof buf, "training diverged at iteration %zu (loss %.6g)",
                    t, loss);
      throw TrainingDivergedError(buf, std::move(rec));
    }
    const bool due = record_due(tc, t);
    const bool snap_due =
        tc.snapshot_every > 0 && (t == 0 || t % tc.snapshot_every == 0);
    const bool stopping = loss <= tc.target_loss || t >= tc.max_iters;
    if (due || stopping) {
      RecordRow row{};
      row.iter = t;
      row.train_loss = loss;
      row.atten_signal = eng.atten_signal();
      row.atten_noise = 1.0 - row.atten_signal;
      row.v_plus = eng.v_at(0);
      row.v_minus = eng.v_at(1);
      row.v_xi_mean = eng.v_xi_mean();
      row.rho_plus = eng.rho_at(0);
      row.rho_minus = eng.rho_at(1);
      row.rho_xi_mean = eng.rho_xi_mean();
      if (tc.record_test_mc > 0) {
        Engine::Coeffs c;
        eng.stash(c, t, loss);
        const ModelParams now = eng.materialize_coeffs(c);
        const TestEstimate est = estimate_test(now, ds.config, ds.signals,
                                               tc.record_test_mc, eval_base.substream(t));
        row.test_loss = est.loss;
        row.test_error01 = est.error01;
      } else {
        row.test_loss = std::nan("");
        row.test_error01 = std::nan("");
      }
      rec.rows.push_back(row);
      eng.stash(last_good, t, loss);
    }
    if (snap_due || (stopping && tc.snapshot_every > 0)) {
      if (rec.snapshots.empty() || rec.snapshots.back().first != t) {
        Engine::Coeffs c;
        eng.stash(c, t, loss);
        rec.snapshots.emplace_back(t, eng.materialize_coeffs(c));
      }
    }
    if (stopping) {
      rec.iters = t;
      rec.final_loss = loss;
      rec.reason =
          loss <= tc.target_loss ? StopReason::target_reached : StopReason::iteration_cap;
      Engine::Coeffs c;
      eng.stash(c, t, loss);
      rec.final_params = eng.materialize_coeffs(c);
      break;
    }
    eng.step(tc.eta, tc.train_upsilon);
    prev_loss = loss;
  }
  if (rec.rows.size() >= 3) rec.stages = detect_stages(rec);
  return rec;
}

}  // namespace

TrainingRecord train(const Dataset& ds, const ModelConfig& mc, const TrainConfig& tc,
                     RngStream rng) {
  validate(mc);
  if (mc.d != ds.config.d) fail("model d does not match dataset d");
  RngStream init_rng = rng.substream(0);
  const ModelParams init = init_params(mc, init_rng);
  return run_training(init, ds, tc, rng.substream(1));
}

TrainingRecord train_from(const ModelParams& init, const Dataset& ds,
                          const TrainConfig& tc, RngStream rng) {
  return run_training(init, ds, tc, rng.substream(1));
}

StageEstimates detect_stages(const TrainingRecord& rec) {
  if (rec.rows.size() < 3) fail("detect_stages needs >= 3 recorded rows");
  const double initial = rec.rows.front().train_loss;
  const double target = rec.config.target_loss;
  const double t1_level = initial - 0.05 * (initial - target);
  const double t2_level = 2.0 * target;
  StageEstimates st;
  for (const auto& row : rec.rows) {
    if (!st.t1_hat && row.train_loss <= t1_level) st.t1_hat = row.iter;
    if (!st.t2_hat && row.train_loss <= t2_level) st.t2_hat = row.iter;
  }
  // Collapse the degenerate near-target start so t1 <= t2 always holds.
  if (st.t1_hat && st.t2_hat && *st.t2_hat < *st.t1_hat) st.t1_hat = st.t2_hat;
  return st;
}

void write_record_csv(const TrainingRecord& rec, std::ostream& out) {
  out << "iter,train_loss,test_loss,test_error01,atten_signal,atten_noise,"
         "v_plus,v_minus,v_xi_mean,rho_plus,rho_minus,rho_xi_mean\n";
  char buf[64];
  auto put = [&](double v, bool comma = true) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    out << buf;
    if (comma) out << ",";
  };
  for (const auto& r : rec.rows) {
    out << r.iter << ",";
    put(r.train_loss);
    put(r.test_loss);
    put(r.test_error01);
    put(r.atten_signal);
    put(r.atten_noise);
    put(r.v_plus);
    put(r.v_minus);
    put(r.v_xi_mean);
    put(r.rho_plus);
    put(r.rho_minus);
    put(r.rho_xi_mean, false);
    out << "\n";
  }
}

}  // namespace attnlab
