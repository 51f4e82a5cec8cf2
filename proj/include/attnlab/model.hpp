#pragma once

#include <span>
#include <string>
#include <vector>

#include "attnlab/data.hpp"
#include "attnlab/matrix.hpp"
#include "attnlab/rng.hpp"

namespace attnlab {

struct ModelConfig {
  std::size_t d = 512;
  std::size_t m_k = 512;      // query/key width
  std::size_t m_v = 512;      // value width
  double sigma_k = 1e-3;      // W_Q, W_K init scale
  double sigma_v = 1e-2;      // W_V init scale
  double upsilon_norm = 1.0;  // exact norm of the readout vector
};

void validate(const ModelConfig& cfg);

struct ModelParams {
  Matrix w_q;   // m_k x d
  Matrix w_k;   // m_k x d
  Matrix w_v;   // m_v x d
  Vec upsilon;  // m_v
};

// Draw order is fixed (W_Q, W_K, W_V row-major, then upsilon): one stream
// position maps to one parameter entry, so paired experiments that share an
// init stream get identical starting points. upsilon is drawn Gaussian and
// rescaled to exactly upsilon_norm.
ModelParams init_params(const ModelConfig& cfg, RngStream& rng);

// Everything the two-token forward pass produces for one point. Each softmax
// row has two entries, so the masses are sigmoids of the score margins
// lambda_* and the row sums are 1 by construction.
struct ForwardTrace {
  Vec q1, q2;       // query projections of the signal/noise tokens
  Vec k1, k2;       // key projections
  double lambda_sig;    // <q1,k1> - <q1,k2>: signal query's score margin
  double lambda_noise;  // <q2,k1> - <q2,k2>: noise query's score margin
  double s11, s12;  // attention of the signal query over (signal, noise) keys
  double s21, s22;  // attention of the noise query
  double v_sig, v_noise;  // value readouts <W_V x, upsilon>
  double f;               // model output
};

ForwardTrace forward(const ModelParams& p, const DataPoint& point);
ForwardTrace forward(const ModelParams& p, std::span<const double> x1,
                     std::span<const double> x2);
double predict(const ModelParams& p, std::span<const double> x1,
               std::span<const double> x2);
std::vector<ForwardTrace> forward_all(const ModelParams& p, const Dataset& ds);

// Mean attention mass routed to the signal and noise keys, query-averaged:
// mean of (s11 + s21)/2 and (s12 + s22)/2. The two sum to 1. Errors on an
// empty list.
struct AttentionSummary {
  double atten_signal;
  double atten_noise;
};
AttentionSummary attention_summary(std::span<const ForwardTrace> traces);
AttentionSummary attention_summary(const ModelParams& p, const Dataset& ds);

// Value-path readouts of the distinct tokens: V(mu_plus), V(mu_minus), and the
// mean over the dataset's noise tokens.
struct ValueSummary {
  double v_plus;
  double v_minus;
  double v_xi_mean;
};
ValueSummary value_summary(const ModelParams& p, const SignalPair& signals,
                           const Dataset& ds);

// V(x) = <W_V x, upsilon>.
double value_readout(const ModelParams& p, std::span<const double> x);

// Flat binary format (shape header + row-major payloads), exact round trip.
void save_params(const ModelParams& p, const std::string& path);
ModelParams load_params(const std::string& path);

}  // namespace attnlab
