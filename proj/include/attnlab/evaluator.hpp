#pragma once

#include <optional>

#include "attnlab/data.hpp"
#include "attnlab/model.hpp"

namespace attnlab {

// Monte Carlo estimates on fresh draws. error01 counts y_obs != sign(f) with
// sign(0) = +1; error01_clean counts y_true * f <= 0. std_err is the binomial
// standard error of error01; loss_std_err the standard error of loss. For any
// model, error01 <= alpha + error01_clean holds pointwise per draw, so the
// 3 * std_err form of that inequality can fail only by MC noise on alpha.
struct TestEstimate {
  double loss = 0.0;
  double error01 = 0.0;
  double error01_clean = 0.0;
  std::size_t n_mc = 0;
  double std_err = 0.0;
  double loss_std_err = 0.0;
};

TestEstimate estimate_test(const ModelParams& p, const DataConfig& cfg,
                           const SignalPair& signals, std::size_t n_mc, RngStream rng);

// Test loss stratified by whether the draw's label was flipped. flipped_part
// is absent when the MC batch contains no flipped draws (always at alpha = 0),
// and total is then computed from the unflipped stratum alone. total
// recombines as (1-alpha) * unflipped + alpha * flipped up to stratum-weight
// noise and agrees with estimate_test.loss within combined MC error.
struct SplitLoss {
  double unflipped_part = 0.0;
  std::optional<double> flipped_part;
  double total = 0.0;
  double unflipped_std_err = 0.0;
  double flipped_std_err = 0.0;
  double total_std_err = 0.0;
  std::size_t n_unflipped = 0;
  std::size_t n_flipped = 0;
};

SplitLoss split_test_loss(const ModelParams& p, const DataConfig& cfg,
                          const SignalPair& signals, std::size_t n_mc, RngStream rng);

// Population test-loss floor for a saturated noise-routed predictor:
// (1-alpha) * log((1+2e^{1/2})/(1+e^{1/2})) + alpha * log(2+e^{-1/2}).
// Affine and increasing in alpha; accepts the closed interval [0, 1/2].
double harmful_lower_bound(double alpha);

// Value-path drift in token coordinates: for each distinct token x_b,
// rho_b = (<W_V(t) x_b, upsilon> - <W_V(0) x_b, upsilon>) / ||upsilon||^2.
// Requires both snapshots to share upsilon exactly (frozen-readout training);
// throws otherwise, since the decomposition identity is invalid when the
// readout moved.
struct RhoCoefficients {
  double rho_plus = 0.0;
  double rho_minus = 0.0;
  std::vector<double> rho_xi;  // one per dataset point
};

RhoCoefficients rho_coefficients(const ModelParams& params_t, const ModelParams& params_0,
                                 const SignalPair& signals, const Dataset& ds);

}  // namespace attnlab
