#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "attnlab/matrix.hpp"
#include "attnlab/rng.hpp"

namespace attnlab {

// Synthetic two-token classification task. Each point is a (signal, noise)
// token pair: the signal token is the class mean selected by the clean label,
// the noise token is fresh isotropic Gaussian noise, and the observed label is
// the clean label flipped with probability alpha.
struct DataConfig {
  std::size_t d = 512;    // token dimension, >= 2
  double mu_norm = 20.0;  // signal strength, >= 0
  double sigma_p = 2.0;   // per-coordinate noise scale, >= 0
  double alpha = 0.0;     // label-flip probability, in [0, 0.5)
  std::size_t n = 100;    // sample count, >= 1
};

// Throws std::invalid_argument on any out-of-range field.
void validate(const DataConfig& cfg);

// mu_norm / (sigma_p * sqrt(d)): signal strength relative to the typical
// noise-token norm. Errors when sigma_p == 0.
double snr(const DataConfig& cfg);

struct SignalPair {
  Vec mu_plus;
  Vec mu_minus;
};

// mu_norm * e1 and mu_norm * e2. The default signal geometry.
SignalPair make_signals(const DataConfig& cfg);
// Random orthogonal pair scaled to mu_norm, for checking that nothing depends
// on the axis alignment.
SignalPair random_orthogonal_signals(const DataConfig& cfg, RngStream& rng);

struct DataPoint {
  Vec x1;      // signal token; equals mu_plus iff y_true = +1
  Vec x2;      // noise token, N(0, sigma_p^2 I_d)
  int y_true;  // clean label, +1 or -1
  int y_obs;   // observed label after possible flip
  bool flipped() const { return y_obs != y_true; }
};

struct Dataset {
  DataConfig config;
  SignalPair signals;
  std::vector<DataPoint> points;
  std::vector<std::size_t> s_plus;   // indices with y_obs = +1
  std::vector<std::size_t> s_minus;  // indices with y_obs = -1

  std::size_t size() const { return points.size(); }
  std::size_t count_flipped() const;
};

// Per-point draw order is fixed at (clean label, flip uniform, d noise
// gaussians), so two configs differing only in alpha consume the stream
// identically: same clean labels, same noise, and the flip sets are nested.
// The signal token is keyed to the clean label; a flip changes y_obs only.
Dataset sample_dataset(const DataConfig& cfg, RngStream& rng);
Dataset sample_dataset(const DataConfig& cfg, const SignalPair& signals, RngStream& rng);

// Full-precision round-trippable text form: config and signals in header
// comments, then one row per point (y_true, y_obs, x1, x2).
void write_dataset_csv(const Dataset& ds, std::ostream& out);
Dataset read_dataset_csv(std::istream& in);

}  // namespace attnlab
