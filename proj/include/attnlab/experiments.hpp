#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "attnlab/data.hpp"
#include "attnlab/matrix.hpp"
#include "attnlab/model.hpp"
#include "attnlab/trainer.hpp"
#include "attnlab/evaluator.hpp"

namespace attnlab {

// A sweep is the cartesian product of the six axis lists, nested in the fixed
// order (n, mu_norm, sigma_p, alpha, eta, sigma_v), times `repeats` runs per
// cell. Run (cell, repeat) draws everything from stream id
// cell * repeats + repeat under base_seed, so a manifest edit that only
// changes one axis value leaves every other cell's runs bit-identical, and two
// manifests with equal axis shapes pair their runs stream-for-stream.
struct SweepManifest {
  std::vector<std::size_t> n_values;
  std::vector<double> mu_values;
  std::vector<double> sigma_p_values{2.0};
  std::vector<double> alpha_values{0.001};
  std::vector<double> eta_values{1.0};
  std::vector<double> sigma_v_values{0.01};
  std::size_t repeats = 20;
  std::uint64_t base_seed = 1;

  std::size_t d = 512;
  std::size_t m_k = 512;
  std::size_t m_v = 512;
  double sigma_k = 1e-3;
  double upsilon_norm = 1.0;
  double target_loss = 0.01;
  std::size_t max_iters = 2000;
  bool train_upsilon = true;
  std::size_t eval_mc = 1000;
  std::size_t jobs = 1;
};

void validate(const SweepManifest& m);
std::size_t cell_count(const SweepManifest& m);
SweepManifest manifest_from_json(const std::string& text);
std::string manifest_to_json(const SweepManifest& m);

struct CellCoords {
  std::size_t n;
  double mu_norm, sigma_p, alpha, eta, sigma_v;
};
CellCoords cell_coords(const SweepManifest& m, std::size_t cell);

struct RunResult {
  std::size_t cell = 0;
  std::size_t repeat = 0;
  std::uint64_t stream_id = 0;
  CellCoords coords{};
  bool ok = false;  // false: training diverged, metrics are NaN
  std::size_t iters = 0;
  bool reached_target = false;
  double final_train_loss = 0.0;
  TestEstimate test;
};

struct CellResult {
  std::size_t cell = 0;
  CellCoords coords{};
  std::size_t n_ok = 0;
  std::size_t n_failed = 0;
  // Statistics over the ok runs. NaN when n_ok == 0.
  double train_loss_mean = 0.0;
  double test_loss_mean = 0.0, test_loss_std = 0.0;
  double error01_mean = 0.0, error01_std = 0.0;
  double error01_clean_mean = 0.0;
  double iters_mean = 0.0;
  double reached_target_frac = 0.0;
};

struct SweepResult {
  SweepManifest manifest;
  std::vector<RunResult> runs;    // ordered by (cell, repeat)
  std::vector<CellResult> cells;  // ordered by cell
};

// Runs every (cell, repeat) and aggregates. Uses manifest.jobs worker threads;
// output is bit-identical for any jobs value because results are collected
// into their slots and aggregated in fixed order afterwards.
SweepResult run_sweep(const SweepManifest& m);

// Fixed column order and %.17g numerics: equal results serialize to equal
// bytes.
std::string runs_csv(const SweepResult& r);
std::string cells_csv(const SweepResult& r);

// An n x snr grid of cell means for one (sigma_p, alpha, eta, sigma_v) slice.
struct PhaseGrid {
  std::vector<std::size_t> n_axis;   // ascending
  std::vector<double> mu_axis;       // ascending
  std::vector<double> snr_axis;      // mu_axis / (sigma_p sqrt(d))
  double sigma_p = 0.0, alpha = 0.0, eta = 0.0, sigma_v = 0.0;
  std::size_t d = 0;
  Matrix error01_mean;    // n_axis.size() x mu_axis.size()
  Matrix error01_std;
  Matrix test_loss_mean;
  Matrix test_loss_std;
};

// Requires the sweep to have exactly one value on each non-(n, mu) axis.
PhaseGrid to_phase_grid(const SweepResult& r);
PhaseGrid phase_grid_from_cells_csv(std::istream& in);

// 1.0 where mean error01 <= alpha + threshold (benign), else 0.0.
Matrix binarize_phase(const PhaseGrid& g, double threshold = 0.05);

// Fraction of adjacent cell pairs consistent with benignness being upward
// closed in n and in snr (benign never degrades when either grows).
double upward_closure_fraction(const Matrix& benign);

// Per-row boundary fit. For each n row the level crossing of
// error01 = alpha + threshold is located by log-snr interpolation at the first
// above-to-below transition; rows without a crossing are skipped. c_hat is the
// geometric mean of n * snr_b^2 over crossed rows, residual the standard
// deviation of log(n * snr_b^2). A constant n * snr^2 = c boundary fits with
// residual 0.
struct CriticalFit {
  double c_hat = 0.0;
  double residual = 0.0;
  double threshold = 0.0;
  std::vector<std::size_t> boundary_n;
  std::vector<double> boundary_snr;
};
CriticalFit fit_critical_line(const PhaseGrid& g, double threshold = 0.05);
std::string critical_json(const CriticalFit& f);

// Pearson correlation of the two grids' error01_mean surfaces. The 0-1 error
// surface is the comparable quantity across alpha: test-loss surfaces shift by
// the flip-noise floor and can anticorrelate even when the phase structure
// matches. Grids must share axes and be non-constant.
double heatmap_similarity(const PhaseGrid& a, const PhaseGrid& b);

// Standalone SVG rendering of error01_mean, one rect per cell plus axis labels.
std::string heatmap_svg(const PhaseGrid& g);

// Cell aggregates along the single axis with more than one value; errors if
// zero or several axes vary.
struct CurvePoint {
  double value = 0.0;
  double test_loss_mean = 0.0, test_loss_std = 0.0;
  double error01_mean = 0.0;
  double train_loss_mean = 0.0;
};
std::vector<CurvePoint> curve_from(const SweepResult& r);

// run_sweep + curve_from for a manifest with exactly one varying axis.
std::vector<CurvePoint> single_variable_sweep(const SweepManifest& m);

}  // namespace attnlab
