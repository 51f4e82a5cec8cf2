#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "attnlab/data.hpp"
#include "attnlab/model.hpp"

namespace attnlab {

struct TrainConfig {
  double eta = 1.0;
  std::size_t max_iters = 2000;
  double target_loss = 0.01;      // stop once train loss <= this
  bool train_upsilon = true;      // false freezes the readout vector
  std::size_t record_every = 10;  // 0 records only init and final
  std::size_t record_test_mc = 0;   // per-record MC test size; 0 skips
  std::size_t snapshot_every = 0;   // keep dense parameter copies; 0 disables
  double divergence_loss = 1e6;   // loss above this, or non-finite, aborts
};

void validate(const TrainConfig& cfg);

// log(1 + exp(-z)) on the stable branch for either sign: ~ -z far left,
// ~ exp(-z) far right.
double logistic_loss(double z);

// Mean logistic_loss(y_obs * f) over the dataset. The training target is the
// observed (possibly flipped) label.
double train_loss(const ModelParams& p, const Dataset& ds);

struct Gradients {
  Matrix w_q, w_k, w_v;
  Vec upsilon;
};

// Exact gradients of train_loss at p. Derived by hand from the two-key softmax
// structure; the test suite holds every block to the finite-difference oracle.
Gradients analytic_gradients(const ModelParams& p, const Dataset& ds);

// One full-batch step: every block updated simultaneously from gradients at
// the incoming iterate. upsilon moves only when cfg.train_upsilon.
ModelParams gd_step(const ModelParams& p, const Dataset& ds, const TrainConfig& cfg);

// One metrics row. Row at iteration t describes the parameters after t steps
// (row 0 is the initialization). test_* are NaN when record_test_mc == 0.
struct RecordRow {
  std::size_t iter;
  double train_loss;
  double test_loss, test_error01;
  double atten_signal, atten_noise;
  double v_plus, v_minus, v_xi_mean;
  double rho_plus, rho_minus, rho_xi_mean;  // value drift in token coordinates
};

enum class StopReason { target_reached, iteration_cap };

struct StageEstimates {
  // First recorded iteration with >= 5% of the initial-to-target loss gap
  // closed, and first with loss <= 2 * target_loss. Record granularity.
  std::optional<std::size_t> t1_hat;
  std::optional<std::size_t> t2_hat;
};

struct TrainingRecord {
  TrainConfig config;
  std::vector<RecordRow> rows;
  StopReason reason = StopReason::iteration_cap;
  std::size_t iters = 0;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  std::size_t descent_violations = 0;  // iterations where loss rose > 1e-6
  StageEstimates stages;
  ModelParams final_params;
  std::vector<std::pair<std::size_t, ModelParams>> snapshots;
};

// Thrown when the loss leaves the finite/bounded region. Carries the record up
// to the last recorded healthy iterate so callers can still inspect the run.
class TrainingDivergedError : public std::runtime_error {
 public:
  TrainingDivergedError(const std::string& msg, TrainingRecord rec);
  TrainingRecord record;
};

// Full-batch GD from a fresh init. rng substream 0 seeds the init, substream 1
// the per-record test draws; dataset noise is the caller's business.
// Internally the weight deltas are tracked in the span of the dataset's
// distinct tokens, which is exact for this model family and keeps the
// per-iteration cost independent of d and the widths; returned params are
// dense and bit-equal to plain gd_step iteration up to float associativity.
TrainingRecord train(const Dataset& ds, const ModelConfig& mc, const TrainConfig& tc,
                     RngStream rng);

// Same, from explicit initial parameters.
TrainingRecord train_from(const ModelParams& init, const Dataset& ds,
                          const TrainConfig& tc, RngStream rng);

// Recomputes stage boundaries from the recorded rows. Requires >= 3 rows.
StageEstimates detect_stages(const TrainingRecord& rec);

// One row per recorded iteration, fixed documented column order.
void write_record_csv(const TrainingRecord& rec, std::ostream& out);

}  // namespace attnlab
