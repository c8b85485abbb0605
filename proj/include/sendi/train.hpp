#pragma once

#include <string>
#include <vector>

#include "sendi/heat.hpp"
#include "sendi/set_models.hpp"
#include "sendi/sparse_reg.hpp"

namespace sendi {

struct LrStage {
  double lr = 1e-3;
  int epochs = 1;
};

struct TrainingPlan {
  std::vector<LrStage> stages;
  int batch_size = 64;
  double lambda_ode = 0.0;  // weight of the ODE-residual term
  double lambda_reg = 0.0;  // weight of the L1 parameter penalty
  std::uint64_t seed = 0;

  int total_epochs() const;
  void validate() const;
};

// One training sample: input rows, target vector, and the library/derivative
// rows that let the loss score the predicted coefficients as dynamics.
struct LabeledWindow {
  Mat inputs;         // N' x features
  Vec target;         // total_output_dim
  Mat theta;          // M x T, library evaluated on the labeled span
  Mat deriv_targets;  // M x l, aligned with theta rows; empty = no ODE term
  int group = 0;      // source trajectory/system id
  Eigen::Index window_start = 0;
  std::uint64_t label_hash = 0;

  std::uint64_t compute_label_hash() const;
};

// Coefficient MSE + lambda_ode * mean-L1 ODE residual + lambda_reg * L1 of
// the trainable parameters. The predicted vector is interpreted as a
// row-major (terms x l) coefficient block when the ODE term is active.
Tensor composite_loss(Tape& tape, Tensor pred, const LabeledWindow& window,
                      double lambda_ode, double lambda_reg,
                      const std::vector<Param*>& params);

double ode_residual_l1(SetModel& model, const std::vector<LabeledWindow>& windows);
double dataset_loss(SetModel& model, const std::vector<LabeledWindow>& windows,
                    const TrainingPlan& plan);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0;
  double valid_loss = 0;
  double lr = 0;
};

struct TrainResult {
  Checkpoint best;
  double best_valid_loss = 0;
  std::vector<EpochRecord> curves;
  std::vector<double> checkpoint_losses;  // strictly decreasing
  bool aborted = false;
  std::string diagnostic;
};

// Staged learning-rate ladder with per-epoch validation and checkpointing on
// strict improvement. Batches group windows of equal length. A non-finite
// loss aborts and returns the last good checkpoint.
TrainResult train(SetModel& model, const TrainingPlan& plan,
                  const std::vector<LabeledWindow>& train_set,
                  const std::vector<LabeledWindow>& valid_set);

void write_curves_csv(const std::string& path, const std::vector<EpochRecord>& curves);

// Fit affine normalization of inputs/targets from a training set and store it
// in the model config (applied inside forward).
void fit_normalization(ModelConfig& config, const std::vector<LabeledWindow>& train_set);

// ---------------------------------------------------------------------------
// Dataset assembly
// ---------------------------------------------------------------------------

struct SplitDataset {
  std::vector<LabeledWindow> train;
  std::vector<LabeledWindow> valid;
  int skipped = 0;
};

// Feature rows for one window: states, controls, then the window-local time
// fraction in [0, 1] (a permutation-safe stand-in for sample order).
Mat build_window_inputs(const Trajectory& traj, const Window& w);

// Next-window coefficient prediction: window k's rows (x, y, c, window-local
// time) paired with the sparse-regression label of window k+1 for one state
// equation; the label window's library/derivative rows ride along for the
// ODE-residual term. The last window of each trajectory has no successor and
// is dropped.
SplitDataset assemble_next_window(const std::vector<Trajectory>& trajectories,
                                  const FeatureLibrary& lib, const StlsqConfig& cfg,
                                  int window_width, int state_index, int train_count);

// Expanding-window Lorenz parameter samples: inputs [t, x, y, z], target one
// of sigma/rho/beta identified from the (optionally noisy) data, plus the
// matching rearranged regressor/derivative rows.
struct LorenzSample {
  Trajectory trajectory;  // possibly noisy
  LorenzFit label;        // identified from the data
  LorenzFit truth;        // generating parameters
};

SplitDataset assemble_lorenz_windows(const std::vector<LorenzSample>& systems,
                                     const std::vector<int>& window_sizes,
                                     int target_index, double train_fraction);

// Two-probe heat windows: rows (z, t, T) at the two boundary probes over a
// time prefix; targets [center, ratio, alpha_ref].
struct HeatSample {
  HeatProblem problem;
  Trajectory run;  // possibly noisy temperatures
};

SplitDataset assemble_heat_windows(const std::vector<HeatSample>& runs,
                                   const std::vector<int>& prefix_steps,
                                   double train_fraction);

}  // namespace sendi
