#pragma once

#include <string>
#include <vector>

#include "sendi/heat.hpp"
#include "sendi/metrics.hpp"
#include "sendi/train.hpp"

namespace sendi {

// Parsed, validated experiment description. The raw JSON text is kept for
// hashing so every artifact can name the exact configuration that made it.
struct ExperimentConfig {
  int version = 1;
  std::string kind;  // "app1", "app2" or "app3"
  std::uint64_t seed = 0;

  // Sampling / dataset shape.
  int count = 0;
  int train_count = 0;        // absolute count (app1); 0 = use fraction
  double train_fraction = 0.7;
  int test_count = 0;         // extra held-out runs (app3)
  std::vector<double> noise_levels{0.0};

  // Simulation grids.
  double t_end = 10.0;
  int steps = 1000;
  double test_t_end = 0.0;  // 0 = same as t_end
  int test_steps = 0;

  // Library and sparse solver.
  int poly_degree = 3;
  StlsqConfig solver;

  // Windows and evaluation.
  int window_width = 10;
  std::vector<int> window_sizes;
  std::vector<int> horizons{1, 2, 3, 4};

  // Model and training.
  ModelConfig model;
  int target_index = 1;   // Lorenz parameter slot (0 sigma, 1 rho, 2 beta)
  int state_index = -1;   // state equation for coefficient labels; -1 = all
  TrainingPlan plan;

  // Heat template; abnormality characteristics are resampled per run.
  HeatProblem heat;

  std::string config_text;  // canonical JSON

  std::string hash() const;
  // Hash of the data-affecting subset; training/eval settings excluded.
  std::string dataset_fingerprint() const;
};

ExperimentConfig load_experiment_config(const std::string& path);
ExperimentConfig parse_experiment_config(const std::string& json_text);

// Generated dataset loaded back for training/evaluation.
struct Dataset {
  std::string kind;
  std::vector<Trajectory> trajectories;           // app1
  std::vector<LorenzSample> lorenz_systems;       // app2 (chosen noise variant)
  std::vector<HeatSample> heat_runs;              // app3 train/valid pool
  std::vector<HeatSample> heat_test_runs;         // app3 held-out
  std::string fingerprint;
};

// Command implementations. They throw on failure; the CLI maps exception
// kinds to exit codes.
void cmd_generate(const ExperimentConfig& config, const std::string& out_dir, bool force);
Dataset load_dataset(const ExperimentConfig& config, const std::string& dataset_dir,
                     double noise_level);
void cmd_train(const ExperimentConfig& config, const std::string& dataset_dir,
               const std::string& run_dir, bool force, bool dry_run, bool resume,
               double noise_level);
void cmd_evaluate(const ExperimentConfig& config, const std::string& run_dir,
                  const std::string& dataset_dir, const std::string& out_dir, bool force,
                  bool oracle, double noise_level);

struct IdentifyResult {
  Vec prediction;
  double median_ms = 0;
  std::string config_hash;
};
IdentifyResult cmd_identify(const std::string& checkpoint_path,
                            const std::string& window_csv, const std::string& out_json,
                            int reps);
void cmd_report(const std::string& results_dir);

// In-memory generation helpers, shared by commands and the test suites.
std::vector<Trajectory> generate_prey_predator_set(const ExperimentConfig& config);
std::vector<LorenzSample> generate_lorenz_set(const ExperimentConfig& config,
                                              double noise_level, bool test_grid);
std::vector<HeatSample> generate_heat_set(const ExperimentConfig& config, int count,
                                          double noise_level, std::uint64_t index_offset);

// Bounds used by the generators.
std::vector<std::pair<double, double>> prey_predator_bounds();  // c, x0, y0
std::vector<std::pair<double, double>> lorenz_bounds();  // sigma rho beta x0 y0 z0

// Built-in presets ("app1", "app2", "app3", "desk"); returns JSON text.
std::string preset_config(const std::string& name);

}  // namespace sendi
