// Command-line front end: generate datasets, train identification models,
// evaluate them by identify-then-extrapolate forecasting, and run single
// predictions against a checkpoint.

#include <exception>
#include <functional>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "sendi/experiment.hpp"

namespace {

// Exit codes: 2 config, 3 data, 4 numeric, 5 divergence.
int run_guarded(const std::function<void()>& fn) {
  try {
    fn();
    return 0;
  } catch (const sendi::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const sendi::IncompatibilityError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const sendi::UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const sendi::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const sendi::DivergenceError& e) {
    std::cerr << "divergence: " << e.what() << "\n";
    return 5;
  } catch (const sendi::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

sendi::ExperimentConfig resolve_config(const std::string& config_path,
                                       const std::string& preset, long long seed) {
  sendi::ExperimentConfig cfg;
  if (!config_path.empty())
    cfg = sendi::load_experiment_config(config_path);
  else if (!preset.empty())
    cfg = sendi::parse_experiment_config(sendi::preset_config(preset));
  else
    throw sendi::ConfigError("pass --config <file> or --preset <name>");
  if (seed >= 0) {
    cfg.seed = static_cast<std::uint64_t>(seed);
    cfg.plan.seed = cfg.seed;
  }
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"set-encoder toolkit for online dynamics identification"};
  app.require_subcommand(1);

  std::string config_path, preset, out_dir, dataset_dir, run_dir;
  std::string checkpoint_path, window_csv, out_json;
  long long seed = -1;
  double noise_level = 0.0;
  bool force = false, dry_run = false, resume = false, oracle = false;
  int reps = 100;

  auto add_config_flags = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "experiment config JSON");
    cmd->add_option("--preset", preset, "built-in preset: app1, app2, app3, desk");
    cmd->add_option("--seed", seed, "override the config's global seed");
  };

  CLI::App* generate = app.add_subcommand("generate", "simulate systems and write labeled datasets");
  add_config_flags(generate);
  generate->add_option("--out", out_dir, "output dataset directory")->required();
  generate->add_flag("--force", force, "allow writing into a non-empty directory");

  CLI::App* train = app.add_subcommand("train", "train a model on a generated dataset");
  add_config_flags(train);
  train->add_option("--data", dataset_dir, "dataset directory")->required();
  train->add_option("--out", run_dir, "training run directory")->required();
  train->add_option("--noise", noise_level, "noise variant to train on (default 0)");
  train->add_flag("--force", force, "allow writing into a non-empty directory");
  train->add_flag("--dry-run", dry_run, "print the resolved plan and exit");
  train->add_flag("--resume", resume, "continue a run from its recorded epoch");

  CLI::App* evaluate = app.add_subcommand("evaluate", "forecasting / accuracy metrics on the test split");
  add_config_flags(evaluate);
  evaluate->add_option("--run", run_dir, "training run directory (omit with --oracle)");
  evaluate->add_option("--data", dataset_dir, "dataset directory")->required();
  evaluate->add_option("--out", out_dir, "metrics output directory")->required();
  evaluate->add_option("--noise", noise_level, "noise variant to evaluate");
  evaluate->add_flag("--force", force, "allow writing into a non-empty directory");
  evaluate->add_flag("--oracle", oracle, "score the stored labels instead of a model");

  CLI::App* identify = app.add_subcommand("identify", "one prediction from a checkpoint and a window CSV");
  identify->add_option("--checkpoint", checkpoint_path, "model checkpoint")->required();
  identify->add_option("--window", window_csv, "window CSV (feature columns)")->required();
  identify->add_option("--out", out_json, "write the prediction JSON here");
  identify->add_option("--reps", reps, "timing repetitions (median reported)");

  std::string results_dir = ".";
  CLI::App* report = app.add_subcommand("report", "print result tables under a directory");
  report->add_option("--dir", results_dir, "directory to scan (default .)");

  CLI11_PARSE(app, argc, argv);

  if (generate->parsed())
    return run_guarded([&] { sendi::cmd_generate(resolve_config(config_path, preset, seed), out_dir, force); });
  if (train->parsed())
    return run_guarded([&] {
      sendi::cmd_train(resolve_config(config_path, preset, seed), dataset_dir, run_dir,
                       force, dry_run, resume, noise_level);
    });
  if (evaluate->parsed())
    return run_guarded([&] {
      if (!oracle && run_dir.empty())
        throw sendi::ConfigError("evaluate: pass --run <dir> or --oracle");
      sendi::cmd_evaluate(resolve_config(config_path, preset, seed), run_dir, dataset_dir,
                          out_dir, force, oracle, noise_level);
    });
  if (identify->parsed())
    return run_guarded([&] { sendi::cmd_identify(checkpoint_path, window_csv, out_json, reps); });
  if (report->parsed())
    return run_guarded([&] { sendi::cmd_report(results_dir); });
  return 0;
}
