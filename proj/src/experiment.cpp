#include "sendi/experiment.hpp"

#include "sendi/sobol.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace sendi {

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open: " + path);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open for writing: " + path);
  out << text;
}

void ensure_output_dir(const std::string& dir, bool force) {
  fs::path p(dir);
  if (fs::exists(p)) {
    if (!fs::is_directory(p)) throw DataError("output path is not a directory: " + dir);
    if (!fs::is_empty(p) && !force)
      throw DataError("output directory not empty: " + dir + " (use --force)");
  } else {
    fs::create_directories(p);
  }
}

std::string noise_dir_name(double level) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(2);
  os << "noise_" << level;
  return os.str();
}

json stages_to_json(const TrainingPlan& plan) {
  json arr = json::array();
  for (const LrStage& s : plan.stages) arr.push_back({s.lr, s.epochs});
  return arr;
}

}  // namespace

std::vector<std::pair<double, double>> prey_predator_bounds() {
  return {{-1.0, 5.0}, {5.0, 50.0}, {5.0, 15.0}};  // c, x0, y0
}

std::vector<std::pair<double, double>> lorenz_bounds() {
  return {{8, 12}, {20, 35}, {0, 4}, {-5, 5}, {4, 50}, {5, 15}};
}

// ---------------------------------------------------------------------------
// Config parsing and validation
// ---------------------------------------------------------------------------

namespace {

void require_keys(const json& j, const std::vector<std::string>& required,
                  const std::vector<std::string>& allowed, const std::string& where) {
  std::vector<std::string> problems;
  for (const std::string& k : required)
    if (!j.contains(k)) problems.push_back("missing '" + where + k + "'");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const std::string& k : allowed)
      if (it.key() == k) known = true;
    if (!known) problems.push_back("unknown key '" + where + it.key() + "'");
  }
  if (!problems.empty()) {
    std::string msg = "config schema violations:";
    for (const std::string& p : problems) msg += "\n  - " + p;
    throw ConfigError(msg);
  }
}

TrainingPlan parse_plan(const json& j) {
  TrainingPlan plan;
  require_keys(j, {"stages"},
               {"stages", "batch_size", "lambda_ode", "lambda_reg", "seed"}, "training.");
  for (const auto& st : j.at("stages")) {
    if (!st.is_array() || st.size() != 2)
      throw ConfigError("training.stages entries must be [lr, epochs] pairs");
    plan.stages.push_back({st[0].get<double>(), st[1].get<int>()});
  }
  plan.batch_size = j.value("batch_size", 64);
  plan.lambda_ode = j.value("lambda_ode", 0.0);
  plan.lambda_reg = j.value("lambda_reg", 0.0);
  plan.validate();
  return plan;
}

StlsqConfig parse_solver(const json& j) {
  StlsqConfig cfg;
  require_keys(j, {}, {"kind", "threshold", "ridge", "max_iters"}, "solver.");
  std::string kind = j.value("kind", std::string("stlsq"));
  if (kind == "stlsq")
    cfg.solver = SparseSolverKind::stlsq;
  else if (kind == "lasso")
    cfg.solver = SparseSolverKind::lasso;
  else
    throw ConfigError("solver.kind must be 'stlsq' or 'lasso'");
  cfg.threshold = j.value("threshold", 0.05);
  cfg.ridge = j.value("ridge", 1e-10);
  cfg.max_iters = j.value("max_iters", 20);
  cfg.validate();
  return cfg;
}

HeatProblem parse_heat(const json& j) {
  HeatProblem h;
  require_keys(j, {},
               {"length", "node_count", "alpha_ref", "center", "ratio", "half_width",
                "flux", "t_max", "t_initial", "dt", "horizon"},
               "heat.");
  h.length = j.value("length", h.length);
  h.node_count = j.value("node_count", h.node_count);
  h.alpha_ref = j.value("alpha_ref", h.alpha_ref);
  h.center = j.value("center", h.center);
  h.ratio = j.value("ratio", h.ratio);
  h.half_width = j.value("half_width", h.half_width);
  h.flux = j.value("flux", h.flux);
  h.t_max = j.value("t_max", h.t_max);
  h.t_initial = j.value("t_initial", h.t_initial);
  h.dt = j.value("dt", h.dt);
  h.horizon = j.value("horizon", h.horizon);
  h.validate();
  return h;
}

}  // namespace

ExperimentConfig parse_experiment_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  require_keys(j, {"version", "experiment", "seed", "sampling", "grid", "model"},
               {"version", "experiment", "seed", "sampling", "grid", "noise_levels",
                "library", "solver", "windows", "model", "state_index", "target_index",
                "training", "heat"},
               "");
  ExperimentConfig c;
  c.version = j.at("version").get<int>();
  if (c.version != 1) throw ConfigError("config version must be 1");
  c.kind = j.at("experiment").get<std::string>();
  if (c.kind != "app1" && c.kind != "app2" && c.kind != "app3")
    throw ConfigError("experiment must be app1, app2 or app3");
  c.seed = j.at("seed").get<std::uint64_t>();

  const json& sampling = j.at("sampling");
  require_keys(sampling, {"count"},
               {"count", "train_count", "train_fraction", "test_count"}, "sampling.");
  c.count = sampling.at("count").get<int>();
  c.train_count = sampling.value("train_count", 0);
  c.train_fraction = sampling.value("train_fraction", 0.7);
  c.test_count = sampling.value("test_count", 0);
  if (c.count < 1) throw ConfigError("sampling.count must be >= 1");
  if (c.train_count > c.count) throw ConfigError("sampling.train_count exceeds count");

  const json& grid = j.at("grid");
  require_keys(grid, {"t_end", "steps"}, {"t_end", "steps", "test_t_end", "test_steps"},
               "grid.");
  c.t_end = grid.at("t_end").get<double>();
  c.steps = grid.at("steps").get<int>();
  c.test_t_end = grid.value("test_t_end", 0.0);
  c.test_steps = grid.value("test_steps", 0);

  c.noise_levels = j.value("noise_levels", std::vector<double>{0.0});
  for (double lv : c.noise_levels)
    if (lv < 0) throw ConfigError("noise_levels must be >= 0");

  if (j.contains("library")) {
    require_keys(j["library"], {}, {"degree"}, "library.");
    c.poly_degree = j["library"].value("degree", 3);
  }
  if (j.contains("solver")) c.solver = parse_solver(j["solver"]);

  if (j.contains("windows")) {
    require_keys(j["windows"], {}, {"width", "sizes", "horizons"}, "windows.");
    c.window_width = j["windows"].value("width", 10);
    c.window_sizes = j["windows"].value("sizes", std::vector<int>{});
    c.horizons = j["windows"].value("horizons", std::vector<int>{1, 2, 3, 4});
  }

  c.model = ModelConfig::from_json(j.at("model").dump());
  c.state_index = j.value("state_index", -1);
  c.target_index = j.value("target_index", 1);
  if (j.contains("training")) {
    c.plan = parse_plan(j["training"]);
    c.plan.seed = c.seed;
  }
  if (j.contains("heat")) c.heat = parse_heat(j["heat"]);

  c.config_text = j.dump();
  return c;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  return parse_experiment_config(read_file(path));
}

std::string ExperimentConfig::hash() const { return hash_hex(fnv1a64(config_text)); }

std::string ExperimentConfig::dataset_fingerprint() const {
  json j;
  j["kind"] = kind;
  j["seed"] = seed;
  j["count"] = count;
  j["train_count"] = train_count;
  j["train_fraction"] = train_fraction;
  j["test_count"] = test_count;
  j["noise_levels"] = noise_levels;
  j["t_end"] = t_end;
  j["steps"] = steps;
  j["test_t_end"] = test_t_end;
  j["test_steps"] = test_steps;
  j["poly_degree"] = poly_degree;
  j["threshold"] = solver.threshold;
  j["ridge"] = solver.ridge;
  j["window_width"] = window_width;
  if (kind == "app3") {
    j["heat"] = {heat.length, static_cast<double>(heat.node_count), heat.half_width,
                 heat.flux,   heat.t_max,                           heat.t_initial,
                 heat.dt,     heat.horizon};
  }
  return hash_hex(fnv1a64(j.dump()));
}

// ---------------------------------------------------------------------------
// Generators
// ---------------------------------------------------------------------------

std::vector<Trajectory> generate_prey_predator_set(const ExperimentConfig& config) {
  Mat samples = sobol_sample(3, config.count, prey_predator_bounds());
  std::vector<double> grid = uniform_grid(0.0, config.t_end, config.steps);
  std::vector<Trajectory> out;
  out.reserve(static_cast<std::size_t>(config.count));
  for (int i = 0; i < config.count; ++i) {
    LotkaVolterraParams params;
    params.control = samples(i, 0);
    Trajectory traj = simulate_lotka_volterra(params, samples(i, 1), samples(i, 2), grid);
    json prov = json::parse(traj.provenance);
    prov["index"] = i;
    prov["seed"] = config.seed;
    traj.provenance = prov.dump();
    out.push_back(std::move(traj));
  }
  return out;
}

std::vector<LorenzSample> generate_lorenz_set(const ExperimentConfig& config,
                                              double noise_level, bool test_grid) {
  Mat samples = sobol_sample(6, config.count, lorenz_bounds());
  double t_end = test_grid && config.test_t_end > 0 ? config.test_t_end : config.t_end;
  int steps = test_grid && config.test_steps > 0 ? config.test_steps : config.steps;
  std::vector<double> grid = uniform_grid(0.0, t_end, steps);

  std::vector<LorenzSample> out;
  out.reserve(static_cast<std::size_t>(config.count));
  for (int i = 0; i < config.count; ++i) {
    LorenzParams params{samples(i, 0), samples(i, 1), samples(i, 2)};
    LorenzSample sample;
    sample.truth = {params.sigma, params.rho, params.beta};
    Trajectory clean =
        simulate_lorenz(params, samples(i, 3), samples(i, 4), samples(i, 5), grid);
    NoiseSpec noise{noise_level,
                    derive_seed(config.seed, "noise/" + noise_dir_name(noise_level) + "/" +
                                                 std::to_string(i))};
    sample.trajectory = add_noise(clean, noise);
    json prov = json::parse(sample.trajectory.provenance);
    prov["index"] = i;
    prov["seed"] = config.seed;
    prov["noise_level"] = noise_level;
    sample.trajectory.provenance = prov.dump();

    // Labels always come from the training span of the data itself.
    Eigen::Index train_len = sample.trajectory.length();
    if (test_grid && config.test_t_end > config.t_end) {
      train_len = static_cast<Eigen::Index>(
          std::llround(config.t_end / (t_end / static_cast<double>(steps))));
      train_len = std::min(train_len, sample.trajectory.length());
    }
    Trajectory train_slice;
    train_slice.times.assign(sample.trajectory.times.begin(),
                             sample.trajectory.times.begin() + train_len);
    train_slice.states = sample.trajectory.states.topRows(train_len);
    train_slice.controls = Mat(train_len, 0);
    sample.label = noise_level == 0.0 ? identify_lorenz_constrained(train_slice)
                                      : identify_lorenz_denoised(train_slice);
    out.push_back(std::move(sample));
  }
  return out;
}

std::vector<HeatSample> generate_heat_set(const ExperimentConfig& config, int count,
                                          double noise_level, std::uint64_t index_offset) {
  // Abnormality center from the low-discrepancy sequence; the other two
  // characteristics from clipped normals (re-drawn until inside the range).
  Mat centers = sobol_sample(1, count, {{0.001, 0.009}}, index_offset);
  std::vector<HeatSample> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    const std::uint64_t run_id = index_offset + static_cast<std::uint64_t>(i);
    RngStream rng(config.seed, "heat/run/" + std::to_string(run_id));
    HeatSample sample;
    sample.problem = config.heat;
    sample.problem.center = centers(i, 0);
    do {
      sample.problem.alpha_ref = rng.normal(1e-6, 5e-8);
    } while (sample.problem.alpha_ref < 8e-7 || sample.problem.alpha_ref > 1.2e-6);
    do {
      sample.problem.ratio = rng.normal(60.0, 8.0);
    } while (sample.problem.ratio < 40.0 || sample.problem.ratio > 80.0);

    Trajectory run = simulate_heat_1d(sample.problem);
    NoiseSpec noise{noise_level, derive_seed(config.seed, "heat/noise/" +
                                                              noise_dir_name(noise_level) +
                                                              "/" + std::to_string(run_id))};
    sample.run = add_noise(run, noise);
    json prov = json::parse(sample.run.provenance);
    prov["index"] = run_id;
    prov["seed"] = config.seed;
    prov["noise_level"] = noise_level;
    sample.run.provenance = prov.dump();
    out.push_back(std::move(sample));
  }
  return out;
}

// ---------------------------------------------------------------------------
// generate
// ---------------------------------------------------------------------------

namespace {

json label_entry(const CoefficientMatrix& xi, int trajectory, Eigen::Index start,
                 Eigen::Index length) {
  json e;
  e["trajectory"] = trajectory;
  e["start"] = start;
  e["length"] = length;
  std::vector<double> flat;
  std::vector<int> mask;
  for (Eigen::Index t = 0; t < xi.coeffs.rows(); ++t)
    for (Eigen::Index s = 0; s < xi.coeffs.cols(); ++s) {
      flat.push_back(xi.coeffs(t, s));
      mask.push_back(xi.active(static_cast<int>(t), static_cast<int>(s)) ? 1 : 0);
    }
  e["xi"] = flat;
  e["mask"] = mask;
  e["degenerate"] = xi.degenerate;
  e["library_hash"] = hash_hex(xi.library_hash);
  return e;
}

void add_manifest_file(json& files, const std::string& root, const std::string& rel) {
  files[rel] = hash_hex(fnv1a64(read_file(root + "/" + rel)));
}

}  // namespace

void cmd_generate(const ExperimentConfig& config, const std::string& out_dir, bool force) {
  ensure_output_dir(out_dir, force);
  json manifest;
  manifest["format"] = "sendi-dataset";
  manifest["kind"] = config.kind;
  manifest["seed"] = config.seed;
  manifest["fingerprint"] = config.dataset_fingerprint();
  manifest["config_hash"] = config.hash();
  json files = json::object();

  if (config.kind == "app1") {
    fs::create_directories(fs::path(out_dir) / "trajectories");
    std::vector<Trajectory> trajs = generate_prey_predator_set(config);
    FeatureLibrary lib = FeatureLibrary::polynomial({"x", "y", "c"}, config.poly_degree);
    write_file(out_dir + "/library.json", lib.to_json());
    add_manifest_file(files, out_dir, "library.json");

    json labels = json::array();
    int window_count = 0;
    for (int i = 0; i < static_cast<int>(trajs.size()); ++i) {
      char name[64];
      std::snprintf(name, sizeof(name), "trajectories/traj_%05d.csv", i);
      save_trajectory_csv(trajs[static_cast<std::size_t>(i)], out_dir + "/" + name);
      add_manifest_file(files, out_dir, name);
      for (const Window& w : make_windows(trajs[static_cast<std::size_t>(i)],
                                          config.window_width, WindowMode::fixed, 0, i)) {
        CoefficientMatrix xi =
            identify_local(trajs[static_cast<std::size_t>(i)], w, lib, config.solver);
        labels.push_back(label_entry(xi, i, w.start, w.length));
        ++window_count;
      }
    }
    write_file(out_dir + "/labels.json", labels.dump(1));
    add_manifest_file(files, out_dir, "labels.json");
    manifest["counts"] = {{"trajectories", trajs.size()}, {"windows", window_count}};
  } else if (config.kind == "app2") {
    for (double level : config.noise_levels) {
      const std::string sub = noise_dir_name(level);
      fs::create_directories(fs::path(out_dir) / sub);
      std::vector<LorenzSample> systems = generate_lorenz_set(config, level, true);
      json labels = json::array();
      for (int i = 0; i < static_cast<int>(systems.size()); ++i) {
        char name[64];
        std::snprintf(name, sizeof(name), "%s/traj_%05d.csv", sub.c_str(), i);
        save_trajectory_csv(systems[static_cast<std::size_t>(i)].trajectory,
                            out_dir + "/" + name);
        add_manifest_file(files, out_dir, name);
        const LorenzSample& s = systems[static_cast<std::size_t>(i)];
        labels.push_back({{"index", i},
                          {"sigma", s.label.sigma},
                          {"rho", s.label.rho},
                          {"beta", s.label.beta},
                          {"true_sigma", s.truth.sigma},
                          {"true_rho", s.truth.rho},
                          {"true_beta", s.truth.beta}});
      }
      write_file(out_dir + "/" + sub + "/labels.json", labels.dump(1));
      add_manifest_file(files, out_dir, sub + "/labels.json");
    }
    manifest["counts"] = {{"systems", config.count},
                          {"noise_variants", config.noise_levels.size()}};
  } else if (config.kind == "app3") {
    fs::create_directories(fs::path(out_dir) / "runs");
    fs::create_directories(fs::path(out_dir) / "test_runs");
    auto dump_runs = [&](const std::vector<HeatSample>& runs, const std::string& sub) {
      json labels = json::array();
      for (int i = 0; i < static_cast<int>(runs.size()); ++i) {
        char name[64];
        std::snprintf(name, sizeof(name), "%s/run_%04d.csv", sub.c_str(), i);
        save_trajectory_csv(runs[static_cast<std::size_t>(i)].run, out_dir + "/" + name);
        add_manifest_file(files, out_dir, name);
        const HeatProblem& p = runs[static_cast<std::size_t>(i)].problem;
        labels.push_back({{"index", i},
                          {"center", p.center},
                          {"ratio", p.ratio},
                          {"alpha_ref", p.alpha_ref}});
      }
      write_file(out_dir + "/" + sub + "/labels.json", labels.dump(1));
      add_manifest_file(files, out_dir, sub + "/labels.json");
    };
    dump_runs(generate_heat_set(config, config.count, 0.0, 0), "runs");
    dump_runs(generate_heat_set(config, config.test_count, 0.0,
                                static_cast<std::uint64_t>(config.count)),
              "test_runs");
    manifest["counts"] = {{"runs", config.count}, {"test_runs", config.test_count}};
  } else {
    throw ConfigError("generate: unsupported experiment kind " + config.kind);
  }
  manifest["files"] = std::move(files);
  write_file(out_dir + "/manifest.json", manifest.dump(1));
}

// ---------------------------------------------------------------------------
// load
// ---------------------------------------------------------------------------

Dataset load_dataset(const ExperimentConfig& config, const std::string& dataset_dir,
                     double noise_level) {
  json manifest = json::parse(read_file(dataset_dir + "/manifest.json"));
  if (manifest.value("fingerprint", std::string{}) != config.dataset_fingerprint())
    throw DataError("dataset is stale: manifest fingerprint does not match the config");
  Dataset ds;
  ds.kind = config.kind;
  ds.fingerprint = manifest["fingerprint"].get<std::string>();

  if (config.kind == "app1") {
    for (int i = 0;; ++i) {
      char name[64];
      std::snprintf(name, sizeof(name), "%s/trajectories/traj_%05d.csv",
                    dataset_dir.c_str(), i);
      if (!fs::exists(name)) break;
      ds.trajectories.push_back(load_trajectory_csv(name));
    }
    if (ds.trajectories.empty()) throw DataError("dataset has no trajectories");
  } else if (config.kind == "app2") {
    const std::string sub = noise_dir_name(noise_level);
    json labels = json::parse(read_file(dataset_dir + "/" + sub + "/labels.json"));
    for (const auto& e : labels) {
      int i = e.at("index").get<int>();
      char name[64];
      std::snprintf(name, sizeof(name), "%s/%s/traj_%05d.csv", dataset_dir.c_str(),
                    sub.c_str(), i);
      LorenzSample s;
      s.trajectory = load_trajectory_csv(name);
      s.label = {e.at("sigma").get<double>(), e.at("rho").get<double>(),
                 e.at("beta").get<double>()};
      s.truth = {e.at("true_sigma").get<double>(), e.at("true_rho").get<double>(),
                 e.at("true_beta").get<double>()};
      ds.lorenz_systems.push_back(std::move(s));
    }
  } else if (config.kind == "app3") {
    auto load_runs = [&](const std::string& sub, std::vector<HeatSample>& into) {
      json labels = json::parse(read_file(dataset_dir + "/" + sub + "/labels.json"));
      for (const auto& e : labels) {
        int i = e.at("index").get<int>();
        char name[64];
        std::snprintf(name, sizeof(name), "%s/%s/run_%04d.csv", dataset_dir.c_str(),
                      sub.c_str(), i);
        HeatSample s;
        s.problem = config.heat;
        s.problem.center = e.at("center").get<double>();
        s.problem.ratio = e.at("ratio").get<double>();
        s.problem.alpha_ref = e.at("alpha_ref").get<double>();
        s.run = load_trajectory_csv(name);
        if (noise_level > 0) {
          NoiseSpec noise{noise_level,
                          derive_seed(config.seed, "heat/noise/" + noise_dir_name(noise_level) +
                                                       "/" + std::to_string(i))};
          s.run = add_noise(s.run, noise);
        }
        into.push_back(std::move(s));
      }
    };
    load_runs("runs", ds.heat_runs);
    load_runs("test_runs", ds.heat_test_runs);
  }
  return ds;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

namespace {

SplitDataset assemble_for(const ExperimentConfig& config, const Dataset& ds) {
  if (config.kind == "app1") {
    FeatureLibrary lib = FeatureLibrary::polynomial({"x", "y", "c"}, config.poly_degree);
    int train_count = config.train_count > 0
                          ? config.train_count
                          : static_cast<int>(std::llround(
                                config.train_fraction *
                                static_cast<double>(ds.trajectories.size())));
    return assemble_next_window(ds.trajectories, lib, config.solver, config.window_width,
                                config.state_index, train_count);
  }
  if (config.kind == "app2") {
    std::vector<int> sizes = config.window_sizes;
    if (sizes.empty()) sizes = {100, 300, 500, 700, 900};
    // Training windows must stay inside the training time span.
    std::vector<LorenzSample> clipped = ds.lorenz_systems;
    for (LorenzSample& s : clipped) {
      double dt = s.trajectory.dt();
      Eigen::Index train_len = std::min<Eigen::Index>(
          s.trajectory.length(), static_cast<Eigen::Index>(std::llround(config.t_end / dt)));
      s.trajectory.states.conservativeResize(train_len, Eigen::NoChange);
      s.trajectory.times.resize(static_cast<std::size_t>(train_len));
      s.trajectory.controls = Mat(train_len, 0);
    }
    return assemble_lorenz_windows(clipped, sizes, config.target_index,
                                   config.train_fraction);
  }
  if (config.kind == "app3") {
    std::vector<int> sizes = config.window_sizes;
    if (sizes.empty()) sizes = {50, 100, 150, 200};
    return assemble_heat_windows(ds.heat_runs, sizes, config.train_fraction);
  }
  throw ConfigError("train: unsupported experiment kind " + config.kind);
}

}  // namespace

void cmd_train(const ExperimentConfig& config, const std::string& dataset_dir,
               const std::string& run_dir, bool force, bool dry_run, bool resume,
               double noise_level) {
  if (dry_run) {
    json j;
    j["experiment"] = config.kind;
    j["stages"] = stages_to_json(config.plan);
    j["total_epochs"] = config.plan.total_epochs();
    j["batch_size"] = config.plan.batch_size;
    j["lambda_ode"] = config.plan.lambda_ode;
    j["lambda_reg"] = config.plan.lambda_reg;
    j["model"] = json::parse(config.model.to_json());
    j["noise_level"] = noise_level;
    std::cout << j.dump(1) << "\n";
    return;
  }
  if (!resume) ensure_output_dir(run_dir, force);

  Dataset ds = load_dataset(config, dataset_dir, noise_level);
  SplitDataset split = assemble_for(config, ds);
  if (split.skipped > 0)
    std::cerr << "train: skipped " << split.skipped << " windows during assembly\n";

  ModelConfig mc = config.model;
  mc.seed = derive_seed(config.seed, "model/init");
  fit_normalization(mc, split.train);
  std::unique_ptr<SetModel> model = SetModel::build(mc);

  TrainingPlan plan = config.plan;
  int completed = 0;
  if (resume) {
    json state = json::parse(read_file(run_dir + "/state.json"));
    completed = state.at("completed_epochs").get<int>();
    if (state.value("dataset_fingerprint", std::string{}) != ds.fingerprint)
      throw DataError("resume: run directory belongs to a different dataset");
    Checkpoint last = load_checkpoint(run_dir + "/checkpoint_last.json");
    model = SetModel::deserialize(last);
    // Drop the stages that already ran.
    std::vector<LrStage> remaining;
    int seen = 0;
    for (const LrStage& s : plan.stages) {
      if (seen + s.epochs <= completed) {
        seen += s.epochs;
        continue;
      }
      LrStage cut = s;
      cut.epochs = s.epochs - std::max(0, completed - seen);
      seen += s.epochs;
      remaining.push_back(cut);
    }
    plan.stages = remaining;
  }

  TrainResult result;
  if (plan.total_epochs() > 0 && !plan.stages.empty()) {
    result = train(*model, plan, split.train, split.valid);
  } else {
    result.best = model->serialize();
    result.best_valid_loss = dataset_loss(*model, split.valid, plan);
  }

  save_checkpoint(run_dir + "/checkpoint_best.json", result.best);
  Checkpoint last = model->serialize();
  save_checkpoint(run_dir + "/checkpoint_last.json", last);
  write_curves_csv(run_dir + "/curves.csv", result.curves);

  json state;
  state["completed_epochs"] = completed + static_cast<int>(result.curves.size());
  state["dataset_fingerprint"] = ds.fingerprint;
  state["config_hash"] = config.hash();
  state["best_valid_loss"] = result.best_valid_loss;
  state["aborted"] = result.aborted;
  if (result.aborted) state["diagnostic"] = result.diagnostic;
  write_file(run_dir + "/state.json", state.dump(1));

  json planj;
  planj["stages"] = stages_to_json(config.plan);
  planj["batch_size"] = config.plan.batch_size;
  planj["lambda_ode"] = config.plan.lambda_ode;
  planj["lambda_reg"] = config.plan.lambda_reg;
  planj["noise_level"] = noise_level;
  planj["config_hash"] = config.hash();
  planj["dataset_fingerprint"] = ds.fingerprint;
  write_file(run_dir + "/plan.json", planj.dump(1));

  if (result.aborted)
    throw NumericError("training aborted: " + result.diagnostic +
                       " (last good checkpoint written)");
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

namespace {

std::map<std::pair<int, long>, Mat> load_label_table(const std::string& dataset_dir,
                                                     int terms, int states) {
  std::map<std::pair<int, long>, Mat> table;
  json labels = json::parse(read_file(dataset_dir + "/labels.json"));
  for (const auto& e : labels) {
    Mat xi(terms, states);
    const auto flat = e.at("xi").get<std::vector<double>>();
    if (static_cast<int>(flat.size()) != terms * states)
      throw DataError("labels.json: coefficient block size mismatch");
    for (int t = 0; t < terms; ++t)
      for (int s = 0; s < states; ++s)
        xi(t, s) = flat[static_cast<std::size_t>(t * states + s)];
    table[{e.at("trajectory").get<int>(), e.at("start").get<long>()}] = xi;
  }
  return table;
}

}  // namespace

void cmd_evaluate(const ExperimentConfig& config, const std::string& run_dir,
                  const std::string& dataset_dir, const std::string& out_dir, bool force,
                  bool oracle, double noise_level) {
  ensure_output_dir(out_dir, force);
  Dataset ds = load_dataset(config, dataset_dir, noise_level);

  std::unique_ptr<SetModel> model;
  std::string method = "oracle";
  if (!oracle) {
    Checkpoint ckpt = load_checkpoint(run_dir + "/checkpoint_best.json");
    if (!ckpt.config_hash.empty()) {
      json state = json::parse(read_file(run_dir + "/state.json"));
      if (state.value("config_hash", std::string{}) != config.hash())
        std::cerr << "evaluate: warning: run config hash differs from this config\n";
    }
    model = SetModel::deserialize(ckpt);
    method = to_string(model->config().kind);
  }

  if (config.kind == "app1") {
    FeatureLibrary lib = FeatureLibrary::polynomial({"x", "y", "c"}, config.poly_degree);
    const int terms = lib.term_count();
    if (!oracle && model->config().total_output_dim() != terms * 2)
      throw ConfigError("evaluate: checkpoint does not predict a full coefficient block");
    auto label_table = load_label_table(dataset_dir, terms, 2);

    CoefficientPredictor predictor;
    if (oracle) {
      predictor = [&](const Trajectory& traj, const Window& w) -> Mat {
        json prov = json::parse(traj.provenance);
        auto it = label_table.find({prov.at("index").get<int>(),
                                    static_cast<long>(w.start + w.length)});
        if (it == label_table.end())
          throw DataError("oracle: no label for the successor window");
        return it->second;
      };
    } else {
      predictor = [&](const Trajectory& traj, const Window& w) -> Mat {
        Mat inputs = build_window_inputs(traj, w);
        Vec pred = model->predict(inputs);
        Mat xi(terms, 2);
        for (int t = 0; t < terms; ++t)
          for (int s = 0; s < 2; ++s) xi(t, s) = pred(t * 2 + s);
        return xi;
      };
    }

    int train_count = config.train_count > 0
                          ? config.train_count
                          : static_cast<int>(std::llround(
                                config.train_fraction *
                                static_cast<double>(ds.trajectories.size())));
    std::ofstream out(out_dir + "/results.csv");
    out << "window,horizon,channel,method,metric,mean,median,p90,divergence_pct,"
           "outliers_removed\n";
    for (int h : config.horizons) {
      std::vector<std::vector<double>> mape_vals(2), smape_vals(2);
      std::vector<std::vector<bool>> flags(2);
      for (int ti = train_count; ti < static_cast<int>(ds.trajectories.size()); ++ti) {
        const Trajectory& traj = ds.trajectories[static_cast<std::size_t>(ti)];
        std::vector<Window> windows =
            make_windows(traj, config.window_width, WindowMode::fixed, 0, ti);
        for (std::size_t k = 0; k + 1 < windows.size(); ++k) {
          const Window& w = windows[k];
          Eigen::Index anchor = w.start + w.length - 1;
          if (anchor + static_cast<Eigen::Index>(h) * (w.length - 1) >= traj.length())
            continue;
          ForecastResult fr;
          try {
            fr = forecast(predictor, traj, w, lib, h);
          } catch (const DataError&) {
            continue;  // no label for the final window
          }
          for (int ch = 0; ch < 2; ++ch) {
            flags[static_cast<std::size_t>(ch)].push_back(fr.diverged);
            mape_vals[static_cast<std::size_t>(ch)].push_back(
                fr.diverged ? 0.0 : fr.mape_per_channel[static_cast<std::size_t>(ch)]);
            smape_vals[static_cast<std::size_t>(ch)].push_back(
                fr.diverged ? 0.0 : fr.smape_per_channel[static_cast<std::size_t>(ch)]);
          }
        }
      }
      const char* channel_names[2] = {"x", "y"};
      for (int ch = 0; ch < 2; ++ch) {
        MetricSummary ms = summarize(mape_vals[static_cast<std::size_t>(ch)],
                                     flags[static_cast<std::size_t>(ch)],
                                     OutlierPolicy::zscore);
        out << config.window_width << "," << h << "," << channel_names[ch] << "," << method
            << ",mape," << ms.mean << "," << ms.median << "," << ms.p90 << ","
            << ms.divergence_pct << "," << ms.outliers_removed << "\n";
        MetricSummary ss = summarize(smape_vals[static_cast<std::size_t>(ch)],
                                     flags[static_cast<std::size_t>(ch)],
                                     OutlierPolicy::none);
        out << config.window_width << "," << h << "," << channel_names[ch] << "," << method
            << ",smape," << ss.mean << "," << ss.median << "," << ss.p90 << ","
            << ss.divergence_pct << "," << ss.outliers_removed << "\n";
      }
    }
  } else if (config.kind == "app2") {
    if (oracle) throw ConfigError("evaluate: oracle mode applies to app1 only");
    std::vector<int> sizes = config.window_sizes;
    if (sizes.empty()) sizes = {100, 300, 500, 700, 900};
    const int train_count = static_cast<int>(
        std::llround(config.train_fraction * static_cast<double>(ds.lorenz_systems.size())));

    std::ofstream out(out_dir + "/r2.csv");
    out << "section,size,r2\n";
    for (const std::string& section : {std::string("interpolation"), std::string("extrapolation")}) {
      std::vector<double> scores;
      std::vector<int> score_sizes;
      for (int n : sizes) {
        std::vector<double> pred, truth;
        for (int si = train_count; si < static_cast<int>(ds.lorenz_systems.size()); ++si) {
          const LorenzSample& s = ds.lorenz_systems[static_cast<std::size_t>(si)];
          double dt = s.trajectory.dt();
          Eigen::Index start = 0;
          if (section == "extrapolation") {
            start = static_cast<Eigen::Index>(std::llround(config.t_end / dt));
            if (start + n > s.trajectory.length()) continue;
          } else if (n > std::llround(config.t_end / dt)) {
            continue;
          }
          Mat inputs(n, 4);
          for (int i = 0; i < n; ++i) {
            inputs(i, 0) = s.trajectory.times[static_cast<std::size_t>(start + i)];
            inputs(i, 1) = s.trajectory.states(start + i, 0);
            inputs(i, 2) = s.trajectory.states(start + i, 1);
            inputs(i, 3) = s.trajectory.states(start + i, 2);
          }
          double p = model->predict(inputs)(0);
          double t = config.target_index == 0   ? s.truth.sigma
                     : config.target_index == 1 ? s.truth.rho
                                                : s.truth.beta;
          pred.push_back(p);
          truth.push_back(t);
        }
        if (pred.size() < 2) continue;
        double score = r2(Eigen::Map<Vec>(pred.data(), static_cast<Eigen::Index>(pred.size())),
                          Eigen::Map<Vec>(truth.data(), static_cast<Eigen::Index>(truth.size())));
        out << section << "," << n << "," << score << "\n";
        scores.push_back(score);
        score_sizes.push_back(n);
      }
      if (!scores.empty())
        out << section << ",weighted," << weighted_r2(scores, score_sizes) << "\n";
    }
  } else if (config.kind == "app3") {
    if (oracle) throw ConfigError("evaluate: oracle mode applies to app1 only");
    std::vector<int> sizes = config.window_sizes;
    if (sizes.empty()) sizes = {50, 100, 150, 200};
    SplitDataset test = assemble_heat_windows(ds.heat_test_runs, sizes, 0.0);

    std::ofstream out(out_dir + "/r2.csv");
    out << "characteristic,size,r2\n";
    const char* names[3] = {"center", "ratio", "alpha_ref"};
    for (int c = 0; c < 3; ++c) {
      std::vector<double> scores;
      std::vector<int> score_sizes;
      for (int n : sizes) {
        std::vector<double> pred, truth;
        for (const LabeledWindow& w : test.valid) {
          if (w.inputs.rows() != 2 * n) continue;
          Vec p = model->predict(w.inputs);
          pred.push_back(p(c));
          truth.push_back(w.target(c));
        }
        if (pred.size() < 2) continue;
        double score = r2(Eigen::Map<Vec>(pred.data(), static_cast<Eigen::Index>(pred.size())),
                          Eigen::Map<Vec>(truth.data(), static_cast<Eigen::Index>(truth.size())));
        out << names[c] << "," << n << "," << score << "\n";
        scores.push_back(score);
        score_sizes.push_back(n);
      }
      if (!scores.empty())
        out << names[c] << ",weighted," << weighted_r2(scores, score_sizes) << "\n";
    }
  }
}

// ---------------------------------------------------------------------------
// identify / report
// ---------------------------------------------------------------------------

IdentifyResult cmd_identify(const std::string& checkpoint_path,
                            const std::string& window_csv, const std::string& out_json,
                            int reps) {
  Checkpoint ckpt = load_checkpoint(checkpoint_path);
  std::unique_ptr<SetModel> model = SetModel::deserialize(ckpt);

  // Plain numeric CSV; an optional header row is skipped.
  std::ifstream in(window_csv);
  if (!in) throw DataError("identify: cannot open window file: " + window_csv);
  std::vector<std::vector<double>> rows;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (first && line.find_first_not_of("0123456789+-.eE, \t\r") != std::string::npos) {
      first = false;
      continue;
    }
    first = false;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> row;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw UsageError("identify: window file has no data rows");
  const int cols = static_cast<int>(rows.front().size());
  if (cols != model->config().input_dim)
    throw ConfigError("identify: window has " + std::to_string(cols) +
                      " features, checkpoint expects " +
                      std::to_string(model->config().input_dim));
  Mat window(static_cast<Eigen::Index>(rows.size()), cols);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (static_cast<int>(rows[i].size()) != cols)
      throw DataError("identify: ragged window file");
    for (int j = 0; j < cols; ++j) window(static_cast<Eigen::Index>(i), j) = rows[i][static_cast<std::size_t>(j)];
  }

  IdentifyResult result;
  result.config_hash = model->config().hash();
  result.prediction = model->predict(window);  // warm-up
  std::vector<double> times_ms;
  times_ms.reserve(static_cast<std::size_t>(reps));
  for (int r = 0; r < reps; ++r) {
    auto t0 = std::chrono::steady_clock::now();
    result.prediction = model->predict(window);
    auto t1 = std::chrono::steady_clock::now();
    times_ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  result.median_ms = percentile(times_ms, 50.0);

  json j;
  j["prediction"] = std::vector<double>(result.prediction.data(),
                                        result.prediction.data() + result.prediction.size());
  j["median_inference_ms"] = result.median_ms;
  j["reps"] = reps;
  j["config_hash"] = result.config_hash;
  j["window"] = {{"path", window_csv}, {"rows", rows.size()}, {"columns", cols}};
  if (!out_json.empty())
    write_file(out_json, j.dump(1));
  else
    std::cout << j.dump(1) << "\n";
  return result;
}

void cmd_report(const std::string& results_dir) {
  bool any = false;
  for (const auto& entry : fs::recursive_directory_iterator(results_dir)) {
    if (!entry.is_regular_file()) continue;
    std::string name = entry.path().filename().string();
    if (name != "results.csv" && name != "r2.csv" && name != "curves.csv") continue;
    any = true;
    std::cout << "== " << fs::relative(entry.path(), results_dir).string() << "\n";
    if (name == "curves.csv") {
      // Only the last line of long curves is interesting at report level.
      std::ifstream in(entry.path());
      std::string line, header, last;
      std::getline(in, header);
      while (std::getline(in, line))
        if (!line.empty()) last = line;
      std::cout << header << "\n" << last << "\n";
    } else {
      std::cout << read_file(entry.path().string());
    }
    std::cout << "\n";
  }
  if (!any) std::cout << "no result files under " << results_dir << "\n";
}

// ---------------------------------------------------------------------------
// Presets
// ---------------------------------------------------------------------------

std::string preset_config(const std::string& name) {
  if (name == "app1") {
    return R"JSON({
  "version": 1,
  "experiment": "app1",
  "seed": 7,
  "sampling": { "count": 278, "train_count": 166 },
  "grid": { "t_end": 30.0, "steps": 300 },
  "noise_levels": [0.0],
  "library": { "degree": 3 },
  "solver": { "kind": "stlsq", "threshold": 0.001, "ridge": 1e-10, "max_iters": 20 },
  "windows": { "width": 10, "horizons": [1, 2, 3, 4] },
  "state_index": -1,
  "model": {
    "kind": "set_transformer", "input_dim": 4, "output_dim": 40,
    "model_dim": 32, "heads": 4, "inducing_points": 0, "encoder_blocks": 2,
    "rff_layers": 2, "rff_activation": "relu", "decoder_self_attention": true,
    "head_widths": [256, 256, 256], "activation": "relu"
  },
  "training": {
    "stages": [[1e-3, 2000], [4e-4, 2000], [1e-4, 4000], [1e-5, 2000],
               [1e-6, 2000], [1e-7, 2000], [1e-8, 2000]],
    "batch_size": 64, "lambda_ode": 1.0, "lambda_reg": 1e-6
  }
})JSON";
  }
  if (name == "app2") {
    return R"JSON({
  "version": 1,
  "experiment": "app2",
  "seed": 11,
  "sampling": { "count": 1024, "train_fraction": 0.7 },
  "grid": { "t_end": 10.0, "steps": 1000, "test_t_end": 20.0, "test_steps": 2000 },
  "noise_levels": [0.0, 0.02, 0.05],
  "windows": { "sizes": [100, 300, 500, 700, 900] },
  "target_index": 1,
  "model": {
    "kind": "deep_set", "input_dim": 4, "output_dim": 1,
    "encoder_widths": [320, 320, 320, 320, 320],
    "decoder_widths": [320, 320, 320, 320, 320],
    "activation": "relu", "pool": "absmean"
  },
  "training": {
    "stages": [[4e-4, 400], [5e-5, 400], [1e-5, 400], [5e-6, 400], [1e-6, 400]],
    "batch_size": 64, "lambda_ode": 1.0, "lambda_reg": 0.0
  }
})JSON";
  }
  if (name == "app3") {
    return R"JSON({
  "version": 1,
  "experiment": "app3",
  "seed": 23,
  "sampling": { "count": 300, "train_fraction": 0.7, "test_count": 150 },
  "grid": { "t_end": 200.0, "steps": 200 },
  "noise_levels": [0.0, 0.02, 0.05, 0.1],
  "windows": { "sizes": [50, 100, 150, 200] },
  "heat": {
    "length": 0.01, "node_count": 101, "alpha_ref": 1e-6, "center": 0.005,
    "ratio": 60.0, "half_width": 0.001, "flux": 30000.0, "t_max": 500.0,
    "t_initial": 20.0, "dt": 1.0, "horizon": 200.0
  },
  "model": {
    "kind": "deep_set", "input_dim": 3, "output_dim": 1, "decoder_heads": 3,
    "encoder_widths": [256, 256, 256, 256, 256],
    "decoder_widths": [256, 256, 256, 256, 256],
    "activation": "gelu", "pool": "sum", "mlp_layer_norm": true
  },
  "training": {
    "stages": [[4e-4, 400], [5e-5, 400], [1e-5, 400], [5e-6, 400], [1e-6, 400]],
    "batch_size": 64, "lambda_ode": 0.0, "lambda_reg": 0.01
  }
})JSON";
  }
  if (name == "desk") {
    return R"JSON({
  "version": 1,
  "experiment": "app2",
  "seed": 31,
  "sampling": { "count": 160, "train_fraction": 0.8 },
  "grid": { "t_end": 10.0, "steps": 1000, "test_t_end": 20.0, "test_steps": 2000 },
  "noise_levels": [0.0],
  "windows": { "sizes": [100, 300, 500] },
  "target_index": 1,
  "model": {
    "kind": "deep_set", "input_dim": 4, "output_dim": 1,
    "encoder_widths": [64, 64], "decoder_widths": [64, 64],
    "activation": "relu", "pool": "absmean"
  },
  "training": {
    "stages": [[4e-4, 40], [5e-5, 40], [1e-5, 40], [5e-6, 40], [1e-6, 40]],
    "batch_size": 32, "lambda_ode": 1.0, "lambda_reg": 0.0
  }
})JSON";
  }
  throw ConfigError("unknown preset: " + name +
                    " (available: app1, app2, app3, desk)");
}

}  // namespace sendi
