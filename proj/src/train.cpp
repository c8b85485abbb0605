#include "sendi/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>

namespace sendi {

int TrainingPlan::total_epochs() const {
  int n = 0;
  for (const LrStage& s : stages) n += s.epochs;
  return n;
}

void TrainingPlan::validate() const {
  for (const LrStage& s : stages) {
    if (s.lr <= 0) throw ConfigError("plan: learning rates must be positive");
    if (s.epochs <= 0) throw ConfigError("plan: epochs must be positive");
  }
  if (batch_size < 1) throw ConfigError("plan: batch_size must be >= 1");
  if (lambda_ode < 0 || lambda_reg < 0)
    throw ConfigError("plan: loss weights must be >= 0");
}

std::uint64_t LabeledWindow::compute_label_hash() const {
  return fnv1a64(target.data(), sizeof(double) * static_cast<std::size_t>(target.size()));
}

Tensor composite_loss(Tape& tape, Tensor pred, const LabeledWindow& window,
                      double lambda_ode, double lambda_reg,
                      const std::vector<Param*>& params) {
  const Eigen::Index k = window.target.size();
  if (pred.cols() != k)
    throw DimensionError("loss: prediction/target size mismatch");
  Mat target_row(1, k);
  target_row.row(0) = window.target.transpose();
  Tensor diff = tape.sub(pred, tape.constant(target_row));
  Tensor loss = tape.scale(tape.sum_squares(diff), 1.0 / static_cast<double>(k));

  if (lambda_ode > 0 && window.theta.size() > 0) {
    const Eigen::Index terms = window.theta.cols();
    const Eigen::Index l = window.deriv_targets.cols();
    if (terms * l != k)
      throw DimensionError("loss: coefficient block does not match library shape");
    // Row-major unflatten of the prediction into a (terms x l) block.
    std::vector<Tensor> cols;
    cols.reserve(static_cast<std::size_t>(l));
    for (Eigen::Index j = 0; j < l; ++j) {
      std::vector<Tensor> entries;
      entries.reserve(static_cast<std::size_t>(terms));
      for (Eigen::Index t = 0; t < terms; ++t)
        entries.push_back(tape.slice_cols(pred, static_cast<int>(t * l + j), 1));
      // terms x 1 column assembled via transpose of the 1 x terms strip
      cols.push_back(tape.transpose(tape.concat_cols(entries)));
    }
    Tensor xi = cols.size() == 1 ? cols.front() : tape.concat_cols(cols);
    Tensor residual = tape.sub(tape.constant(window.deriv_targets),
                               tape.matmul(tape.constant(window.theta), xi));
    double count = static_cast<double>(window.deriv_targets.size());
    loss = tape.add(loss, tape.scale(tape.l1_norm(residual), lambda_ode / count));
  }

  if (lambda_reg > 0) {
    Tensor penalty;
    bool first = true;
    for (Param* p : params) {
      Tensor term = tape.l1_norm(tape.leaf(*p));
      penalty = first ? term : tape.add(penalty, term);
      first = false;
    }
    if (!first) loss = tape.add(loss, tape.scale(penalty, lambda_reg));
  }
  return loss;
}

double ode_residual_l1(SetModel& model, const std::vector<LabeledWindow>& windows) {
  double acc = 0;
  long count = 0;
  for (const LabeledWindow& w : windows) {
    if (w.theta.size() == 0) continue;
    Vec pred = model.predict(w.inputs);
    const Eigen::Index terms = w.theta.cols();
    const Eigen::Index l = w.deriv_targets.cols();
    Mat xi(terms, l);
    for (Eigen::Index t = 0; t < terms; ++t)
      for (Eigen::Index j = 0; j < l; ++j) xi(t, j) = pred(t * l + j);
    acc += (w.deriv_targets - w.theta * xi).cwiseAbs().sum();
    count += w.deriv_targets.size();
  }
  if (count == 0) throw UsageError("ode_residual: no windows carry library rows");
  return acc / static_cast<double>(count);
}

double dataset_loss(SetModel& model, const std::vector<LabeledWindow>& windows,
                    const TrainingPlan& plan) {
  if (windows.empty()) throw UsageError("dataset_loss: empty window set");
  std::vector<Param*> params = model.parameters();
  double acc = 0;
  for (const LabeledWindow& w : windows) {
    Tape tape;
    Tensor pred = model.forward(tape, w.inputs);
    Tensor loss = composite_loss(tape, pred, w, plan.lambda_ode, plan.lambda_reg, params);
    acc += tape.scalar(loss);
  }
  return acc / static_cast<double>(windows.size());
}

namespace {

// Batches of equal window length, order shuffled per epoch.
std::vector<std::vector<int>> make_batches(const std::vector<LabeledWindow>& set,
                                           int batch_size, RngStream& rng) {
  std::map<Eigen::Index, std::vector<int>> by_length;
  for (int i = 0; i < static_cast<int>(set.size()); ++i)
    by_length[set[static_cast<std::size_t>(i)].inputs.rows()].push_back(i);
  std::vector<std::vector<int>> batches;
  for (auto& [len, idx] : by_length) {
    std::shuffle(idx.begin(), idx.end(), rng.engine());
    for (std::size_t k = 0; k < idx.size(); k += static_cast<std::size_t>(batch_size)) {
      std::size_t end = std::min(idx.size(), k + static_cast<std::size_t>(batch_size));
      batches.emplace_back(idx.begin() + static_cast<long>(k),
                           idx.begin() + static_cast<long>(end));
    }
  }
  std::shuffle(batches.begin(), batches.end(), rng.engine());
  return batches;
}

}  // namespace

TrainResult train(SetModel& model, const TrainingPlan& plan,
                  const std::vector<LabeledWindow>& train_set,
                  const std::vector<LabeledWindow>& valid_set) {
  plan.validate();
  if (train_set.empty() || valid_set.empty())
    throw UsageError("train: empty train or validation split");

  std::vector<Param*> params = model.parameters();
  AdamState adam;
  TrainResult result;
  result.best = model.serialize();
  result.best_valid_loss = std::numeric_limits<double>::infinity();

  RngStream shuffle_rng(plan.seed, "train/shuffle");
  int epoch = 0;
  for (const LrStage& stage : plan.stages) {
    for (int e = 0; e < stage.epochs; ++e, ++epoch) {
      double train_loss_acc = 0;
      long train_loss_count = 0;
      for (const std::vector<int>& batch :
           make_batches(train_set, plan.batch_size, shuffle_rng)) {
        for (Param* p : params) p->zero_grad();
        Tape tape;
        Tensor total;
        bool first = true;
        for (int idx : batch) {
          const LabeledWindow& w = train_set[static_cast<std::size_t>(idx)];
          Tensor pred = model.forward(tape, w.inputs);
          Tensor loss =
              composite_loss(tape, pred, w, plan.lambda_ode, plan.lambda_reg, params);
          total = first ? loss : tape.add(total, loss);
          first = false;
        }
        total = tape.scale(total, 1.0 / static_cast<double>(batch.size()));
        double batch_loss = tape.scalar(total);
        if (!std::isfinite(batch_loss)) {
          result.aborted = true;
          result.diagnostic = "non-finite training loss at epoch " + std::to_string(epoch);
          return result;
        }
        tape.backward(total);
        try {
          adam.step(params, stage.lr);
        } catch (const NumericError& e) {
          result.aborted = true;
          result.diagnostic = e.what();
          return result;
        }
        train_loss_acc += batch_loss * static_cast<double>(batch.size());
        train_loss_count += static_cast<long>(batch.size());
      }

      double train_loss = train_loss_acc / static_cast<double>(train_loss_count);
      double valid_loss = dataset_loss(model, valid_set, plan);
      result.curves.push_back({epoch, train_loss, valid_loss, stage.lr});
      if (!std::isfinite(valid_loss)) {
        result.aborted = true;
        result.diagnostic = "non-finite validation loss at epoch " + std::to_string(epoch);
        return result;
      }
      if (valid_loss < result.best_valid_loss) {
        result.best_valid_loss = valid_loss;
        result.best = model.serialize();
        result.checkpoint_losses.push_back(valid_loss);
      }
    }
  }
  return result;
}

void write_curves_csv(const std::string& path, const std::vector<EpochRecord>& curves) {
  std::ofstream out(path);
  if (!out) throw DataError("curves: cannot open for writing: " + path);
  out << "epoch,train_loss,valid_loss,lr\n";
  out.precision(17);
  for (const EpochRecord& r : curves)
    out << r.epoch << "," << r.train_loss << "," << r.valid_loss << "," << r.lr << "\n";
}

void fit_normalization(ModelConfig& config, const std::vector<LabeledWindow>& train_set) {
  if (train_set.empty()) throw UsageError("fit_normalization: empty training set");
  const int f = static_cast<int>(train_set.front().inputs.cols());
  const int k = static_cast<int>(train_set.front().target.size());

  Vec in_mean = Vec::Zero(f), in_sq = Vec::Zero(f);
  long rows = 0;
  for (const LabeledWindow& w : train_set) {
    in_mean += w.inputs.colwise().sum().transpose();
    in_sq += w.inputs.array().square().colwise().sum().matrix().transpose();
    rows += w.inputs.rows();
  }
  in_mean /= static_cast<double>(rows);
  Vec in_std = (in_sq / static_cast<double>(rows) - in_mean.cwiseProduct(in_mean))
                   .cwiseMax(0.0)
                   .cwiseSqrt();

  Vec t_mean = Vec::Zero(k), t_sq = Vec::Zero(k);
  for (const LabeledWindow& w : train_set) {
    t_mean += w.target;
    t_sq += w.target.cwiseProduct(w.target);
  }
  t_mean /= static_cast<double>(train_set.size());
  Vec t_std = (t_sq / static_cast<double>(train_set.size()) - t_mean.cwiseProduct(t_mean))
                  .cwiseMax(0.0)
                  .cwiseSqrt();

  config.input_offset.assign(in_mean.data(), in_mean.data() + f);
  config.input_scale.resize(static_cast<std::size_t>(f));
  for (int j = 0; j < f; ++j)
    config.input_scale[static_cast<std::size_t>(j)] = in_std(j) > 1e-12 ? in_std(j) : 1.0;
  config.target_offset.assign(t_mean.data(), t_mean.data() + k);
  config.target_scale.resize(static_cast<std::size_t>(k));
  for (int j = 0; j < k; ++j)
    config.target_scale[static_cast<std::size_t>(j)] = t_std(j) > 1e-12 ? t_std(j) : 1.0;
}

// ---------------------------------------------------------------------------
// Dataset assembly
// ---------------------------------------------------------------------------

Mat build_window_inputs(const Trajectory& traj, const Window& w) {
  const Eigen::Index n = w.length;
  Mat in(n, traj.state_dim() + traj.control_dim() + 1);
  double t0 = traj.times[static_cast<std::size_t>(w.start)];
  double span = traj.times[static_cast<std::size_t>(w.start + n - 1)] - t0;
  if (span <= 0) span = 1.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::Index r = w.start + i;
    Eigen::Index c = 0;
    for (Eigen::Index j = 0; j < traj.state_dim(); ++j) in(i, c++) = traj.states(r, j);
    for (Eigen::Index j = 0; j < traj.control_dim(); ++j) in(i, c++) = traj.controls(r, j);
    in(i, c) = (traj.times[static_cast<std::size_t>(r)] - t0) / span;
  }
  return in;
}

SplitDataset assemble_next_window(const std::vector<Trajectory>& trajectories,
                                  const FeatureLibrary& lib, const StlsqConfig& cfg,
                                  int window_width, int state_index, int train_count) {
  SplitDataset out;
  for (int ti = 0; ti < static_cast<int>(trajectories.size()); ++ti) {
    const Trajectory& traj = trajectories[static_cast<std::size_t>(ti)];
    std::vector<Window> windows = make_windows(traj, window_width, WindowMode::fixed, 0, ti);
    if (windows.size() < 2) {
      ++out.skipped;
      continue;
    }
    // Labels per window; window k is paired with the label of window k+1.
    std::vector<CoefficientMatrix> labels;
    std::vector<bool> ok(windows.size(), true);
    for (std::size_t k = 0; k < windows.size(); ++k) {
      try {
        labels.push_back(identify_local(traj, windows[k], lib, cfg));
      } catch (const std::runtime_error&) {
        labels.emplace_back();
        ok[k] = false;
      }
    }
    for (std::size_t k = 0; k + 1 < windows.size(); ++k) {
      if (!ok[k + 1]) {
        ++out.skipped;
        continue;
      }
      const Window& input_w = windows[k];
      const Window& label_w = windows[k + 1];
      const Mat& coeffs = labels[k + 1].coeffs;
      LabeledWindow lw;
      lw.inputs = build_window_inputs(traj, input_w);
      if (state_index >= 0) {
        if (state_index >= coeffs.cols())
          throw ConfigError("assemble: state_index out of range");
        lw.target = coeffs.col(state_index);
      } else {
        // All state equations, coefficient block flattened row-major.
        lw.target = Vec(coeffs.size());
        for (Eigen::Index t = 0; t < coeffs.rows(); ++t)
          for (Eigen::Index s = 0; s < coeffs.cols(); ++s)
            lw.target(t * coeffs.cols() + s) = coeffs(t, s);
      }
      // Library and derivative rows of the labeled span, so the loss can
      // score predicted coefficients as dynamics for that span.
      Trajectory slice;
      slice.times.assign(traj.times.begin() + label_w.start,
                         traj.times.begin() + label_w.start + label_w.length);
      slice.states = traj.states.middleRows(label_w.start, label_w.length);
      slice.controls = traj.controls.cols() > 0
                           ? Mat(traj.controls.middleRows(label_w.start, label_w.length))
                           : Mat(label_w.length, 0);
      lw.theta = lib.evaluate(slice.states, slice.controls);
      Mat slice_derivs = central_difference(slice);
      lw.deriv_targets =
          state_index >= 0 ? Mat(slice_derivs.col(state_index)) : slice_derivs;
      lw.group = ti;
      lw.window_start = input_w.start;
      lw.label_hash = lw.compute_label_hash();
      (ti < train_count ? out.train : out.valid).push_back(std::move(lw));
    }
  }
  return out;
}

SplitDataset assemble_lorenz_windows(const std::vector<LorenzSample>& systems,
                                     const std::vector<int>& window_sizes,
                                     int target_index, double train_fraction) {
  if (target_index < 0 || target_index > 2)
    throw ConfigError("assemble: target_index must be 0 (sigma), 1 (rho) or 2 (beta)");
  SplitDataset out;
  const int train_count =
      static_cast<int>(std::llround(train_fraction * static_cast<double>(systems.size())));
  for (int si = 0; si < static_cast<int>(systems.size()); ++si) {
    const LorenzSample& sys = systems[static_cast<std::size_t>(si)];
    const Trajectory& traj = sys.trajectory;
    double label = target_index == 0   ? sys.label.sigma
                   : target_index == 1 ? sys.label.rho
                                       : sys.label.beta;
    Mat derivs;
    try {
      derivs = central_difference(traj);
    } catch (const std::runtime_error&) {
      ++out.skipped;
      continue;
    }
    for (int size : window_sizes) {
      if (size > traj.length()) {
        ++out.skipped;
        continue;
      }
      LabeledWindow lw;
      lw.inputs = Mat(size, 4);
      for (int i = 0; i < size; ++i) {
        lw.inputs(i, 0) = traj.times[static_cast<std::size_t>(i)];
        lw.inputs(i, 1) = traj.states(i, 0);
        lw.inputs(i, 2) = traj.states(i, 1);
        lw.inputs(i, 3) = traj.states(i, 2);
      }
      lw.target = Vec::Constant(1, label);
      // Rearranged single-regressor rows for the matching Lorenz equation.
      Vec x = traj.states.col(0).head(size);
      Vec y = traj.states.col(1).head(size);
      Vec z = traj.states.col(2).head(size);
      lw.theta = Mat(size, 1);
      lw.deriv_targets = Mat(size, 1);
      if (target_index == 0) {
        lw.theta.col(0) = y - x;
        lw.deriv_targets.col(0) = derivs.col(0).head(size);
      } else if (target_index == 1) {
        lw.theta.col(0) = x;
        lw.deriv_targets.col(0) = derivs.col(1).head(size) + y + x.cwiseProduct(z);
      } else {
        lw.theta.col(0) = z;
        lw.deriv_targets.col(0) = x.cwiseProduct(y) - derivs.col(2).head(size);
      }
      lw.group = si;
      lw.window_start = 0;
      lw.label_hash = lw.compute_label_hash();
      (si < train_count ? out.train : out.valid).push_back(std::move(lw));
    }
  }
  return out;
}

SplitDataset assemble_heat_windows(const std::vector<HeatSample>& runs,
                                   const std::vector<int>& prefix_steps,
                                   double train_fraction) {
  SplitDataset out;
  const int train_count =
      static_cast<int>(std::llround(train_fraction * static_cast<double>(runs.size())));
  for (int ri = 0; ri < static_cast<int>(runs.size()); ++ri) {
    const HeatSample& sample = runs[static_cast<std::size_t>(ri)];
    const Trajectory& run = sample.run;
    const Eigen::Index last_node = run.state_dim() - 1;
    const double z_right = sample.problem.length;
    for (int steps : prefix_steps) {
      if (steps + 1 > run.length()) {
        ++out.skipped;
        continue;
      }
      LabeledWindow lw;
      // Rows (z, t, T) for both probes over t = dt .. steps*dt; the t = 0 row
      // is the uniform initial condition and carries no signal.
      lw.inputs = Mat(2 * steps, 3);
      for (int i = 0; i < steps; ++i) {
        double t = run.times[static_cast<std::size_t>(i + 1)];
        lw.inputs(2 * i, 0) = 0.0;
        lw.inputs(2 * i, 1) = t;
        lw.inputs(2 * i, 2) = run.states(i + 1, 0);
        lw.inputs(2 * i + 1, 0) = z_right;
        lw.inputs(2 * i + 1, 1) = t;
        lw.inputs(2 * i + 1, 2) = run.states(i + 1, last_node);
      }
      lw.target = Vec(3);
      lw.target << sample.problem.center, sample.problem.ratio, sample.problem.alpha_ref;
      lw.group = ri;
      lw.window_start = 0;
      lw.label_hash = lw.compute_label_hash();
      (ri < train_count ? out.train : out.valid).push_back(std::move(lw));
    }
  }
  return out;
}

}  // namespace sendi
