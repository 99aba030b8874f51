#pragma once

// User-centric transfer learning: experience-replay dataset mixing, plain
// retraining, and the two regularization-based alternatives (Fisher-penalty
// and path-integral synaptic importance), plus the forgetting-rate
// evaluation and the n_train x n_user sweep.

#include <map>
#include <ostream>
#include <sstream>

#include "rhgr/model/classifier.hpp"
#include "rhgr/model/metrics.hpp"

namespace rhgr::calib {

using Pool = std::vector<dsp::FeatureSequence>;

struct CalibrationConfig {
  std::string method = "er";  // plain | er | ewc | si
  std::size_t n_train = 50;   // recordings per class from the original training pool
  std::size_t n_user = 10;    // recordings per class from the target user
  std::size_t epochs = 10;
  std::size_t batch_size = 32;
  double lambda_ewc = 10.0;
  double lambda_si = 0.01;
  double si_xi = 0.01;
  double si_lr = 1e-4;
  double lr = 0.001;  // plain/er/ewc learning rate
  std::size_t fisher_max_windows = 256;
  std::uint64_t seed = 0;

  void validate() const {
    if (method != "plain" && method != "er" && method != "ewc" && method != "si")
      throw ConfigError("CalibrationConfig: unknown method '" + method + "'");
    if (n_user < 1) throw ConfigError("CalibrationConfig: n_user must be >= 1");
    if (method == "er" && n_train < 1)
      throw ConfigError("CalibrationConfig: er requires n_train >= 1");
  }
};

struct ImportanceWeights {
  nn::GradientSet importance;  // Omega, nonnegative, mirrors param_refs order
  nn::GradientSet anchor;      // theta*
};

// Stratified without-replacement selection of n_train recordings per class
// from the training pool and n_user per class from the user pool, shuffled.
// A pool with a zero request is not touched (and consumes no randomness), so
// n_train=0 reduces exactly to plain user-only selection.
inline Pool build_er_dataset(const Pool& train_pool, const Pool& user_pool,
                             std::size_t n_train, std::size_t n_user,
                             std::uint64_t seed) {
  Rng rng(seed);
  Pool out;
  auto take = [&](const Pool& pool, std::size_t n, const char* name) {
    if (n == 0) return;
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < pool.size(); ++i)
      by_class[pool[i].intended_class].push_back(i);
    for (auto& [cls, idx] : by_class) {
      if (idx.size() < n)
        throw DataError(std::string("build_er_dataset: ") + name + " pool has " +
                        std::to_string(idx.size()) + " recordings of class " +
                        std::to_string(cls) + ", need " + std::to_string(n));
      std::shuffle(idx.begin(), idx.end(), rng);
      for (std::size_t i = 0; i < n; ++i) out.push_back(pool[idx[i]]);
    }
  };
  take(train_pool, n_train, "train");
  take(user_pool, n_user, "user");
  std::shuffle(out.begin(), out.end(), rng);
  return out;
}

// Normalizes with the model's training statistics and windows a pool.
inline model::WindowedDataset windows_of(const model::GruModel& m, const Pool& pool) {
  model::WindowedDataset ds;
  for (const auto& seq : pool)
    ds.append(model::window_dataset(model::normalize_zscore(seq, m.stats)));
  return ds;
}

// Empirical Fisher diagonal under the model's own predicted distribution:
// F_i = mean over windows of sum_c p(c|x) * (d log p(c|x) / d theta_i)^2.
inline ImportanceWeights fisher_diagonal(model::GruModel& m,
                                         const model::WindowedDataset& data,
                                         std::size_t max_windows = 0) {
  if (data.count() == 0) throw DataError("fisher_diagonal: empty dataset");
  nn::ParamRefs refs = m.param_refs();
  ImportanceWeights iw;
  iw.importance = nn::zeros_like(refs);
  for (Matrix* p : refs) iw.anchor.push_back(*p);

  std::size_t n = data.count();
  std::size_t step = 1;
  if (max_windows > 0 && n > max_windows) {
    step = n / max_windows;
    n = max_windows;
  }
  std::size_t used = 0;
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t w = k * step;
    std::vector<Matrix> x = model::gather_batch(data, {w});
    Matrix logits = model::forward_logits(m, x);
    Vec row(kNumClasses);
    for (std::size_t j = 0; j < kNumClasses; ++j) row[j] = logits(0, j);
    Vec probs = nn::softmax(row);
    for (int c = 0; c < static_cast<int>(kNumClasses); ++c) {
      if (probs[static_cast<std::size_t>(c)] < 1e-12) continue;
      model::BatchGradients g = model::compute_gradients(m, x, {c});
      for (std::size_t i = 0; i < refs.size(); ++i)
        for (std::size_t j = 0; j < refs[i]->data.size(); ++j)
          iw.importance[i].data[j] += probs[static_cast<std::size_t>(c)] *
                                      g.params[i].data[j] * g.params[i].data[j];
    }
    ++used;
  }
  for (auto& mat : iw.importance)
    for (double& v : mat.data) v /= static_cast<double>(used);
  return iw;
}

// Omega_i = max(omega_i, 0) / ((theta_end_i - theta_start_i)^2 + xi), with
// the trace accumulated during the initial training run.
inline ImportanceWeights si_path_importance(const model::SiTrace& trace,
                                            model::GruModel& m, double xi = 0.01) {
  if (!trace.recorded)
    throw ConfigError("si_path_importance: no training trace was recorded");
  nn::ParamRefs refs = m.param_refs();
  if (trace.omega.size() != refs.size())
    throw ShapeError("si_path_importance: trace does not mirror the model");
  ImportanceWeights iw;
  iw.importance = nn::zeros_like(refs);
  for (std::size_t i = 0; i < refs.size(); ++i) {
    iw.anchor.push_back(*refs[i]);
    for (std::size_t j = 0; j < refs[i]->data.size(); ++j) {
      const double total = refs[i]->data[j] - trace.theta_start[i].data[j];
      iw.importance[i].data[j] =
          std::max(trace.omega[i].data[j], 0.0) / (total * total + xi);
    }
  }
  return iw;
}

// Retrains the model in place per the configured method. No layers are
// frozen. Returns the training history of the calibration epochs.
inline model::TrainHistory calibrate(model::GruModel& m, const Pool& user_pool,
                                     const Pool& train_pool, const CalibrationConfig& cfg,
                                     const model::SiTrace* si_trace = nullptr) {
  cfg.validate();
  if (cfg.method == "si" && !si_trace)
    throw ConfigError("calibrate: method 'si' needs the initial training trace");
  const std::size_t mix_train = cfg.method == "er" ? cfg.n_train : 0;
  Pool ds = build_er_dataset(train_pool, user_pool, mix_train, cfg.n_user,
                             derive_seed(cfg.seed, "calib-mix"));

  model::TrainConfig tc;
  tc.epochs = cfg.epochs;
  tc.batch_size = cfg.batch_size;
  tc.lr = cfg.method == "si" ? cfg.si_lr : cfg.lr;
  tc.seed = derive_seed(cfg.seed, "calib-train");
  if (cfg.method == "ewc") {
    ImportanceWeights iw =
        fisher_diagonal(m, windows_of(m, train_pool), cfg.fisher_max_windows);
    tc.penalty.lambda = cfg.lambda_ewc;
    tc.penalty.importance = std::move(iw.importance);
    tc.penalty.anchor = std::move(iw.anchor);
  } else if (cfg.method == "si") {
    if (!si_trace)
      throw ConfigError("calibrate: method 'si' needs the initial training trace");
    ImportanceWeights iw = si_path_importance(*si_trace, m, cfg.si_xi);
    tc.penalty.lambda = cfg.lambda_si;
    tc.penalty.importance = std::move(iw.importance);
    tc.penalty.anchor = std::move(iw.anchor);
  }
  return model::train_classifier(m, windows_of(m, ds), {}, tc);
}

// Frame-wise gesture accuracy of the model on raw (unnormalized) recordings.
inline double evaluate_gesture_acc(model::GruModel& m,
                                   const std::vector<dsp::FeatureSequence>& seqs) {
  std::vector<model::LabeledRecording> recs;
  for (const auto& seq : seqs) {
    model::LabeledRecording r;
    r.truth = seq.labels;
    r.pred = model::predict_frames(m, model::normalize_zscore(seq, m.stats));
    recs.push_back(std::move(r));
  }
  return model::gesture_accuracy(recs);
}

// gesture_acc on the held-out train-distribution split reserved before any
// training: the catastrophic-forgetting probe.
inline double forgetting_eval(model::GruModel& m,
                              const std::vector<dsp::FeatureSequence>& heldout) {
  return evaluate_gesture_acc(m, heldout);
}

struct SweepRow {
  std::string method;
  std::size_t n_train = 0, n_user = 0;
  int user = 0;
  std::size_t run = 0;
  std::uint64_t seed = 0;
  double user_gesture_acc = 0.0;
  double forget_gesture_acc = 0.0;
};

struct SweepCellStats {
  double mean_user = 0.0, std_user = 0.0;
  double mean_forget = 0.0, std_forget = 0.0;
  std::size_t runs = 0;
};

struct SweepGrid {
  std::vector<std::string> methods{"er"};
  std::vector<std::size_t> n_train_values{50};
  std::vector<std::size_t> n_user_values{10};
};

struct UserData {
  Pool calib_pool;                            // recordings available for calibration
  std::vector<dsp::FeatureSequence> assess;   // calibration-assessment recordings
};

struct SweepResult {
  std::vector<SweepRow> rows;

  // One aggregate per (method, n_train, n_user, user) cell, over runs.
  std::map<std::tuple<std::string, std::size_t, std::size_t, int>, SweepCellStats>
  aggregate() const {
    std::map<std::tuple<std::string, std::size_t, std::size_t, int>,
             std::vector<const SweepRow*>>
        cells;
    for (const auto& r : rows)
      cells[{r.method, r.n_train, r.n_user, r.user}].push_back(&r);
    std::map<std::tuple<std::string, std::size_t, std::size_t, int>, SweepCellStats> out;
    for (const auto& [key, rs] : cells) {
      SweepCellStats st;
      st.runs = rs.size();
      for (const SweepRow* r : rs) {
        st.mean_user += r->user_gesture_acc;
        st.mean_forget += r->forget_gesture_acc;
      }
      st.mean_user /= static_cast<double>(st.runs);
      st.mean_forget /= static_cast<double>(st.runs);
      for (const SweepRow* r : rs) {
        st.std_user += (r->user_gesture_acc - st.mean_user) *
                       (r->user_gesture_acc - st.mean_user);
        st.std_forget += (r->forget_gesture_acc - st.mean_forget) *
                         (r->forget_gesture_acc - st.mean_forget);
      }
      st.std_user = std::sqrt(st.std_user / static_cast<double>(st.runs));
      st.std_forget = std::sqrt(st.std_forget / static_cast<double>(st.runs));
      out[key] = st;
    }
    return out;
  }

  void to_csv(std::ostream& os) const {
    os << "method,n_train,n_user,user,run,seed,user_gesture_acc,forget_gesture_acc\n";
    for (const auto& r : rows)
      os << r.method << ',' << r.n_train << ',' << r.n_user << ',' << r.user << ','
         << r.run << ',' << r.seed << ',' << r.user_gesture_acc << ','
         << r.forget_gesture_acc << '\n';
  }
};

// Runs every grid cell for every user, `runs` times each, starting from a
// copy of the same baseline model. Run r uses seed base_seed + r.
inline SweepResult run_sweep(const model::GruModel& baseline, const Pool& train_pool,
                             const std::map<int, UserData>& users,
                             const std::vector<dsp::FeatureSequence>& forget_split,
                             const SweepGrid& grid, const CalibrationConfig& base_cfg,
                             std::size_t runs = 6,
                             const model::SiTrace* si_trace = nullptr) {
  SweepResult result;
  for (const auto& method : grid.methods)
    for (std::size_t n_train : grid.n_train_values)
      for (std::size_t n_user : grid.n_user_values)
        for (const auto& [user, data] : users)
          for (std::size_t run = 0; run < runs; ++run) {
            CalibrationConfig cfg = base_cfg;
            cfg.method = method;
            cfg.n_train = n_train;
            cfg.n_user = n_user;
            cfg.seed = base_cfg.seed + run;
            model::GruModel m = baseline;
            calibrate(m, data.calib_pool, train_pool, cfg, si_trace);
            SweepRow row;
            row.method = method;
            row.n_train = n_train;
            row.n_user = n_user;
            row.user = user;
            row.run = run;
            row.seed = cfg.seed;
            row.user_gesture_acc = evaluate_gesture_acc(m, data.assess);
            row.forget_gesture_acc = forgetting_eval(m, forget_split);
            result.rows.push_back(std::move(row));
          }
  return result;
}

}  // namespace rhgr::calib
