#pragma once

// The gesture classifier: 16-unit GRU + 6-way dense softmax head, trained
// with Adam on stride-1 windows, plus frame-wise inference.

#include <numeric>

#include "rhgr/model/dataset.hpp"
#include "rhgr/nn/adam.hpp"
#include "rhgr/nn/gru.hpp"

namespace rhgr::model {

inline constexpr std::size_t kHiddenDim = 16;

struct GruModel {
  nn::GruParams gru{kFeatDim, kHiddenDim};
  nn::DenseParams dense{kHiddenDim, kNumClasses};
  FeatureStats stats;

  void init(Rng& rng) {
    gru.init(rng);
    dense.init(rng);
  }

  nn::ParamRefs param_refs() {
    nn::ParamRefs r = gru.param_refs();
    r.push_back(&dense.w);
    r.push_back(&dense.b);
    return r;
  }
};

// Gathers a batch of windows into per-timestep matrices (batch x 5).
inline std::vector<Matrix> gather_batch(const WindowedDataset& ds,
                                        const std::vector<std::size_t>& idx) {
  const std::size_t l = ds.window_len, b = idx.size();
  std::vector<Matrix> x(l, Matrix(b, kFeatDim));
  for (std::size_t i = 0; i < b; ++i) {
    const double* w = ds.window(idx[i]);
    for (std::size_t t = 0; t < l; ++t)
      for (std::size_t j = 0; j < kFeatDim; ++j)
        x[t](i, j) = w[t * kFeatDim + j];
  }
  return x;
}

inline Matrix forward_logits(GruModel& m, const std::vector<Matrix>& x,
                             std::vector<nn::GruStepCache>* cache = nullptr) {
  Matrix h = nn::gru_forward_batch(x, m.gru, cache);
  return nn::dense_forward(h, m.dense);
}

struct BatchGradients {
  nn::GradientSet params;          // mirrors GruModel::param_refs() order
  std::vector<Matrix> inputs;      // per-timestep (batch x 5), when requested
  double loss = 0.0;
  std::size_t correct = 0;
};

// Mean cross-entropy over the batch; analytic gradients for every parameter
// and, on request, for the input window (frames outside the window get none:
// windows are independent).
inline BatchGradients compute_gradients(GruModel& m, const std::vector<Matrix>& x,
                                        const std::vector<int>& labels,
                                        bool want_input_grads = false) {
  const std::size_t b = labels.size();
  std::vector<nn::GruStepCache> cache;
  Matrix h = nn::gru_forward_batch(x, m.gru, &cache);
  Matrix logits = nn::dense_forward(h, m.dense);
  BatchGradients out;
  Matrix dlogits(b, kNumClasses);
  for (std::size_t i = 0; i < b; ++i) {
    Vec row(kNumClasses);
    for (std::size_t j = 0; j < kNumClasses; ++j) row[j] = logits(i, j);
    Vec probs = nn::softmax(row);
    const auto label = static_cast<std::size_t>(labels[i]);
    out.loss += nn::sparse_ce_loss(probs, label);
    const std::size_t pred = static_cast<std::size_t>(
        std::max_element(row.begin(), row.end()) - row.begin());
    if (pred == label) ++out.correct;
    for (std::size_t j = 0; j < kNumClasses; ++j)
      dlogits(i, j) = (probs[j] - (j == label ? 1.0 : 0.0)) / static_cast<double>(b);
  }
  out.loss /= static_cast<double>(b);
  if (!std::isfinite(out.loss)) throw NumericError("compute_gradients: non-finite loss");

  Matrix dw(kHiddenDim, kNumClasses), db(1, kNumClasses);
  Matrix dh = nn::dense_backward(h, m.dense, dlogits, dw, db);
  nn::GruGrads gg(m.gru);
  nn::gru_backward_batch(x, m.gru, cache, dh, gg,
                         want_input_grads ? &out.inputs : nullptr);
  gg.append_to(out.params);
  out.params.push_back(std::move(dw));
  out.params.push_back(std::move(db));
  return out;
}

// Gradient of one pre-softmax logit at the window's last frame w.r.t. the
// input window. Used by the attribution module.
inline std::vector<Matrix> input_logit_gradient(GruModel& m, const std::vector<Matrix>& x,
                                                int target_class, Vec* logits_out = nullptr) {
  std::vector<nn::GruStepCache> cache;
  Matrix h = nn::gru_forward_batch(x, m.gru, &cache);
  Matrix logits = nn::dense_forward(h, m.dense);
  if (logits_out) {
    logits_out->resize(kNumClasses);
    for (std::size_t j = 0; j < kNumClasses; ++j) (*logits_out)[j] = logits(0, j);
  }
  Matrix dlogits(logits.rows, kNumClasses, 0.0);
  for (std::size_t i = 0; i < logits.rows; ++i)
    dlogits(i, static_cast<std::size_t>(target_class)) = 1.0;
  Matrix dw(kHiddenDim, kNumClasses), db(1, kNumClasses);
  Matrix dh = nn::dense_backward(h, m.dense, dlogits, dw, db);
  nn::GruGrads gg(m.gru);
  std::vector<Matrix> dx;
  nn::gru_backward_batch(x, m.gru, cache, dh, gg, &dx);
  return dx;
}

// Quadratic penalty lambda/2 * sum Omega_i (theta_i - theta*_i)^2 used by the
// regularization-based calibration methods.
struct PenaltyConfig {
  double lambda = 0.0;
  nn::GradientSet importance;  // Omega, mirrors param_refs order
  nn::GradientSet anchor;      // theta*
};

// Accumulators for the synaptic-importance path integral, recorded during
// training: omega_i += -g_i * dtheta_i per optimizer step.
struct SiTrace {
  nn::GradientSet omega;
  nn::GradientSet theta_start;
  bool recorded = false;
};

struct TrainConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 32;
  double lr = 0.001;
  std::uint64_t seed = 0;
  PenaltyConfig penalty;
  bool record_si_trace = false;
};

struct EpochStats {
  double train_loss = 0.0, train_acc = 0.0;
  double val_loss = 0.0, val_acc = 0.0;
};

struct TrainHistory {
  std::vector<EpochStats> epochs;
};

inline std::pair<double, double> evaluate_windows(GruModel& m, const WindowedDataset& ds,
                                                  std::size_t batch_size = 256) {
  double loss = 0.0;
  std::size_t correct = 0, total = ds.count();
  if (total == 0) return {0.0, 0.0};
  for (std::size_t start = 0; start < total; start += batch_size) {
    std::vector<std::size_t> idx(std::min(batch_size, total - start));
    std::iota(idx.begin(), idx.end(), start);
    std::vector<Matrix> x = gather_batch(ds, idx);
    std::vector<nn::GruStepCache>* nocache = nullptr;
    Matrix h = nn::gru_forward_batch(x, m.gru, nocache);
    Matrix logits = nn::dense_forward(h, m.dense);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      Vec row(kNumClasses);
      for (std::size_t j = 0; j < kNumClasses; ++j) row[j] = logits(i, j);
      Vec probs = nn::softmax(row);
      const auto label = static_cast<std::size_t>(ds.labels[idx[i]]);
      loss += nn::sparse_ce_loss(probs, label);
      if (static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin()) ==
          label)
        ++correct;
    }
  }
  return {loss / static_cast<double>(total),
          static_cast<double>(correct) / static_cast<double>(total)};
}

// Mini-batch Adam training loop. Deterministic given (seed, data order).
inline TrainHistory train_classifier(GruModel& m, const WindowedDataset& train,
                                     const WindowedDataset& val, const TrainConfig& cfg,
                                     SiTrace* si_trace = nullptr) {
  {
    bool multi = false;
    for (int l : train.labels)
      if (l != train.labels.front()) {
        multi = true;
        break;
      }
    if (!multi) throw TrainingError("train_classifier: need at least two classes");
  }
  nn::ParamRefs refs = m.param_refs();
  nn::AdamState adam;
  adam.lr = cfg.lr;
  adam.reset(refs);
  if (si_trace) {
    si_trace->omega = nn::zeros_like(refs);
    si_trace->theta_start.clear();
    for (Matrix* p : refs) si_trace->theta_start.push_back(*p);
    si_trace->recorded = true;
  }
  const bool penalized = cfg.penalty.lambda > 0.0 && !cfg.penalty.importance.empty();

  Rng rng(derive_seed(cfg.seed, "train"));
  std::vector<std::size_t> order(train.count());
  std::iota(order.begin(), order.end(), 0);
  TrainHistory hist;
  std::vector<Matrix> before;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    EpochStats st;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t n = std::min(cfg.batch_size, order.size() - start);
      std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                   order.begin() + static_cast<std::ptrdiff_t>(start + n));
      std::vector<int> labels(n);
      for (std::size_t i = 0; i < n; ++i) labels[i] = train.labels[idx[i]];
      std::vector<Matrix> x = gather_batch(train, idx);
      BatchGradients g = compute_gradients(m, x, labels);
      if (!std::isfinite(g.loss))
        throw TrainingError("train_classifier: diverged at epoch " + std::to_string(epoch));
      if (penalized)
        for (std::size_t i = 0; i < refs.size(); ++i)
          for (std::size_t k = 0; k < refs[i]->data.size(); ++k)
            g.params[i].data[k] += cfg.penalty.lambda * cfg.penalty.importance[i].data[k] *
                                   (refs[i]->data[k] - cfg.penalty.anchor[i].data[k]);
      if (si_trace) {
        before.clear();
        for (Matrix* p : refs) before.push_back(*p);
      }
      adam_step(refs, g.params, adam);
      if (si_trace)
        for (std::size_t i = 0; i < refs.size(); ++i)
          for (std::size_t k = 0; k < refs[i]->data.size(); ++k)
            si_trace->omega[i].data[k] -=
                g.params[i].data[k] * (refs[i]->data[k] - before[i].data[k]);
      st.train_loss += g.loss * static_cast<double>(n);
      correct += g.correct;
    }
    st.train_loss /= static_cast<double>(order.size());
    st.train_acc = static_cast<double>(correct) / static_cast<double>(order.size());
    if (val.count() > 0) std::tie(st.val_loss, st.val_acc) = evaluate_windows(m, val);
    hist.epochs.push_back(st);
  }
  return hist;
}

// Frame-wise prediction: each frame t is labeled by the window ending at t;
// frames before L_window - 1 use left-replicated padding.
inline std::vector<int> predict_frames(GruModel& m, const dsp::FeatureSequence& seq) {
  const std::size_t t = seq.size(), l = kWindowLen;
  std::vector<int> preds(t);
  std::vector<Matrix> x(l, Matrix(1, kFeatDim));
  for (std::size_t end = 0; end < t; ++end) {
    for (std::size_t i = 0; i < l; ++i) {
      const std::ptrdiff_t f = static_cast<std::ptrdiff_t>(end) -
                               static_cast<std::ptrdiff_t>(l - 1) +
                               static_cast<std::ptrdiff_t>(i);
      const auto a = seq.frames[static_cast<std::size_t>(std::max<std::ptrdiff_t>(f, 0))]
                         .as_array();
      for (std::size_t j = 0; j < kFeatDim; ++j) x[i](0, j) = a[j];
    }
    Matrix logits = forward_logits(m, x);
    std::size_t best = 0;
    for (std::size_t j = 1; j < kNumClasses; ++j)
      if (logits(0, j) > logits(0, best)) best = j;
    preds[end] = static_cast<int>(best);
  }
  return preds;
}

}  // namespace rhgr::model
