#pragma once

// Variational autoencoder for out-of-distribution gesture detection:
// dense encoder 500-512-256-128-64 with batch norm + ReLU and dropout after
// the first two layers, 16-dim Gaussian latent, mirrored decoder with a
// sigmoid output. Inputs are flattened 100x5 recordings min-max normalized
// to [0,1]. Loss = per-sample squared reconstruction error + KL divergence,
// equally weighted.

#include <iostream>

#include "rhgr/model/dataset.hpp"
#include "rhgr/nn/adam.hpp"
#include "rhgr/nn/layers.hpp"

namespace rhgr::anomaly {

struct VaeConfig {
  std::size_t input_dim = 500;
  std::vector<std::size_t> enc_dims{512, 256, 128, 64};
  std::size_t latent_dim = 16;
  double dropout = 0.3;
  std::size_t dropout_layers = 2;  // dropout after the first N encoder layers

  std::size_t epochs = 250;
  std::size_t batch_size = 16;
  std::size_t patience = 20;
  double lr = 0.001;
  double bn_momentum = 0.99;
  double val_fraction = 0.35;
  std::uint64_t seed = 0;

  void validate() const {
    if (enc_dims.empty()) throw ConfigError("VaeConfig: empty encoder stack");
    if (latent_dim == 0 || input_dim == 0) throw ConfigError("VaeConfig: zero dim");
    if (val_fraction <= 0.0 || val_fraction >= 1.0)
      throw ConfigError("VaeConfig: val_fraction must be in (0,1)");
  }
};

// Batch norm with trainable scale/shift held as 1 x d matrices so the shared
// Adam machinery can update them.
struct VaeBn {
  nn::BatchNormParams bn;
  Matrix gamma, beta;

  explicit VaeBn(std::size_t d = 0) : bn(d), gamma(1, d, 1.0), beta(1, d, 0.0) {}

  Matrix forward(const Matrix& x, nn::Mode mode, nn::BatchNormCache* cache) {
    for (std::size_t j = 0; j < bn.dim(); ++j) {
      bn.gamma[j] = gamma(0, j);
      bn.beta[j] = beta(0, j);
    }
    return nn::batchnorm_forward(x, bn, mode, cache);
  }

  Matrix backward(const nn::BatchNormCache& cache, const Matrix& dy, Matrix& dgamma,
                  Matrix& dbeta) {
    Vec dg(bn.dim(), 0.0), db(bn.dim(), 0.0);
    Matrix dx = nn::batchnorm_backward(bn, cache, dy, dg, db);
    for (std::size_t j = 0; j < bn.dim(); ++j) {
      dgamma(0, j) += dg[j];
      dbeta(0, j) += db[j];
    }
    return dx;
  }
};

struct VaeModel {
  VaeConfig cfg;
  std::vector<nn::DenseParams> enc;
  std::vector<VaeBn> enc_bn;
  nn::DenseParams mu_head, logvar_head;
  std::vector<nn::DenseParams> dec;  // hidden mirror layers, latent -> ... -> enc_dims[0]
  std::vector<VaeBn> dec_bn;
  nn::DenseParams out;  // enc_dims[0] -> input_dim, sigmoid
  model::FeatureStats stats;  // min-max statistics used to build inputs

  void build(const VaeConfig& c, Rng& rng) {
    c.validate();
    cfg = c;
    enc.clear();
    enc_bn.clear();
    dec.clear();
    dec_bn.clear();
    std::size_t prev = cfg.input_dim;
    for (std::size_t d : cfg.enc_dims) {
      enc.emplace_back(prev, d);
      enc.back().init(rng);
      enc_bn.emplace_back(d);
      enc_bn.back().bn.momentum = cfg.bn_momentum;
      prev = d;
    }
    mu_head = nn::DenseParams(prev, cfg.latent_dim);
    mu_head.init(rng);
    logvar_head = nn::DenseParams(prev, cfg.latent_dim);
    logvar_head.init(rng);
    prev = cfg.latent_dim;
    for (std::size_t i = cfg.enc_dims.size(); i-- > 0;) {
      dec.emplace_back(prev, cfg.enc_dims[i]);
      dec.back().init(rng);
      dec_bn.emplace_back(cfg.enc_dims[i]);
      dec_bn.back().bn.momentum = cfg.bn_momentum;
      prev = cfg.enc_dims[i];
    }
    out = nn::DenseParams(prev, cfg.input_dim);
    out.init(rng);
  }

  nn::ParamRefs param_refs() {
    nn::ParamRefs r;
    for (std::size_t i = 0; i < enc.size(); ++i) {
      r.push_back(&enc[i].w);
      r.push_back(&enc[i].b);
      r.push_back(&enc_bn[i].gamma);
      r.push_back(&enc_bn[i].beta);
    }
    r.push_back(&mu_head.w);
    r.push_back(&mu_head.b);
    r.push_back(&logvar_head.w);
    r.push_back(&logvar_head.b);
    for (std::size_t i = 0; i < dec.size(); ++i) {
      r.push_back(&dec[i].w);
      r.push_back(&dec[i].b);
      r.push_back(&dec_bn[i].gamma);
      r.push_back(&dec_bn[i].beta);
    }
    r.push_back(&out.w);
    r.push_back(&out.b);
    return r;
  }
};

struct VaeCache {
  std::vector<Matrix> enc_in;  // input fed to each encoder dense layer
  std::vector<nn::BatchNormCache> enc_bnc;
  std::vector<Matrix> enc_bnout;  // pre-ReLU activations
  std::vector<Matrix> enc_mask;   // dropout masks (empty matrix when unused)
  Matrix mu, logvar, z, noise;
  std::vector<Matrix> dec_in;
  std::vector<nn::BatchNormCache> dec_bnc;
  std::vector<Matrix> dec_bnout;
  Matrix out_in;
  Matrix xhat;
};

struct VaeOutput {
  Matrix xhat, mu, logvar;
  double rec_loss = 0.0;  // mean per-sample squared error
  double kl_loss = 0.0;   // mean per-sample KL
  double loss() const { return rec_loss + kl_loss; }
};

// Training mode draws z = mu + exp(logvar/2) * noise and applies the given
// dropout masks; inference mode uses z = mu, running batch-norm statistics
// and no dropout. Masks and noise are supplied by the caller so a numeric
// check can freeze them across forwards.
inline VaeOutput vae_forward(VaeModel& m, const Matrix& x, const Matrix& noise,
                             const std::vector<Matrix>& masks, nn::Mode mode,
                             VaeCache* cache = nullptr) {
  if (x.cols != m.cfg.input_dim) throw ShapeError("vae_forward: input width mismatch");
  const bool train = mode == nn::Mode::Train;
  VaeCache local;
  VaeCache& c = cache ? *cache : local;
  c.enc_in.clear();
  c.enc_bnc.assign(m.enc.size(), {});
  c.enc_bnout.clear();
  c.enc_mask.assign(m.enc.size(), Matrix());
  c.dec_in.clear();
  c.dec_bnc.assign(m.dec.size(), {});
  c.dec_bnout.clear();

  Matrix h = x;
  for (std::size_t i = 0; i < m.enc.size(); ++i) {
    c.enc_in.push_back(h);
    Matrix a = nn::dense_forward(h, m.enc[i]);
    Matrix bnout = m.enc_bn[i].forward(a, mode, train ? &c.enc_bnc[i] : nullptr);
    c.enc_bnout.push_back(bnout);
    h = nn::relu(bnout);
    if (train && i < m.cfg.dropout_layers && m.cfg.dropout > 0.0) {
      if (i >= masks.size()) throw ShapeError("vae_forward: missing dropout mask");
      c.enc_mask[i] = masks[i];
      h = nn::dropout_apply(h, masks[i]);
    }
  }
  c.mu = nn::dense_forward(h, m.mu_head);
  c.logvar = nn::dense_forward(h, m.logvar_head);
  // stash the head input in enc_in for the backward pass
  c.enc_in.push_back(h);

  if (train) {
    if (!noise.same_shape(c.mu)) throw ShapeError("vae_forward: noise shape mismatch");
    c.noise = noise;
    c.z = c.mu;
    for (std::size_t i = 0; i < c.z.data.size(); ++i)
      c.z.data[i] += std::exp(0.5 * c.logvar.data[i]) * noise.data[i];
  } else {
    c.noise = Matrix(c.mu.rows, c.mu.cols, 0.0);
    c.z = c.mu;
  }

  h = c.z;
  for (std::size_t i = 0; i < m.dec.size(); ++i) {
    c.dec_in.push_back(h);
    Matrix a = nn::dense_forward(h, m.dec[i]);
    Matrix bnout = m.dec_bn[i].forward(a, mode, train ? &c.dec_bnc[i] : nullptr);
    c.dec_bnout.push_back(bnout);
    h = nn::relu(bnout);
  }
  c.out_in = h;
  Matrix logits = nn::dense_forward(h, m.out);
  c.xhat = logits;
  for (double& v : c.xhat.data) v = nn::sigmoid(v);

  VaeOutput o;
  o.xhat = c.xhat;
  o.mu = c.mu;
  o.logvar = c.logvar;
  const std::size_t b = x.rows;
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    const double d = x.data[i] - c.xhat.data[i];
    o.rec_loss += d * d;
  }
  for (std::size_t i = 0; i < c.mu.data.size(); ++i)
    o.kl_loss += -0.5 * (1.0 + c.logvar.data[i] - c.mu.data[i] * c.mu.data[i] -
                         std::exp(c.logvar.data[i]));
  o.rec_loss /= static_cast<double>(b);
  o.kl_loss /= static_cast<double>(b);
  if (!std::isfinite(o.rec_loss) || !std::isfinite(o.kl_loss))
    throw NumericError("vae_forward: non-finite loss");
  return o;
}

// Gradients of the mean per-sample (squared error + KL) w.r.t. every
// parameter, in param_refs() order.
inline void vae_backward(VaeModel& m, const Matrix& x, const VaeCache& c,
                         nn::GradientSet& grads) {
  nn::ParamRefs refs = m.param_refs();
  if (grads.size() != refs.size()) grads = nn::zeros_like(refs);
  const double inv_b = 1.0 / static_cast<double>(x.rows);
  std::size_t gi = grads.size();

  // walk the refs backwards: out, dec (reversed), heads, enc (reversed)
  Matrix dxhat(x.rows, x.cols);
  for (std::size_t i = 0; i < x.data.size(); ++i)
    dxhat.data[i] = 2.0 * (c.xhat.data[i] - x.data[i]) * inv_b;
  Matrix dlogits = dxhat;
  for (std::size_t i = 0; i < dlogits.data.size(); ++i)
    dlogits.data[i] *= c.xhat.data[i] * (1.0 - c.xhat.data[i]);

  Matrix& g_out_b = grads[--gi];
  Matrix& g_out_w = grads[--gi];
  Matrix dh = nn::dense_backward(c.out_in, m.out, dlogits, g_out_w, g_out_b);

  for (std::size_t i = m.dec.size(); i-- > 0;) {
    Matrix& g_beta = grads[--gi];
    Matrix& g_gamma = grads[--gi];
    Matrix& g_b = grads[--gi];
    Matrix& g_w = grads[--gi];
    Matrix dbn = nn::relu_backward(c.dec_bnout[i], dh);
    Matrix da = m.dec_bn[i].backward(c.dec_bnc[i], dbn, g_gamma, g_beta);
    dh = nn::dense_backward(c.dec_in[i], m.dec[i], da, g_w, g_b);
  }

  // dh is now dL/dz; add the KL terms at mu/logvar
  Matrix dmu = dh;
  Matrix dlogvar(dh.rows, dh.cols);
  for (std::size_t i = 0; i < dh.data.size(); ++i) {
    dmu.data[i] += c.mu.data[i] * inv_b;
    dlogvar.data[i] = dh.data[i] * c.noise.data[i] * 0.5 *
                          std::exp(0.5 * c.logvar.data[i]) +
                      0.5 * (std::exp(c.logvar.data[i]) - 1.0) * inv_b;
  }
  Matrix& g_lv_b = grads[--gi];
  Matrix& g_lv_w = grads[--gi];
  Matrix& g_mu_b = grads[--gi];
  Matrix& g_mu_w = grads[--gi];
  const Matrix& head_in = c.enc_in.back();
  Matrix dhead = nn::dense_backward(head_in, m.mu_head, dmu, g_mu_w, g_mu_b);
  Matrix dhead2 = nn::dense_backward(head_in, m.logvar_head, dlogvar, g_lv_w, g_lv_b);
  for (std::size_t i = 0; i < dhead.data.size(); ++i) dhead.data[i] += dhead2.data[i];
  dh = std::move(dhead);

  for (std::size_t i = m.enc.size(); i-- > 0;) {
    Matrix& g_beta = grads[--gi];
    Matrix& g_gamma = grads[--gi];
    Matrix& g_b = grads[--gi];
    Matrix& g_w = grads[--gi];
    if (c.enc_mask[i].data.size() == dh.data.size())
      for (std::size_t k = 0; k < dh.data.size(); ++k)
        dh.data[k] *= c.enc_mask[i].data[k];
    Matrix dbn = nn::relu_backward(c.enc_bnout[i], dh);
    Matrix da = m.enc_bn[i].backward(c.enc_bnc[i], dbn, g_gamma, g_beta);
    dh = nn::dense_backward(c.enc_in[i], m.enc[i], da, g_w, g_b);
  }
}

struct VaeEpochStats {
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_rec = 0.0;  // reconstruction component of val_loss
};

// 65/35 train/validation split, Adam, early stopping with best-weights
// restore. Deterministic given cfg.seed.
inline VaeModel train_vae(const std::vector<Vec>& recordings, const VaeConfig& cfg,
                          std::vector<VaeEpochStats>* history = nullptr) {
  cfg.validate();
  if (recordings.size() < 3) throw DataError("train_vae: need at least 3 recordings");
  for (const auto& r : recordings)
    if (r.size() != cfg.input_dim) throw ShapeError("train_vae: recording length mismatch");

  Rng rng(derive_seed(cfg.seed, "vae"));
  VaeModel m;
  m.build(cfg, rng);

  std::vector<std::size_t> order(recordings.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::size_t n_val = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::lround(cfg.val_fraction *
                                              static_cast<double>(order.size()))));
  if (n_val >= order.size()) n_val = order.size() - 1;
  std::vector<std::size_t> val(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::size_t> train(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());

  auto gather = [&](const std::vector<std::size_t>& idx, std::size_t lo, std::size_t n) {
    Matrix x(n, cfg.input_dim);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < cfg.input_dim; ++j) x(i, j) = recordings[idx[lo + i]][j];
    return x;
  };

  nn::ParamRefs refs = m.param_refs();
  nn::AdamState adam;
  adam.lr = cfg.lr;
  adam.reset(refs);
  nn::GradientSet grads;
  VaeCache cache;

  auto val_loss = [&]() {
    std::pair<double, double> total{0.0, 0.0};  // loss, rec
    for (std::size_t lo = 0; lo < val.size(); lo += 64) {
      const std::size_t n = std::min<std::size_t>(64, val.size() - lo);
      Matrix x = gather(val, lo, n);
      VaeOutput o = vae_forward(m, x, Matrix(), {}, nn::Mode::Infer);
      total.first += o.loss() * static_cast<double>(n);
      total.second += o.rec_loss * static_cast<double>(n);
    }
    total.first /= static_cast<double>(val.size());
    total.second /= static_cast<double>(val.size());
    return total;
  };

  double best = std::numeric_limits<double>::infinity();
  std::vector<Matrix> best_weights;
  std::vector<VaeBn> best_enc_bn, best_dec_bn;
  std::size_t stale = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(train.begin(), train.end(), rng);
    VaeEpochStats st;
    for (std::size_t lo = 0; lo < train.size(); lo += cfg.batch_size) {
      const std::size_t n = std::min(cfg.batch_size, train.size() - lo);
      Matrix x = gather(train, lo, n);
      Matrix noise(n, cfg.latent_dim);
      for (double& v : noise.data) v = rand_normal(rng);
      std::vector<Matrix> masks;
      for (std::size_t i = 0; i < m.cfg.dropout_layers; ++i)
        masks.push_back(nn::dropout_mask(n, m.cfg.enc_dims[i], m.cfg.dropout, rng));
      VaeOutput o = vae_forward(m, x, noise, masks, nn::Mode::Train, &cache);
      if (!std::isfinite(o.loss()))
        throw TrainingError("train_vae: diverged at epoch " + std::to_string(epoch));
      grads = nn::zeros_like(refs);
      vae_backward(m, x, cache, grads);
      nn::adam_step(refs, grads, adam);
      st.train_loss += o.loss() * static_cast<double>(n);
    }
    st.train_loss /= static_cast<double>(train.size());
    std::tie(st.val_loss, st.val_rec) = val_loss();
    if (history) history->push_back(st);
    if (st.val_loss < best) {
      best = st.val_loss;
      best_weights.clear();
      for (Matrix* p : refs) best_weights.push_back(*p);
      best_enc_bn = m.enc_bn;  // running statistics travel with the weights
      best_dec_bn = m.dec_bn;
      stale = 0;
    } else if (++stale >= cfg.patience) {
      break;
    }
  }
  if (!best_weights.empty()) {
    for (std::size_t i = 0; i < refs.size(); ++i) *refs[i] = best_weights[i];
    m.enc_bn = best_enc_bn;
    m.dec_bn = best_dec_bn;
  }
  return m;
}

// e_rec: squared Euclidean distance between input and reconstruction.
inline double reconstruction_error(VaeModel& m, const Vec& x) {
  Matrix xm(1, x.size());
  xm.data = x;
  VaeOutput o = vae_forward(m, xm, Matrix(), {}, nn::Mode::Infer);
  double e = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - o.xhat.data[i];
    e += d * d;
  }
  return e;
}

struct UserThreshold {
  int user = 0;
  double percentile = 90.0;
  double value = 0.0;
  std::size_t n = 0;
};

// Nearest-rank percentile: the ceil(p/100 * n)-th order statistic.
inline double nearest_rank(Vec values, double percentile) {
  if (values.empty()) throw DataError("nearest_rank: empty sample");
  std::sort(values.begin(), values.end());
  const std::size_t rank = std::max<std::size_t>(
      1, static_cast<std::size_t>(
             std::ceil(percentile / 100.0 * static_cast<double>(values.size()))));
  return values[std::min(rank, values.size()) - 1];
}

// Nearest-rank percentile of the user's calibration reconstruction errors.
inline UserThreshold user_threshold(VaeModel& m, const std::vector<Vec>& calibration,
                                    int user, double percentile = 90.0,
                                    std::ostream* warn = &std::cerr) {
  if (calibration.empty()) throw DataError("user_threshold: no calibration recordings");
  if (calibration.size() < 10 && warn)
    *warn << "user_threshold: only " << calibration.size()
          << " calibration recordings for user " << user << " (want >= 10)\n";
  Vec errs;
  for (const auto& x : calibration) errs.push_back(reconstruction_error(m, x));
  UserThreshold t;
  t.user = user;
  t.percentile = percentile;
  t.value = nearest_rank(errs, percentile);
  t.n = errs.size();
  return t;
}

}  // namespace rhgr::anomaly
