#pragma once

// GRU cell with exact backpropagation through time. Gate equations:
//   z = sigmoid(x W_z + h U_z + b_z)
//   r = sigmoid(x W_r + h U_r + b_r)
//   h~ = tanh(x W_h + (r (.) h) U_h + b_h)
//   h' = (1 - z) (.) h + z (.) h~

#include <vector>

#include "rhgr/nn/adam.hpp"
#include "rhgr/nn/layers.hpp"

namespace rhgr::nn {

struct GruParams {
  std::size_t input_dim = 5;
  std::size_t hidden_dim = 16;
  Matrix wz, wr, wh;  // input_dim x hidden_dim
  Matrix uz, ur, uh;  // hidden_dim x hidden_dim
  Matrix bz, br, bh;  // 1 x hidden_dim

  GruParams() = default;
  GruParams(std::size_t d, std::size_t h)
      : input_dim(d), hidden_dim(h),
        wz(d, h), wr(d, h), wh(d, h),
        uz(h, h), ur(h, h), uh(h, h),
        bz(1, h), br(1, h), bh(1, h) {}

  void init(Rng& rng) {
    const double lim_w = std::sqrt(6.0 / static_cast<double>(input_dim + hidden_dim));
    const double lim_u = std::sqrt(6.0 / static_cast<double>(2 * hidden_dim));
    for (Matrix* m : {&wz, &wr, &wh})
      for (double& v : m->data) v = (2.0 * rand_uniform(rng) - 1.0) * lim_w;
    for (Matrix* m : {&uz, &ur, &uh})
      for (double& v : m->data) v = (2.0 * rand_uniform(rng) - 1.0) * lim_u;
    for (Matrix* m : {&bz, &br, &bh}) std::fill(m->data.begin(), m->data.end(), 0.0);
  }

  ParamRefs param_refs() {
    return {&wz, &wr, &wh, &uz, &ur, &uh, &bz, &br, &bh};
  }
};

inline Vec gru_step(const Vec& x, const Vec& h_prev, const GruParams& p) {
  if (x.size() != p.input_dim || h_prev.size() != p.hidden_dim)
    throw ShapeError("gru_step: shape mismatch");
  if (!all_finite(x) || !all_finite(h_prev))
    throw NumericError("gru_step: non-finite input");
  const std::size_t h = p.hidden_dim;
  Vec az(h), ar(h), ah(h), hn(h);
  for (std::size_t j = 0; j < h; ++j) {
    az[j] = p.bz(0, j);
    ar[j] = p.br(0, j);
  }
  for (std::size_t i = 0; i < p.input_dim; ++i)
    for (std::size_t j = 0; j < h; ++j) {
      az[j] += x[i] * p.wz(i, j);
      ar[j] += x[i] * p.wr(i, j);
    }
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < h; ++j) {
      az[j] += h_prev[i] * p.uz(i, j);
      ar[j] += h_prev[i] * p.ur(i, j);
    }
  Vec z(h), r(h);
  for (std::size_t j = 0; j < h; ++j) {
    z[j] = sigmoid(az[j]);
    r[j] = sigmoid(ar[j]);
  }
  for (std::size_t j = 0; j < h; ++j) ah[j] = p.bh(0, j);
  for (std::size_t i = 0; i < p.input_dim; ++i)
    for (std::size_t j = 0; j < h; ++j) ah[j] += x[i] * p.wh(i, j);
  for (std::size_t i = 0; i < h; ++i) {
    const double rh = r[i] * h_prev[i];
    for (std::size_t j = 0; j < h; ++j) ah[j] += rh * p.uh(i, j);
  }
  for (std::size_t j = 0; j < h; ++j) {
    const double ht = std::tanh(ah[j]);
    hn[j] = (1.0 - z[j]) * h_prev[j] + z[j] * ht;
  }
  return hn;
}

// Per-timestep activations kept for BPTT.
struct GruStepCache {
  Matrix z, r, htilde, h_prev, rh;
};

// Runs a batch of equal-length windows through the GRU. x[t] is batch x D.
// Returns the final hidden state (batch x H); fills cache when given.
inline Matrix gru_forward_batch(const std::vector<Matrix>& x, const GruParams& p,
                                std::vector<GruStepCache>* cache = nullptr) {
  if (x.empty()) throw ShapeError("gru_forward_batch: empty window");
  const std::size_t n = x[0].rows, hd = p.hidden_dim;
  Matrix h(n, hd, 0.0);
  if (cache) cache->resize(x.size());
  for (std::size_t t = 0; t < x.size(); ++t) {
    const Matrix& xt = x[t];
    if (xt.cols != p.input_dim || xt.rows != n)
      throw ShapeError("gru_forward_batch: bad timestep shape");
    Matrix az(n, hd), ar(n, hd), ah(n, hd);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < hd; ++j) {
        az(i, j) = p.bz(0, j);
        ar(i, j) = p.br(0, j);
        ah(i, j) = p.bh(0, j);
      }
    matmul_acc(xt, p.wz, az);
    matmul_acc(h, p.uz, az);
    matmul_acc(xt, p.wr, ar);
    matmul_acc(h, p.ur, ar);
    Matrix z(n, hd), r(n, hd);
    for (std::size_t k = 0; k < z.data.size(); ++k) {
      z.data[k] = sigmoid(az.data[k]);
      r.data[k] = sigmoid(ar.data[k]);
    }
    Matrix rh(n, hd);
    for (std::size_t k = 0; k < rh.data.size(); ++k) rh.data[k] = r.data[k] * h.data[k];
    matmul_acc(xt, p.wh, ah);
    matmul_acc(rh, p.uh, ah);
    Matrix htilde(n, hd);
    for (std::size_t k = 0; k < ah.data.size(); ++k) htilde.data[k] = std::tanh(ah.data[k]);
    Matrix h_new(n, hd);
    for (std::size_t k = 0; k < h_new.data.size(); ++k)
      h_new.data[k] = (1.0 - z.data[k]) * h.data[k] + z.data[k] * htilde.data[k];
    if (cache)
      (*cache)[t] = GruStepCache{std::move(z), std::move(r), std::move(htilde),
                                 std::move(h), std::move(rh)};
    h = std::move(h_new);
    if (!all_finite(h.data)) throw NumericError("gru_forward_batch: non-finite state");
  }
  return h;
}

struct GruGrads {
  Matrix dwz, dwr, dwh, duz, dur, duh, dbz, dbr, dbh;

  explicit GruGrads(const GruParams& p)
      : dwz(p.input_dim, p.hidden_dim), dwr(p.input_dim, p.hidden_dim),
        dwh(p.input_dim, p.hidden_dim), duz(p.hidden_dim, p.hidden_dim),
        dur(p.hidden_dim, p.hidden_dim), duh(p.hidden_dim, p.hidden_dim),
        dbz(1, p.hidden_dim), dbr(1, p.hidden_dim), dbh(1, p.hidden_dim) {}

  // Same order as GruParams::param_refs().
  void append_to(GradientSet& out) const {
    for (const Matrix* m : {&dwz, &dwr, &dwh, &duz, &dur, &duh, &dbz, &dbr, &dbh})
      out.push_back(*m);
  }
};

// Backprop through the whole window. dh_last is the loss gradient w.r.t. the
// final hidden state. When dx is non-null it receives per-timestep input
// gradients (each batch x D).
inline void gru_backward_batch(const std::vector<Matrix>& x, const GruParams& p,
                               const std::vector<GruStepCache>& cache,
                               const Matrix& dh_last, GruGrads& g,
                               std::vector<Matrix>* dx = nullptr) {
  const std::size_t n = dh_last.rows, hd = p.hidden_dim;
  if (dx) dx->assign(x.size(), Matrix());
  Matrix dh = dh_last;
  for (std::size_t ti = x.size(); ti-- > 0;) {
    const GruStepCache& c = cache[ti];
    const Matrix& xt = x[ti];
    Matrix daz(n, hd), dar(n, hd), dah(n, hd);
    Matrix dh_prev(n, hd, 0.0);
    for (std::size_t k = 0; k < dh.data.size(); ++k) {
      const double z = c.z.data[k], ht = c.htilde.data[k], hp = c.h_prev.data[k];
      const double dz = dh.data[k] * (ht - hp);
      daz.data[k] = dz * z * (1.0 - z);
      const double dht = dh.data[k] * z;
      dah.data[k] = dht * (1.0 - ht * ht);
      dh_prev.data[k] = dh.data[k] * (1.0 - z);
    }
    // through the candidate's recurrent term
    Matrix drh(n, hd, 0.0);
    matmul_a_bt_acc(dah, p.uh, drh);
    for (std::size_t k = 0; k < drh.data.size(); ++k) {
      const double r = c.r.data[k], hp = c.h_prev.data[k];
      const double dr = drh.data[k] * hp;
      dar.data[k] = dr * r * (1.0 - r);
      dh_prev.data[k] += drh.data[k] * r;
    }
    matmul_a_bt_acc(daz, p.uz, dh_prev);
    matmul_a_bt_acc(dar, p.ur, dh_prev);
    // parameter grads
    matmul_at_b_acc(xt, daz, g.dwz);
    matmul_at_b_acc(xt, dar, g.dwr);
    matmul_at_b_acc(xt, dah, g.dwh);
    matmul_at_b_acc(c.h_prev, daz, g.duz);
    matmul_at_b_acc(c.h_prev, dar, g.dur);
    matmul_at_b_acc(c.rh, dah, g.duh);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < hd; ++j) {
        g.dbz(0, j) += daz(i, j);
        g.dbr(0, j) += dar(i, j);
        g.dbh(0, j) += dah(i, j);
      }
    if (dx) {
      Matrix dxt(n, p.input_dim, 0.0);
      matmul_a_bt_acc(daz, p.wz, dxt);
      matmul_a_bt_acc(dar, p.wr, dxt);
      matmul_a_bt_acc(dah, p.wh, dxt);
      (*dx)[ti] = std::move(dxt);
    }
    dh = std::move(dh_prev);
  }
}

}  // namespace rhgr::nn
