#pragma once

// Dense / batch-norm / dropout / activation primitives with analytic
// gradients. Everything operates on batch-major double matrices.

#include <algorithm>
#include <cmath>

#include "rhgr/core.hpp"

namespace rhgr::nn {

struct DenseParams {
  Matrix w;  // in x out
  Matrix b;  // 1 x out

  DenseParams() = default;
  DenseParams(std::size_t in, std::size_t out) : w(in, out), b(1, out) {}

  void init(Rng& rng) {
    // Glorot uniform
    const double lim = std::sqrt(6.0 / static_cast<double>(w.rows + w.cols));
    for (double& v : w.data) v = (2.0 * rand_uniform(rng) - 1.0) * lim;
    std::fill(b.data.begin(), b.data.end(), 0.0);
  }
};

inline Vec dense_forward(const Vec& x, const DenseParams& p) {
  if (x.size() != p.w.rows) throw ShapeError("dense_forward: input length mismatch");
  if (!all_finite(x)) throw NumericError("dense_forward: non-finite input");
  Vec y(p.w.cols);
  for (std::size_t j = 0; j < p.w.cols; ++j) y[j] = p.b(0, j);
  for (std::size_t i = 0; i < p.w.rows; ++i) {
    const double xi = x[i];
    for (std::size_t j = 0; j < p.w.cols; ++j) y[j] += xi * p.w(i, j);
  }
  return y;
}

// y = x * w + b over a batch.
inline Matrix dense_forward(const Matrix& x, const DenseParams& p) {
  if (x.cols != p.w.rows) throw ShapeError("dense_forward: input width mismatch");
  Matrix y(x.rows, p.w.cols);
  for (std::size_t i = 0; i < x.rows; ++i)
    for (std::size_t j = 0; j < p.w.cols; ++j) y(i, j) = p.b(0, j);
  matmul_acc(x, p.w, y);
  return y;
}

// Accumulates parameter grads; returns grad w.r.t. x.
inline Matrix dense_backward(const Matrix& x, const DenseParams& p, const Matrix& dy,
                             Matrix& dw, Matrix& db) {
  matmul_at_b_acc(x, dy, dw);
  for (std::size_t i = 0; i < dy.rows; ++i)
    for (std::size_t j = 0; j < dy.cols; ++j) db(0, j) += dy(i, j);
  Matrix dx(x.rows, x.cols, 0.0);
  matmul_a_bt_acc(dy, p.w, dx);
  return dx;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline Vec softmax(const Vec& logits) {
  if (!all_finite(logits)) throw NumericError("softmax: non-finite logits");
  const double m = *std::max_element(logits.begin(), logits.end());
  Vec out(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - m);
    sum += out[i];
  }
  for (double& v : out) v /= sum;
  return out;
}

inline double sparse_ce_loss(const Vec& probs, std::size_t label) {
  if (label >= probs.size()) throw LabelError("sparse_ce_loss: label out of range");
  return -std::log(std::max(probs[label], 1e-12));
}

struct BatchNormParams {
  Vec gamma, beta;
  Vec running_mean, running_var;
  double momentum = 0.99;
  double eps = 1e-5;

  explicit BatchNormParams(std::size_t dim = 0)
      : gamma(dim, 1.0), beta(dim, 0.0), running_mean(dim, 0.0), running_var(dim, 1.0) {}
  std::size_t dim() const { return gamma.size(); }
};

// Per-batch statistics cached for the backward pass.
struct BatchNormCache {
  Vec mean, inv_std;
  Matrix xhat;
};

enum class Mode { Train, Infer };

inline Matrix batchnorm_forward(const Matrix& x, BatchNormParams& p, Mode mode,
                                BatchNormCache* cache = nullptr) {
  if (x.cols != p.dim()) throw ShapeError("batchnorm_forward: width mismatch");
  if (mode == Mode::Train && x.rows == 0) throw BatchError("batchnorm_forward: empty batch");
  Matrix y(x.rows, x.cols);
  const std::size_t n = x.rows, d = x.cols;
  if (mode == Mode::Train) {
    Vec mean(d, 0.0), var(d, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) mean[j] += x(i, j);
    for (double& m : mean) m /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) {
        const double c = x(i, j) - mean[j];
        var[j] += c * c;
      }
    for (double& v : var) v /= static_cast<double>(n);
    Vec inv_std(d);
    for (std::size_t j = 0; j < d; ++j) inv_std[j] = 1.0 / std::sqrt(var[j] + p.eps);
    Matrix xhat(n, d);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) {
        xhat(i, j) = (x(i, j) - mean[j]) * inv_std[j];
        y(i, j) = p.gamma[j] * xhat(i, j) + p.beta[j];
      }
    for (std::size_t j = 0; j < d; ++j) {
      p.running_mean[j] = p.momentum * p.running_mean[j] + (1.0 - p.momentum) * mean[j];
      p.running_var[j] = p.momentum * p.running_var[j] + (1.0 - p.momentum) * var[j];
    }
    if (cache) {
      cache->mean = std::move(mean);
      cache->inv_std = std::move(inv_std);
      cache->xhat = std::move(xhat);
    }
  } else {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) {
        const double xhat = (x(i, j) - p.running_mean[j]) /
                            std::sqrt(p.running_var[j] + p.eps);
        y(i, j) = p.gamma[j] * xhat + p.beta[j];
      }
  }
  return y;
}

inline Matrix batchnorm_backward(const BatchNormParams& p, const BatchNormCache& cache,
                                 const Matrix& dy, Vec& dgamma, Vec& dbeta) {
  const std::size_t n = dy.rows, d = dy.cols;
  Vec mean_dy(d, 0.0), mean_dy_xhat(d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      mean_dy[j] += dy(i, j);
      mean_dy_xhat[j] += dy(i, j) * cache.xhat(i, j);
      dgamma[j] += dy(i, j) * cache.xhat(i, j);
      dbeta[j] += dy(i, j);
    }
  for (std::size_t j = 0; j < d; ++j) {
    mean_dy[j] /= static_cast<double>(n);
    mean_dy_xhat[j] /= static_cast<double>(n);
  }
  Matrix dx(n, d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j)
      dx(i, j) = p.gamma[j] * cache.inv_std[j] *
                 (dy(i, j) - mean_dy[j] - cache.xhat(i, j) * mean_dy_xhat[j]);
  return dx;
}

// Inverted dropout. The mask is produced separately so that a caller (e.g. a
// finite-difference check) can reuse one mask across several forwards.
inline Matrix dropout_mask(std::size_t rows, std::size_t cols, double rate, Rng& rng) {
  if (rate >= 1.0 || rate < 0.0) throw ConfigError("dropout: rate must be in [0,1)");
  Matrix mask(rows, cols, 1.0);
  if (rate == 0.0) return mask;
  const double scale = 1.0 / (1.0 - rate);
  for (double& m : mask.data) m = (rand_uniform(rng) < rate) ? 0.0 : scale;
  return mask;
}

inline Matrix dropout_apply(const Matrix& x, const Matrix& mask) {
  if (!x.same_shape(mask)) throw ShapeError("dropout_apply: mask shape mismatch");
  Matrix y = x;
  for (std::size_t i = 0; i < y.data.size(); ++i) y.data[i] *= mask.data[i];
  return y;
}

inline Matrix dropout_apply(const Matrix& x, double rate, std::uint64_t seed, Mode mode) {
  if (rate >= 1.0 || rate < 0.0) throw ConfigError("dropout: rate must be in [0,1)");
  if (mode == Mode::Infer || rate == 0.0) return x;
  Rng rng(seed);
  return dropout_apply(x, dropout_mask(x.rows, x.cols, rate, rng));
}

inline Matrix relu(const Matrix& x) {
  Matrix y = x;
  for (double& v : y.data) v = std::max(v, 0.0);
  return y;
}

inline Matrix relu_backward(const Matrix& pre, const Matrix& dy) {
  Matrix dx = dy;
  for (std::size_t i = 0; i < dx.data.size(); ++i)
    if (pre.data[i] <= 0.0) dx.data[i] = 0.0;
  return dx;
}

// z = mu + exp(0.5*logvar) (.) noise
inline Vec reparameterize(const Vec& mu, const Vec& logvar, const Vec& noise) {
  if (mu.size() != logvar.size() || mu.size() != noise.size())
    throw ShapeError("reparameterize: shape mismatch");
  Vec z(mu.size());
  for (std::size_t i = 0; i < z.size(); ++i)
    z[i] = mu[i] + std::exp(0.5 * logvar[i]) * noise[i];
  return z;
}

}  // namespace rhgr::nn
