#pragma once

// Bias-corrected Adam over a flat list of parameter tensors.

#include <cmath>
#include <vector>

#include "rhgr/core.hpp"

namespace rhgr::nn {

// Gradients mirror the parameter list they were computed for.
using GradientSet = std::vector<Matrix>;
using ParamRefs = std::vector<Matrix*>;

inline GradientSet zeros_like(const ParamRefs& params) {
  GradientSet g;
  g.reserve(params.size());
  for (const Matrix* p : params) g.emplace_back(p->rows, p->cols, 0.0);
  return g;
}

struct AdamState {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-7;
  std::size_t t = 0;
  GradientSet m, v;

  void reset(const ParamRefs& params) {
    t = 0;
    m = zeros_like(params);
    v = zeros_like(params);
  }
};

inline void adam_step(const ParamRefs& params, const GradientSet& grads, AdamState& st) {
  if (params.size() != grads.size()) throw ShapeError("adam_step: grad count mismatch");
  if (st.m.empty()) st.reset(params);
  ++st.t;
  const double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.t));
  const double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Matrix& p = *params[i];
    const Matrix& g = grads[i];
    if (!p.same_shape(g) || !p.same_shape(st.m[i]))
      throw ShapeError("adam_step: shape mismatch");
    for (std::size_t k = 0; k < p.data.size(); ++k) {
      st.m[i].data[k] = st.beta1 * st.m[i].data[k] + (1.0 - st.beta1) * g.data[k];
      st.v[i].data[k] = st.beta2 * st.v[i].data[k] + (1.0 - st.beta2) * g.data[k] * g.data[k];
      const double mhat = st.m[i].data[k] / bc1;
      const double vhat = st.v[i].data[k] / bc2;
      p.data[k] -= st.lr * mhat / (std::sqrt(vhat) + st.eps);
    }
  }
}

}  // namespace rhgr::nn
