#pragma once

// Gradient-based Shapley-style attribution over sliding windows, global
// per-feature aggregation, reference-value envelopes per class, and the
// characterization of flagged gestures with rendered feedback.

#include <functional>
#include <map>

#include "rhgr/dsp/labels.hpp"
#include "rhgr/model/classifier.hpp"
#include "rhgr/model/metrics.hpp"

namespace rhgr::explain {

using Window = std::vector<Matrix>;  // L entries of 1 x 5

inline Window window_from(const model::WindowedDataset& ds, std::size_t w) {
  Window x(ds.window_len, Matrix(1, model::kFeatDim));
  const double* p = ds.window(w);
  for (std::size_t t = 0; t < ds.window_len; ++t)
    for (std::size_t j = 0; j < model::kFeatDim; ++j)
      x[t](0, j) = p[t * model::kFeatDim + j];
  return x;
}

struct AttributionMatrix {
  std::size_t window_id = 0;
  int target_class = 0;
  Matrix phi;               // L x 5, signed
  double base_value = 0.0;  // mean model output over the background set
};

// grad_fn(point, &f) returns d f / d point and writes the scalar output f.
using GradFn = std::function<std::vector<Matrix>(const Window&, double*)>;

// Sampling-based expected gradients: background references are visited
// cyclically (stratified) and the path position alpha is drawn uniformly,
// phi[t,d] = mean_s (x - x'_s)[t,d] * df/dx[t,d] at x'_s + alpha_s (x - x'_s).
inline AttributionMatrix expected_gradients_fn(const GradFn& grad_fn, const Window& x,
                                               const std::vector<Window>& background,
                                               std::size_t n_samples, int target_class,
                                               std::uint64_t seed) {
  if (background.empty()) throw ConfigError("expected_gradients: empty background set");
  if (n_samples == 0) throw ConfigError("expected_gradients: n_samples must be positive");
  const std::size_t l = x.size();
  AttributionMatrix out;
  out.target_class = target_class;
  out.phi = Matrix(l, model::kFeatDim, 0.0);
  Rng rng(seed);
  Window point(l, Matrix(1, model::kFeatDim));
  for (std::size_t s = 0; s < n_samples; ++s) {
    const Window& ref = background[s % background.size()];
    const double alpha = rand_uniform(rng);
    for (std::size_t t = 0; t < l; ++t)
      for (std::size_t j = 0; j < model::kFeatDim; ++j)
        point[t](0, j) = ref[t](0, j) + alpha * (x[t](0, j) - ref[t](0, j));
    std::vector<Matrix> g = grad_fn(point, nullptr);
    for (std::size_t t = 0; t < l; ++t)
      for (std::size_t j = 0; j < model::kFeatDim; ++j)
        out.phi(t, j) += (x[t](0, j) - ref[t](0, j)) * g[t](0, j);
  }
  for (double& v : out.phi.data) v /= static_cast<double>(n_samples);
  double base = 0.0;
  for (const Window& ref : background) {
    double f = 0.0;
    grad_fn(ref, &f);
    base += f;
  }
  out.base_value = base / static_cast<double>(background.size());
  if (!all_finite(out.phi.data)) throw NumericError("expected_gradients: non-finite phi");
  return out;
}

// The model head being explained: pre-softmax logit of `target_class` at the
// window's last frame.
inline GradFn logit_grad_fn(model::GruModel& m, int target_class) {
  return [&m, target_class](const Window& point, double* f) {
    Vec logits;
    std::vector<Matrix> g = model::input_logit_gradient(m, point, target_class, &logits);
    if (f) *f = logits[static_cast<std::size_t>(target_class)];
    return g;
  };
}

inline AttributionMatrix expected_gradients(model::GruModel& m, const Window& x,
                                            const std::vector<Window>& background,
                                            std::size_t n_samples, int target_class,
                                            std::uint64_t seed) {
  return expected_gradients_fn(logit_grad_fn(m, target_class), x, background, n_samples,
                               target_class, seed);
}

inline double model_logit(model::GruModel& m, const Window& x, int target_class) {
  Vec logits;
  model::input_logit_gradient(m, x, target_class, &logits);
  return logits[static_cast<std::size_t>(target_class)];
}

// One attribution matrix per stride-1 window whose label frame falls in the
// extended gesture region; no cross-window averaging. Falls back to the
// refined-label anchor when the recording carries no gesture labels.
inline std::vector<AttributionMatrix> gesture_attributions(
    model::GruModel& m, const dsp::FeatureSequence& seq,
    const std::vector<Window>& background, int target_class,
    std::size_t n_samples = 256, std::uint64_t seed = 0) {
  std::vector<int> labels = seq.labels;
  bool any = false;
  for (int l : labels) any = any || l != 0;
  if (!any) {
    dsp::FeatureSequence tmp = seq;
    labels = dsp::refine_labels(tmp, target_class).labels;
  }
  auto [lo, hi] = model::extended_window(labels);
  model::WindowedDataset ds;
  {
    dsp::FeatureSequence labeled = seq;
    labeled.labels = labels;
    ds = model::window_dataset(labeled);
  }
  std::vector<AttributionMatrix> out;
  for (std::size_t w = 0; w < ds.count(); ++w) {
    const std::size_t label_frame = w + ds.window_len - 1;
    if (label_frame < lo || label_frame > hi) continue;
    AttributionMatrix a = expected_gradients(m, window_from(ds, w), background, n_samples,
                                             target_class, derive_seed(seed, "eg", w));
    a.window_id = w;
    out.push_back(std::move(a));
  }
  return out;
}

// Eq-style global importance: I_j = mean of |phi[.,j]| over every
// (window, timestep) cell.
inline std::array<double, model::kFeatDim> global_attribution(
    const std::vector<AttributionMatrix>& mats) {
  if (mats.empty()) throw DataError("global_attribution: no attribution matrices");
  std::array<double, model::kFeatDim> i{};
  std::size_t cells = 0;
  for (const auto& a : mats) {
    for (std::size_t t = 0; t < a.phi.rows; ++t)
      for (std::size_t j = 0; j < model::kFeatDim; ++j) i[j] += std::abs(a.phi(t, j));
    cells += a.phi.rows;
  }
  for (double& v : i) v /= static_cast<double>(cells);
  return i;
}

inline double srv_median(double i_min, double i_max) { return 0.5 * (i_min + i_max); }

inline std::array<double, model::kFeatDim - 1> srv_slopes(
    const std::array<double, model::kFeatDim>& medians) {
  std::array<double, model::kFeatDim - 1> s{};
  for (std::size_t j = 0; j + 1 < model::kFeatDim; ++j) s[j] = medians[j + 1] - medians[j];
  return s;
}

struct SrvEntry {
  std::array<double, model::kFeatDim> i_min{}, i_max{}, i_median{};
  std::array<double, model::kFeatDim - 1> slope{};
  std::size_t n = 0;
};

struct Srv {
  std::map<int, SrvEntry> per_class;
};

// Reference envelopes from n nominal gestures per class: per feature the
// min/max of the per-gesture global attributions, the midpoint median, and
// the slopes between consecutive features in the fixed order
// (range, doppler, azimuth, elevation, peak).
inline Srv compute_srv(const std::map<int, std::vector<dsp::FeatureSequence>>& nominal,
                       model::GruModel& m, const std::vector<Window>& background,
                       std::size_t n = 10, std::size_t n_samples = 256,
                       std::uint64_t seed = 0) {
  Srv srv;
  for (const auto& [cls, recs] : nominal) {
    if (recs.size() < n)
      throw DataError("compute_srv: class " + std::to_string(cls) + " has " +
                      std::to_string(recs.size()) + " nominal gestures, need " +
                      std::to_string(n));
    SrvEntry e;
    e.n = n;
    e.i_min.fill(std::numeric_limits<double>::infinity());
    e.i_max.fill(-std::numeric_limits<double>::infinity());
    for (std::size_t r = 0; r < n; ++r) {
      auto mats = gesture_attributions(m, recs[r], background, cls, n_samples,
                                       derive_seed(seed, "srv", r));
      auto i = global_attribution(mats);
      for (std::size_t j = 0; j < model::kFeatDim; ++j) {
        e.i_min[j] = std::min(e.i_min[j], i[j]);
        e.i_max[j] = std::max(e.i_max[j], i[j]);
      }
    }
    for (std::size_t j = 0; j < model::kFeatDim; ++j)
      e.i_median[j] = srv_median(e.i_min[j], e.i_max[j]);
    e.slope = srv_slopes(e.i_median);
    srv.per_class[cls] = e;
  }
  return srv;
}

enum class Deviation { InRange, AboveMax, BelowMin };
enum class Diagnosis { TooFast, TooSlow, TooFarOrWrist, Inconclusive };

inline const char* deviation_name(Deviation d) {
  switch (d) {
    case Deviation::InRange: return "in_range";
    case Deviation::AboveMax: return "above_max";
    case Deviation::BelowMin: return "below_min";
  }
  return "?";
}

inline const char* diagnosis_name(Diagnosis d) {
  switch (d) {
    case Diagnosis::TooFast: return "too_fast";
    case Diagnosis::TooSlow: return "too_slow";
    case Diagnosis::TooFarOrWrist: return "too_far_or_wrist";
    case Diagnosis::Inconclusive: return "inconclusive";
  }
  return "?";
}

inline constexpr std::array<const char*, model::kFeatDim> kFeatureNames{
    "range", "doppler", "azimuth", "elevation", "peak"};

struct CharacterizationReport {
  int intended_class = 0;
  std::array<double, model::kFeatDim> i{};
  std::array<Deviation, model::kFeatDim> deviation{};
  std::vector<std::size_t> slope_flips;  // indices j where sign(slope_j) flipped
  Diagnosis diagnosis = Diagnosis::Inconclusive;
  std::string message;
};

// Pure decision rule over precomputed attributions; feature indices follow
// the fixed order (0 range, 1 doppler, 2 azimuth, 3 elevation, 4 peak).
inline CharacterizationReport diagnose(const std::array<double, model::kFeatDim>& i,
                                       const SrvEntry& srv, int intended_class) {
  CharacterizationReport rep;
  rep.intended_class = intended_class;
  rep.i = i;
  for (std::size_t j = 0; j < model::kFeatDim; ++j) {
    if (i[j] > srv.i_max[j]) rep.deviation[j] = Deviation::AboveMax;
    else if (i[j] < srv.i_min[j]) rep.deviation[j] = Deviation::BelowMin;
    else rep.deviation[j] = Deviation::InRange;
  }
  auto gesture_slope = srv_slopes(i);
  for (std::size_t j = 0; j + 1 < model::kFeatDim; ++j)
    if (gesture_slope[j] * srv.slope[j] < 0.0) rep.slope_flips.push_back(j);
  const bool range_doppler_flip =
      std::find(rep.slope_flips.begin(), rep.slope_flips.end(), 0u) !=
      rep.slope_flips.end();
  if (rep.deviation[1] == Deviation::AboveMax && range_doppler_flip)
    rep.diagnosis = Diagnosis::TooFast;
  else if (rep.deviation[1] == Deviation::BelowMin)
    rep.diagnosis = Diagnosis::TooSlow;
  else if (rep.deviation[0] == Deviation::BelowMin)
    rep.diagnosis = Diagnosis::TooFarOrWrist;
  else
    rep.diagnosis = Diagnosis::Inconclusive;
  return rep;
}

inline std::string render_feedback(const CharacterizationReport& rep) {
  const std::string cls = class_name(rep.intended_class);
  std::string deviating;
  for (std::size_t j = 0; j < model::kFeatDim; ++j)
    if (rep.deviation[j] != Deviation::InRange) {
      if (!deviating.empty()) deviating += ", ";
      deviating += std::string(kFeatureNames[j]) + " " +
                   deviation_name(rep.deviation[j]);
    }
  switch (rep.diagnosis) {
    case Diagnosis::TooFast:
      return "Your " + cls + " gesture looks too fast (" + deviating +
             "): try performing the gesture more slowly.";
    case Diagnosis::TooSlow:
      return "Your " + cls + " gesture looks too slow (" + deviating +
             "): try performing the gesture more quickly and fluidly.";
    case Diagnosis::TooFarOrWrist:
      return "Your " + cls + " gesture is hard to see (" + deviating +
             "): perform the gesture closer to the radar with an extended arm.";
    case Diagnosis::Inconclusive:
      return deviating.empty()
                 ? "Your " + cls + " gesture was flagged but shows no clear "
                                   "feature deviation."
                 : "Your " + cls + " gesture deviates (" + deviating +
                       "), but no single cause stands out.";
  }
  return "";
}

// End-to-end characterization of a flagged recording against the intended
// class's reference envelope.
inline CharacterizationReport characterize(model::GruModel& m,
                                           const dsp::FeatureSequence& seq,
                                           int intended_class, const Srv& srv,
                                           const std::vector<Window>& background,
                                           std::size_t n_samples = 256,
                                           std::uint64_t seed = 0) {
  if (intended_class <= 0 || intended_class >= kNumClasses)
    throw InputError("characterize: invalid intended class " +
                     std::to_string(intended_class));
  auto it = srv.per_class.find(intended_class);
  if (it == srv.per_class.end())
    throw InputError("characterize: no reference values for class " +
                     std::to_string(intended_class));
  auto mats = gesture_attributions(m, seq, background, intended_class, n_samples, seed);
  CharacterizationReport rep = diagnose(global_attribution(mats), it->second,
                                        intended_class);
  rep.message = render_feedback(rep);
  return rep;
}

}  // namespace rhgr::explain
