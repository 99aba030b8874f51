#pragma once

// Dynamic label refinement: anchor the gesture label at the minimum-range
// frame whose signal amplitude clears a threshold, then hold it for
// L_gesture frames.

#include <limits>

#include "rhgr/dsp/pipeline.hpp"

namespace rhgr::dsp {

inline constexpr int kBackgroundClass = 0;
inline constexpr std::size_t kGestureFrames = 10;  // L_gesture

struct RefineResult {
  std::vector<int> labels;
  std::size_t anchor = 0;
  bool threshold_fallback = false;  // no frame passed the amplitude threshold
};

// amp_threshold < 0 selects the default of 0.5 x the recording's max peak.
inline RefineResult refine_labels(const FeatureSequence& seq, int gesture_class,
                                  std::size_t l_gesture = kGestureFrames,
                                  double amp_threshold = -1.0) {
  const std::size_t t = seq.size();
  if (t < l_gesture) throw DataError("refine_labels: sequence shorter than L_gesture");
  double max_peak = 0.0;
  for (const auto& f : seq.frames) max_peak = std::max(max_peak, f.peak);
  const double thr = amp_threshold >= 0.0 ? amp_threshold : 0.5 * max_peak;

  RefineResult res;
  double best_range = std::numeric_limits<double>::infinity();
  bool found = false;
  for (std::size_t i = 0; i < t; ++i) {
    if (seq.frames[i].peak >= thr && seq.frames[i].range_m < best_range) {
      best_range = seq.frames[i].range_m;
      res.anchor = i;
      found = true;
    }
  }
  if (!found) {
    res.threshold_fallback = true;
    for (std::size_t i = 0; i < t; ++i)
      if (seq.frames[i].range_m < best_range) {
        best_range = seq.frames[i].range_m;
        res.anchor = i;
      }
  }
  // keep the full L_gesture run inside the recording
  if (res.anchor + l_gesture > t) res.anchor = t - l_gesture;
  res.labels.assign(t, kBackgroundClass);
  for (std::size_t i = res.anchor; i < res.anchor + l_gesture; ++i)
    res.labels[i] = gesture_class;
  return res;
}

}  // namespace rhgr::dsp
