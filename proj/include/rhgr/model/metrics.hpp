#pragma once

// The three evaluation metrics: frame accuracy, gesture-frame accuracy and
// the recording-level dynamic gesture accuracy with its +-3/4-frame
// tolerance window and >4-frame length gate.

#include <set>

#include "rhgr/model/classes.hpp"

namespace rhgr::model {

struct LabeledRecording {
  std::vector<int> pred;
  std::vector<int> truth;
};

struct MetricsReport {
  double acc = 0.0;
  double gesture_acc = 0.0;
  double dg_acc = 0.0;
  // confusion[t][p] = frames with truth t predicted p
  std::array<std::array<std::size_t, kNumClasses>, kNumClasses> confusion{};
  std::size_t recordings = 0;
  std::size_t skipped_gesture_recordings = 0;  // no gesture frame in truth
};

// Mean over recordings of the per-recording frame-match fraction.
inline double accuracy(const std::vector<LabeledRecording>& recs) {
  if (recs.empty()) throw DataError("accuracy: no recordings");
  double total = 0.0;
  for (const auto& r : recs) {
    if (r.pred.size() != r.truth.size()) throw ShapeError("accuracy: length mismatch");
    std::size_t match = 0;
    for (std::size_t i = 0; i < r.pred.size(); ++i)
      if (r.pred[i] == r.truth[i]) ++match;
    total += static_cast<double>(match) / static_cast<double>(r.pred.size());
  }
  return total / static_cast<double>(recs.size());
}

// Same, restricted to frames whose truth is not Background. Recordings with
// no gesture frames are excluded.
inline double gesture_accuracy(const std::vector<LabeledRecording>& recs,
                               std::size_t* skipped = nullptr) {
  double total = 0.0;
  std::size_t used = 0;
  for (const auto& r : recs) {
    if (r.pred.size() != r.truth.size())
      throw ShapeError("gesture_accuracy: length mismatch");
    std::size_t gestures = 0, match = 0;
    for (std::size_t i = 0; i < r.truth.size(); ++i)
      if (r.truth[i] != 0) {
        ++gestures;
        if (r.pred[i] == r.truth[i]) ++match;
      }
    if (gestures == 0) {
      if (skipped) ++*skipped;
      continue;
    }
    total += static_cast<double>(match) / static_cast<double>(gestures);
    ++used;
  }
  if (used == 0) throw DataError("gesture_accuracy: no recording has gesture frames");
  return total / static_cast<double>(used);
}

// Extended tolerance window [min(S)-3, max(S)+4], both ends inclusive and
// clamped to the recording.
inline std::pair<std::size_t, std::size_t> extended_window(const std::vector<int>& truth) {
  std::ptrdiff_t lo = -1, hi = -1;
  for (std::size_t i = 0; i < truth.size(); ++i)
    if (truth[i] != 0) {
      if (lo < 0) lo = static_cast<std::ptrdiff_t>(i);
      hi = static_cast<std::ptrdiff_t>(i);
    }
  if (lo < 0) throw DataError("extended_window: no gesture frames");
  lo = std::max<std::ptrdiff_t>(lo - 3, 0);
  hi = std::min<std::ptrdiff_t>(hi + 4, static_cast<std::ptrdiff_t>(truth.size()) - 1);
  return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

inline double dynamic_gesture_accuracy(const std::vector<LabeledRecording>& recs) {
  if (recs.empty()) throw DataError("dynamic_gesture_accuracy: no recordings");
  double total = 0.0;
  for (const auto& r : recs) {
    auto [lo, hi] = extended_window(r.truth);
    std::set<int> pred_classes, true_classes;
    std::size_t pred_frames = 0;
    for (std::size_t i = lo; i <= hi; ++i) {
      if (r.pred[i] != 0) {
        pred_classes.insert(r.pred[i]);
        ++pred_frames;
      }
      if (r.truth[i] != 0) true_classes.insert(r.truth[i]);
    }
    if (pred_classes == true_classes && pred_frames > 4) total += 1.0;
  }
  return total / static_cast<double>(recs.size());
}

inline MetricsReport compute_metrics(const std::vector<LabeledRecording>& recs) {
  MetricsReport rep;
  rep.recordings = recs.size();
  rep.acc = accuracy(recs);
  rep.gesture_acc = gesture_accuracy(recs, &rep.skipped_gesture_recordings);
  rep.dg_acc = dynamic_gesture_accuracy(recs);
  for (const auto& r : recs)
    for (std::size_t i = 0; i < r.truth.size(); ++i)
      ++rep.confusion[static_cast<std::size_t>(r.truth[i])]
                     [static_cast<std::size_t>(r.pred[i])];
  return rep;
}

}  // namespace rhgr::model
