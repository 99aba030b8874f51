#pragma once

// Windowing and feature normalization for the classifier and the VAE.

#include <string>
#include <vector>

#include "rhgr/dsp/pipeline.hpp"
#include "rhgr/model/classes.hpp"

namespace rhgr::model {

inline constexpr std::size_t kWindowLen = 22;  // L_window
inline constexpr std::size_t kFeatDim = dsp::kNumFeatures;

struct WindowRef {
  std::string recording_id;
  std::size_t start = 0;
  bool padded = false;
};

// Overlapping stride-1 windows; each window is labeled by its last frame.
struct WindowedDataset {
  std::size_t window_len = kWindowLen;
  std::vector<double> data;  // W x L x 5, row-major
  std::vector<int> labels;
  std::vector<WindowRef> provenance;

  std::size_t count() const { return labels.size(); }
  const double* window(std::size_t w) const { return &data[w * window_len * kFeatDim]; }

  void append(const WindowedDataset& other) {
    if (other.window_len != window_len)
      throw ShapeError("WindowedDataset::append: window length mismatch");
    data.insert(data.end(), other.data.begin(), other.data.end());
    labels.insert(labels.end(), other.labels.begin(), other.labels.end());
    provenance.insert(provenance.end(), other.provenance.begin(), other.provenance.end());
  }
};

// Sequences shorter than the window are left-padded by replicating the first
// frame, so streaming inference can label every frame.
inline WindowedDataset window_dataset(const dsp::FeatureSequence& seq,
                                      std::size_t l_window = kWindowLen,
                                      std::size_t stride = 1) {
  if (stride == 0) throw ConfigError("window_dataset: stride must be positive");
  if (seq.labels.size() != seq.size())
    throw DataError("window_dataset: sequence has no per-frame labels");
  WindowedDataset ds;
  ds.window_len = l_window;
  const std::size_t t = seq.size();
  auto push_window = [&](std::ptrdiff_t start, std::size_t label_frame, bool padded) {
    for (std::size_t i = 0; i < l_window; ++i) {
      const std::ptrdiff_t f = start + static_cast<std::ptrdiff_t>(i);
      const auto arr = seq.frames[static_cast<std::size_t>(std::max<std::ptrdiff_t>(f, 0))]
                           .as_array();
      ds.data.insert(ds.data.end(), arr.begin(), arr.end());
    }
    ds.labels.push_back(seq.labels[label_frame]);
    ds.provenance.push_back(
        {seq.recording_id, static_cast<std::size_t>(std::max<std::ptrdiff_t>(start, 0)),
         padded});
  };
  if (t < l_window) {
    push_window(static_cast<std::ptrdiff_t>(t) - static_cast<std::ptrdiff_t>(l_window),
                t - 1, true);
    return ds;
  }
  for (std::size_t w = 0; w + l_window <= t; w += stride)
    push_window(static_cast<std::ptrdiff_t>(w), w + l_window - 1, false);
  return ds;
}

struct FeatureStats {
  std::array<double, kFeatDim> mean{}, stdev{}, min{}, max{};
  FeatureStats() {  // identity transform until computed
    stdev.fill(1.0);
    max.fill(1.0);
  }
};

// Statistics must come from the training split only.
inline FeatureStats compute_feature_stats(const std::vector<dsp::FeatureSequence>& seqs) {
  if (seqs.empty()) throw DataError("compute_feature_stats: empty split");
  FeatureStats st;
  st.stdev.fill(0.0);  // the default is the identity transform, not zero
  st.min.fill(std::numeric_limits<double>::infinity());
  st.max.fill(-std::numeric_limits<double>::infinity());
  std::size_t n = 0;
  for (const auto& s : seqs)
    for (const auto& f : s.frames) {
      const auto a = f.as_array();
      for (std::size_t j = 0; j < kFeatDim; ++j) {
        st.mean[j] += a[j];
        st.min[j] = std::min(st.min[j], a[j]);
        st.max[j] = std::max(st.max[j], a[j]);
      }
      ++n;
    }
  for (auto& m : st.mean) m /= static_cast<double>(n);
  for (const auto& s : seqs)
    for (const auto& f : s.frames) {
      const auto a = f.as_array();
      for (std::size_t j = 0; j < kFeatDim; ++j) {
        const double c = a[j] - st.mean[j];
        st.stdev[j] += c * c;
      }
    }
  for (auto& v : st.stdev) v = std::max(std::sqrt(v / static_cast<double>(n)), 1e-6);
  return st;
}

// z-score (classifier path)
inline dsp::FeatureSequence normalize_zscore(const dsp::FeatureSequence& seq,
                                             const FeatureStats& st) {
  dsp::FeatureSequence out = seq;
  for (auto& f : out.frames) {
    f.range_m = (f.range_m - st.mean[0]) / st.stdev[0];
    f.doppler_mps = (f.doppler_mps - st.mean[1]) / st.stdev[1];
    f.azimuth_deg = (f.azimuth_deg - st.mean[2]) / st.stdev[2];
    f.elevation_deg = (f.elevation_deg - st.mean[3]) / st.stdev[3];
    f.peak = (f.peak - st.mean[4]) / st.stdev[4];
  }
  return out;
}

inline dsp::FeatureSequence denormalize_zscore(const dsp::FeatureSequence& seq,
                                               const FeatureStats& st) {
  dsp::FeatureSequence out = seq;
  for (auto& f : out.frames) {
    f.range_m = f.range_m * st.stdev[0] + st.mean[0];
    f.doppler_mps = f.doppler_mps * st.stdev[1] + st.mean[1];
    f.azimuth_deg = f.azimuth_deg * st.stdev[2] + st.mean[2];
    f.elevation_deg = f.elevation_deg * st.stdev[3] + st.mean[3];
    f.peak = f.peak * st.stdev[4] + st.mean[4];
  }
  return out;
}

// min-max to [0,1] with clamping (VAE path; the sigmoid output demands it)
inline Vec flatten_minmax(const dsp::FeatureSequence& seq, const FeatureStats& st) {
  Vec out;
  out.reserve(seq.size() * kFeatDim);
  for (const auto& f : seq.frames) {
    const auto a = f.as_array();
    for (std::size_t j = 0; j < kFeatDim; ++j) {
      const double span = std::max(st.max[j] - st.min[j], 1e-6);
      out.push_back(std::clamp((a[j] - st.min[j]) / span, 0.0, 1.0));
    }
  }
  return out;
}

}  // namespace rhgr::model
