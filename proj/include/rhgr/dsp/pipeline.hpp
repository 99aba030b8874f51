#pragma once

// Lightweight per-frame preprocessing: range FFT, static clutter removal,
// closest-moving-target detection, Doppler / monopulse angle / peak
// extraction. The output per frame is the 5-feature vector
// (range, doppler, azimuth, elevation, peak).

#include <algorithm>
#include <array>
#include <string>

#include "rhgr/dsp/config.hpp"
#include "rhgr/fft.hpp"

namespace rhgr::dsp {

// Complex range profiles of one frame: rx x chirps x bins (half spectrum).
struct RangeProfiles {
  std::size_t rx = 0, chirps = 0, bins = 0;
  CVec data;

  RangeProfiles(std::size_t r, std::size_t c, std::size_t b)
      : rx(r), chirps(c), bins(b), data(r * c * b) {}
  Cplx& at(std::size_t r, std::size_t c, std::size_t b) {
    return data[(r * chirps + c) * bins + b];
  }
  Cplx at(std::size_t r, std::size_t c, std::size_t b) const {
    return data[(r * chirps + c) * bins + b];
  }
};

// Fast-time processing of one frame: remove DC per chirp, FFT along the
// samples, keep the first half of the spectrum.
inline RangeProfiles range_profiles(const RadarCube& cube, std::size_t frame) {
  const std::size_t bins = cube.samples / 2;
  RangeProfiles out(cube.rx, cube.chirps, bins);
  CVec buf(cube.samples);
  for (std::size_t r = 0; r < cube.rx; ++r)
    for (std::size_t c = 0; c < cube.chirps; ++c) {
      double mean = 0.0;
      for (std::size_t s = 0; s < cube.samples; ++s) mean += cube.at(frame, r, c, s);
      mean /= static_cast<double>(cube.samples);
      for (std::size_t s = 0; s < cube.samples; ++s)
        buf[s] = Cplx(cube.at(frame, r, c, s) - mean, 0.0);
      fft(buf);
      for (std::size_t b = 0; b < bins; ++b) out.at(r, c, b) = buf[b];
    }
  return out;
}

// Subtracts the complex mean over the slow-time (chirp) axis per (rx, bin).
inline RangeProfiles remove_static_clutter(const RangeProfiles& p) {
  if (p.chirps < 2) throw ConfigError("remove_static_clutter: need >= 2 chirps");
  RangeProfiles out(p.rx, p.chirps, p.bins);
  for (std::size_t r = 0; r < p.rx; ++r)
    for (std::size_t b = 0; b < p.bins; ++b) {
      Cplx mean(0.0, 0.0);
      for (std::size_t c = 0; c < p.chirps; ++c) mean += p.at(r, c, b);
      mean /= static_cast<double>(p.chirps);
      for (std::size_t c = 0; c < p.chirps; ++c) out.at(r, c, b) = p.at(r, c, b) - mean;
    }
  return out;
}

// Magnitude integrated over rx and chirps per range bin.
inline Vec integrate_magnitude(const RangeProfiles& p) {
  Vec energy(p.bins, 0.0);
  for (std::size_t r = 0; r < p.rx; ++r)
    for (std::size_t c = 0; c < p.chirps; ++c)
      for (std::size_t b = 0; b < p.bins; ++b) energy[b] += std::abs(p.at(r, c, b));
  return energy;
}

inline Vec gaussian_smooth(const Vec& v, double sigma) {
  if (sigma <= 0.0) return v;
  const int half = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  Vec kernel(2 * half + 1);
  double sum = 0.0;
  for (int i = -half; i <= half; ++i) {
    kernel[i + half] = std::exp(-0.5 * (i * i) / (sigma * sigma));
    sum += kernel[i + half];
  }
  for (double& k : kernel) k /= sum;
  Vec out(v.size(), 0.0);
  const int n = static_cast<int>(v.size());
  for (int i = 0; i < n; ++i)
    for (int k = -half; k <= half; ++k) {
      const int j = std::clamp(i + k, 0, n - 1);
      out[i] += kernel[k + half] * v[j];
    }
  return out;
}

// Sub-bin peak refinement: offset of the vertex of the parabola through
// three consecutive magnitude samples, clamped to half a bin.
inline double parabolic_offset(double y_m1, double y0, double y_p1) {
  const double denom = y_m1 - 2.0 * y0 + y_p1;
  if (std::abs(denom) < 1e-12) return 0.0;
  return std::clamp(0.5 * (y_m1 - y_p1) / denom, -0.5, 0.5);
}

// Lowest-index local maximum above threshold after Gaussian smoothing,
// falling back to the global argmax if nothing survives.
inline std::size_t detect_hand_bin(const Vec& energy, double smoothing_sigma,
                                   double threshold) {
  const Vec s = gaussian_smooth(energy, smoothing_sigma);
  const std::size_t n = s.size();
  for (std::size_t b = 0; b < n; ++b) {
    if (s[b] < threshold) continue;
    const bool left_ok = (b == 0) || (s[b] >= s[b - 1]);
    const bool right_ok = (b + 1 == n) || (s[b] > s[b + 1]);
    if (left_ok && right_ok) return b;
  }
  return static_cast<std::size_t>(
      std::max_element(s.begin(), s.end()) - s.begin());
}

// Slow-time FFT at one range bin. Keeps the per-rx complex spectra so the
// monopulse step can reuse the same Doppler cell.
struct DopplerResult {
  double velocity_mps = 0.0;
  double peak = 0.0;
  std::size_t doppler_bin = 0;         // fftshifted index
  std::vector<CVec> rx_spectra;        // per rx, fftshifted
};

inline DopplerResult doppler_at_bin(const RangeProfiles& p, std::size_t bin,
                                    const RadarConfig& cfg) {
  if (bin >= p.bins) throw ConfigError("doppler_at_bin: bin out of range");
  DopplerResult res;
  res.rx_spectra.resize(p.rx);
  Vec integrated(p.chirps, 0.0);
  for (std::size_t r = 0; r < p.rx; ++r) {
    CVec slow(p.chirps);
    for (std::size_t c = 0; c < p.chirps; ++c) slow[c] = p.at(r, c, bin);
    fft(slow);
    res.rx_spectra[r] = fftshift(slow);
    for (std::size_t k = 0; k < p.chirps; ++k)
      integrated[k] += std::abs(res.rx_spectra[r][k]);
  }
  res.doppler_bin = static_cast<std::size_t>(
      std::max_element(integrated.begin(), integrated.end()) - integrated.begin());
  res.peak = integrated[res.doppler_bin];
  const double center = static_cast<double>(p.chirps) / 2.0;
  // the clutter filter notches the DC bin, so a parabola touching it is
  // meaningless and would bias small velocities away from zero
  const std::size_t dc = p.chirps / 2;
  double delta = 0.0;
  if (res.doppler_bin > 0 && res.doppler_bin + 1 < p.chirps &&
      res.doppler_bin - 1 != dc && res.doppler_bin + 1 != dc)
    delta = parabolic_offset(integrated[res.doppler_bin - 1],
                             integrated[res.doppler_bin],
                             integrated[res.doppler_bin + 1]);
  // positive = approaching the radar
  res.velocity_mps =
      (static_cast<double>(res.doppler_bin) + delta - center) * cfg.v_res_mps();
  return res;
}

struct AngleEstimate {
  double azimuth_deg = 0.0;
  double elevation_deg = 0.0;
  bool low_confidence = false;
};

// Phase-comparison monopulse at the detected (range bin, Doppler bin) cell.
// theta = arcsin(dphi * lambda / (2 pi d)); with d = lambda/2 this is
// arcsin(dphi / pi).
inline AngleEstimate monopulse_angles(const DopplerResult& d, const RadarConfig& cfg) {
  AngleEstimate est;
  const Cplx ref = d.rx_spectra[cfg.rx_ref][d.doppler_bin];
  auto axis_angle = [&](std::size_t rx_other) {
    const Cplx other = d.rx_spectra[rx_other][d.doppler_bin];
    const double dphi = std::arg(other * std::conj(ref));
    const double s = dphi * cfg.wavelength_m() /
                     (2.0 * M_PI * cfg.antenna_spacing_m());
    if (s > 1.0 || s < -1.0) {
      est.low_confidence = true;
      return (s > 0.0 ? 90.0 : -90.0);
    }
    return std::asin(s) * 180.0 / M_PI;
  };
  est.azimuth_deg = axis_angle(cfg.rx_azimuth);
  est.elevation_deg = axis_angle(cfg.rx_elevation);
  return est;
}

struct FrameFeatures {
  double range_m = 0.0;
  double doppler_mps = 0.0;
  double azimuth_deg = 0.0;
  double elevation_deg = 0.0;
  double peak = 0.0;

  std::array<double, 5> as_array() const {
    return {range_m, doppler_mps, azimuth_deg, elevation_deg, peak};
  }
};

inline constexpr std::size_t kNumFeatures = 5;
inline const std::array<const char*, 5> kFeatureNames = {
    "range", "doppler", "azimuth", "elevation", "peak"};

struct DetectOptions {
  double smoothing_sigma = 1.0;
  // threshold = peak_fraction * reference energy (the frame max by default,
  // or a recording-level running max passed in by the caller)
  double peak_fraction = 0.12;
};

inline FrameFeatures extract_frame_features(const RadarCube& cube, std::size_t frame,
                                            const RadarConfig& cfg,
                                            const DetectOptions& opt = {},
                                            double energy_reference = -1.0) {
  RangeProfiles profiles = remove_static_clutter(range_profiles(cube, frame));
  const Vec energy = integrate_magnitude(profiles);
  const double ref = energy_reference > 0.0
                         ? energy_reference
                         : *std::max_element(energy.begin(), energy.end());
  const std::size_t bin =
      detect_hand_bin(energy, opt.smoothing_sigma, opt.peak_fraction * ref);
  DopplerResult dop = doppler_at_bin(profiles, bin, cfg);
  AngleEstimate ang = monopulse_angles(dop, cfg);
  const Vec smoothed = gaussian_smooth(energy, opt.smoothing_sigma);
  double delta = 0.0;
  if (bin > 0 && bin + 1 < smoothed.size())
    delta = parabolic_offset(smoothed[bin - 1], smoothed[bin], smoothed[bin + 1]);
  FrameFeatures f;
  f.range_m = (static_cast<double>(bin) + delta) * cfg.range_res_m();
  f.doppler_mps = dop.velocity_mps;
  f.azimuth_deg = ang.azimuth_deg;
  f.elevation_deg = ang.elevation_deg;
  f.peak = dop.peak;
  return f;
}

enum class AnomalyKind { None, Fast, Slow, Wrist };

inline std::string anomaly_kind_name(AnomalyKind k) {
  switch (k) {
    case AnomalyKind::Fast: return "fast";
    case AnomalyKind::Slow: return "slow";
    case AnomalyKind::Wrist: return "wrist";
    default: return "none";
  }
}

struct FeatureSequence {
  std::vector<FrameFeatures> frames;
  std::vector<int> labels;  // per-frame class ids, may be empty
  // recording metadata
  std::string recording_id;
  int user_id = 0;
  std::string location;
  int intended_class = 0;
  AnomalyKind anomaly = AnomalyKind::None;

  std::size_t size() const { return frames.size(); }
};

// Whole-recording feature extraction. The detection threshold tracks the
// running maximum of the integrated energy across the frames seen so far.
inline FeatureSequence extract_features(const RadarCube& cube, const RadarConfig& cfg,
                                        const DetectOptions& opt = {}) {
  FeatureSequence seq;
  seq.frames.reserve(cube.frames);
  double running_max = 0.0;
  for (std::size_t f = 0; f < cube.frames; ++f) {
    RangeProfiles profiles = remove_static_clutter(range_profiles(cube, f));
    const Vec energy = integrate_magnitude(profiles);
    running_max = std::max(running_max,
                           *std::max_element(energy.begin(), energy.end()));
    const std::size_t bin = detect_hand_bin(energy, opt.smoothing_sigma,
                                            opt.peak_fraction * running_max);
    DopplerResult dop = doppler_at_bin(profiles, bin, cfg);
    AngleEstimate ang = monopulse_angles(dop, cfg);
    FrameFeatures ff;
    ff.range_m = static_cast<double>(bin) * cfg.range_res_m();
    ff.doppler_mps = dop.velocity_mps;
    ff.azimuth_deg = ang.azimuth_deg;
    ff.elevation_deg = ang.elevation_deg;
    ff.peak = dop.peak;
    seq.frames.push_back(ff);
  }
  return seq;
}

}  // namespace rhgr::dsp
