#pragma once

// Deterministic FMCW point-target simulator. Emits raw IF sample cubes for
// nominal and anomalous (fast / slow / wrist) gesture executions with
// per-frame ground truth.

#include <vector>

#include "rhgr/dsp/config.hpp"
#include "rhgr/dsp/pipeline.hpp"
#include "rhgr/model/classes.hpp"

namespace rhgr::sim {

using dsp::AnomalyKind;
using dsp::RadarConfig;
using dsp::RadarCube;

struct TargetState {
  double range_m = 0.0;
  double radial_velocity_mps = 0.0;  // positive = approaching
  double azimuth_deg = 0.0;
  double elevation_deg = 0.0;
  double amplitude = 0.0;
};

// Per-user execution style; this is what calibration has to adapt to.
struct UserStyle {
  double speed = 1.0;
  double range_offset_m = 0.0;
  double azimuth_bias_deg = 0.0;
  double elevation_bias_deg = 0.0;
};

// Style bundles drawn from a seeded generator; user 0 is the neutral style.
inline UserStyle user_style(int user_id, std::uint64_t base_seed) {
  UserStyle s;
  if (user_id == 0) return s;
  Rng rng(derive_seed(base_seed, "user_style", static_cast<std::uint64_t>(user_id)));
  s.speed = 0.7 + 0.7 * rand_uniform(rng);
  s.range_offset_m = -0.12 + 0.24 * rand_uniform(rng);
  s.azimuth_bias_deg = -12.0 + 24.0 * rand_uniform(rng);
  s.elevation_bias_deg = -12.0 + 24.0 * rand_uniform(rng);
  return s;
}

struct TrajectorySpec {
  int gesture_class = static_cast<int>(GestureClass::Push);
  AnomalyKind anomaly = AnomalyKind::None;
  std::size_t total_frames = 100;
  std::size_t start_frame = 42;
  std::size_t duration = 10;   // overridden per anomaly kind below
  double snr_db = 20.0;
  std::uint64_t seed = 0;
  UserStyle style;
  bool body_clutter = true;

  std::size_t effective_duration() const {
    switch (anomaly) {
      case AnomalyKind::Fast: return 3;
      case AnomalyKind::Slow: return 90;
      default: return duration;
    }
  }
};

struct GroundTruth {
  std::vector<TargetState> states;  // per frame
  std::vector<int> labels;          // gesture class during execution frames
  int intended_class = 0;
  AnomalyKind anomaly = AnomalyKind::None;
  std::size_t gesture_start = 0;
  std::size_t gesture_duration = 0;
};

// Class-specific kinematics over [0, 1] gesture progress.
// Swipes sweep one angle axis monotonically with a range dip at the center;
// Push dips deeper in range with no angular sweep. Wrist executions scale
// the range excursion by 0.4 and the amplitude by 0.6.
inline GroundTruth gesture_trajectory(const TrajectorySpec& spec, const RadarConfig& cfg) {
  const int cls = spec.gesture_class;
  if (cls < 1 || cls >= kNumClasses)
    throw ConfigError("gesture_trajectory: invalid gesture class");
  const std::size_t dur = spec.effective_duration();
  if (spec.start_frame + dur > spec.total_frames)
    throw ConfigError("gesture_trajectory: gesture does not fit in the recording");

  const double frame_dt = 1.0 / cfg.frame_rate_hz;
  const UserStyle& st = spec.style;

  double range_far = 0.55 + st.range_offset_m;
  double excursion = 0.20 * st.speed;
  double sweep_deg = 30.0;
  double amplitude = 1.0;
  if (cls == static_cast<int>(GestureClass::Push)) {
    range_far = 0.60 + st.range_offset_m;
    excursion = 0.28 * st.speed;
  }
  if (spec.anomaly == AnomalyKind::Wrist) {
    excursion *= 0.3;
    amplitude *= 0.6;
  }
  if (spec.anomaly == AnomalyKind::Fast) {
    // an abrupt execution lunges past the intended reach at close to the
    // maximum observable speed (see the velocity override below) and rings
    // around the end point before settling
    excursion = range_far - 0.18;
  }
  excursion = std::min(excursion, range_far - 0.15);

  Rng rng(derive_seed(spec.seed, "trajectory"));
  // natural execution-to-execution variability: no two nominal gestures share
  // the exact reach depth, sweep width or tempo
  std::size_t dur_jit = dur;
  if (spec.anomaly == AnomalyKind::None) {
    excursion *= 0.9 + 0.2 * rand_uniform(rng);
    sweep_deg *= 0.9 + 0.2 * rand_uniform(rng);
    const int delta = static_cast<int>(rand_uniform(rng) * 5.0) - 2;  // -2..+2
    const int jit = std::max(1, static_cast<int>(dur) + delta);
    dur_jit = std::min<std::size_t>(static_cast<std::size_t>(jit),
                                    spec.total_frames - spec.start_frame - 1);
  }
  GroundTruth gt;
  gt.intended_class = cls;
  gt.anomaly = spec.anomaly;
  gt.gesture_start = spec.start_frame;
  gt.gesture_duration = dur_jit;
  gt.states.resize(spec.total_frames);
  gt.labels.assign(spec.total_frames, 0);

  // hovering posture is the same regardless of how the gesture itself is
  // executed; scaling it with the gesture amplitude would let the body
  // clutter residual win the peak detection during hover
  const double hover_amp = 0.45;
  const double v_limit = 0.9 * cfg.v_max_mps();
  // an abrupt execution rings for a few frames before the hand settles
  const std::size_t settle =
      spec.anomaly == AnomalyKind::Fast
          ? std::min<std::size_t>(4, spec.total_frames - spec.start_frame - dur_jit)
          : 0;
  for (std::size_t f = 0; f < spec.total_frames; ++f) {
    TargetState s;
    if (settle > 0 && f >= spec.start_frame + dur_jit &&
        f < spec.start_frame + dur_jit + settle) {
      const double k = static_cast<double>(f - spec.start_frame - dur_jit);
      const double decay = 1.0 - k / (static_cast<double>(settle) + 1.0);
      s.range_m =
          range_far - (std::fmod(k, 2.0) < 1.0 ? 1.0 : -0.8) * 0.18 * decay;
      s.radial_velocity_mps =
          (std::fmod(k, 2.0) < 1.0 ? 1.0 : -1.0) * 0.3 * v_limit * decay;
      s.azimuth_deg = st.azimuth_bias_deg;
      s.elevation_deg = st.elevation_bias_deg;
      s.amplitude = amplitude;
    } else if (spec.anomaly == AnomalyKind::Fast && f + 6 >= spec.start_frame &&
               f < spec.start_frame) {
      // wind-up: the hand draws back before the snap
      const double k = static_cast<double>(spec.start_frame - f);  // 6..1
      s.range_m = range_far + 0.05 * (7.0 - k);
      s.radial_velocity_mps = 0.15 * v_limit;
      s.azimuth_deg = st.azimuth_bias_deg;
      s.elevation_deg = st.elevation_bias_deg;
      s.amplitude = amplitude;
    } else if (f < spec.start_frame || f >= spec.start_frame + dur_jit) {
      // hand hovering near the start/end point; quasi-static drift keeps it
      // visible after clutter removal without registering as motion
      s.range_m = range_far;
      s.radial_velocity_mps =
          0.12 + 0.04 * std::sin(2.0 * M_PI * static_cast<double>(f) / 13.0);
      s.azimuth_deg = st.azimuth_bias_deg;
      s.elevation_deg = st.elevation_bias_deg;
      s.amplitude = hover_amp;
    } else {
      const double u = (static_cast<double>(f - spec.start_frame) + 0.5) /
                       static_cast<double>(dur_jit);  // progress in (0,1)
      // triangular range dip centered at u = 0.5
      const double tri = 1.0 - 2.0 * std::abs(u - 0.5);
      s.range_m = range_far - excursion * tri;
      // v = -dR/dt, positive while approaching (first half)
      const double slope = (u < 0.5 ? 1.0 : -1.0) * 2.0 * excursion /
                           (static_cast<double>(dur_jit) * frame_dt);
      s.radial_velocity_mps = std::clamp(slope, -v_limit, v_limit);
      if (spec.anomaly == AnomalyKind::Wrist) {
        // wrist-only execution: the rotating hand surface produces stronger
        // micro-Doppler than the translation of a nominal execution while the
        // reflection point barely moves, so the range excursion stays shallow
        const bool push = cls == static_cast<int>(GestureClass::Push);
        const double base_exc = (push ? 0.28 : 0.20) * st.speed;
        // a push flick rotates less (the hand is already aligned with the
        // motion axis), a swipe flick rotates more than the arm translation
        const double v_rot = (push ? 1.1 : 1.25) * 2.0 * base_exc /
                             (static_cast<double>(dur_jit) * frame_dt);
        s.radial_velocity_mps =
            (u < 0.5 ? 1.0 : -1.0) * std::min(v_rot, v_limit);
      }
      if (spec.anomaly == AnomalyKind::Fast) {
        // jerky snap: the hand overshoots and corrects well above the user's
        // nominal tempo while covering little distance
        s.radial_velocity_mps =
            (u < 0.5 ? 1.0 : -1.0) * std::min(1.8 * st.speed, v_limit);
      }
      const double sweep = sweep_deg * (1.0 - 2.0 * u);  // + to - across the gesture
      switch (static_cast<GestureClass>(cls)) {
        case GestureClass::SwipeLeft:
          s.azimuth_deg = sweep;
          break;
        case GestureClass::SwipeRight:
          s.azimuth_deg = -sweep;
          break;
        case GestureClass::SwipeUp:
          s.elevation_deg = -sweep;
          break;
        case GestureClass::SwipeDown:
          s.elevation_deg = sweep;
          break;
        case GestureClass::Push:
        default:
          break;
      }
      s.azimuth_deg += st.azimuth_bias_deg;
      s.elevation_deg += st.elevation_bias_deg;
      s.amplitude = amplitude;
      gt.labels[f] = cls;
    }
    // small per-frame execution jitter
    s.range_m += 0.005 * rand_normal(rng);
    s.azimuth_deg += 1.0 * rand_normal(rng);
    s.elevation_deg += 1.0 * rand_normal(rng);
    s.range_m = std::clamp(s.range_m, 0.05, cfg.max_range_m() - 0.05);
    s.azimuth_deg = std::clamp(s.azimuth_deg, -60.0, 60.0);
    s.elevation_deg = std::clamp(s.elevation_deg, -60.0, 60.0);
    gt.states[f] = s;
  }
  return gt;
}

// Writes the IF samples of one frame for a set of point targets.
// s[rx,c,n] = A cos(2 pi (b_frac n / Ns + f_d T c) + phi_rx) + noise with
// b_frac = 2 B R / c_light (range bin), f_d = 2 v / lambda.
inline void simulate_frame(RadarCube& cube, std::size_t frame,
                           const std::vector<TargetState>& targets,
                           const RadarConfig& cfg, double noise_sigma, Rng& rng) {
  const std::size_t ns = cfg.samples_per_chirp;
  for (std::size_t r = 0; r < cfg.rx_channels; ++r)
    for (std::size_t c = 0; c < cfg.chirps_per_frame; ++c)
      for (std::size_t n = 0; n < ns; ++n) cube.at(frame, r, c, n) = 0.0f;

  for (const TargetState& t : targets) {
    if (t.amplitude == 0.0) continue;
    const double bin_frac = 2.0 * cfg.bandwidth_hz() * t.range_m / dsp::kSpeedOfLight;
    if (bin_frac >= static_cast<double>(cfg.range_bins()))
      throw ConfigError("simulate_frame: range beyond max resolvable bin");
    const double fd = 2.0 * t.radial_velocity_mps / cfg.wavelength_m();
    const double dphi_chirp = 2.0 * M_PI * fd * cfg.chirp_prt_s;
    const double sin_az = std::sin(t.azimuth_deg * M_PI / 180.0);
    const double sin_el = std::sin(t.elevation_deg * M_PI / 180.0);
    const double geo = 2.0 * M_PI * cfg.antenna_spacing_m() / cfg.wavelength_m();
    for (std::size_t r = 0; r < cfg.rx_channels; ++r) {
      double phi_rx = 0.0;
      if (r == cfg.rx_azimuth) phi_rx = geo * sin_az;
      if (r == cfg.rx_elevation) phi_rx = geo * sin_el;
      for (std::size_t c = 0; c < cfg.chirps_per_frame; ++c) {
        const double chirp_phase = dphi_chirp * static_cast<double>(c) + phi_rx;
        for (std::size_t n = 0; n < ns; ++n) {
          const double phase =
              2.0 * M_PI * bin_frac * static_cast<double>(n) / static_cast<double>(ns) +
              chirp_phase;
          cube.at(frame, r, c, n) += static_cast<float>(t.amplitude * std::cos(phase));
        }
      }
    }
  }
  if (noise_sigma > 0.0)
    for (std::size_t r = 0; r < cfg.rx_channels; ++r)
      for (std::size_t c = 0; c < cfg.chirps_per_frame; ++c)
        for (std::size_t n = 0; n < ns; ++n)
          cube.at(frame, r, c, n) += static_cast<float>(noise_sigma * rand_normal(rng));
}

struct Recording {
  RadarCube cube;
  GroundTruth truth;
};

inline Recording synthesize_recording(const TrajectorySpec& spec, const RadarConfig& cfg) {
  GroundTruth gt = gesture_trajectory(spec, cfg);
  RadarCube cube(spec.total_frames, cfg.rx_channels, cfg.chirps_per_frame,
                 cfg.samples_per_chirp);
  Rng rng(derive_seed(spec.seed, "frames"));
  const double noise_sigma = std::pow(10.0, -spec.snr_db / 20.0);
  // the person's torso: strong, nearly static, farther than the hand;
  // the breathing displacement is about a centimetre
  TargetState body;
  body.range_m = 0.95;
  body.radial_velocity_mps = 0.02;
  body.amplitude = 2.0;
  for (std::size_t f = 0; f < spec.total_frames; ++f) {
    std::vector<TargetState> targets{gt.states[f]};
    if (spec.body_clutter) {
      body.range_m = 0.95 + 0.01 * std::sin(2.0 * M_PI * static_cast<double>(f) / 40.0);
      targets.push_back(body);
    }
    simulate_frame(cube, f, targets, cfg, noise_sigma, rng);
  }
  return {std::move(cube), std::move(gt)};
}

}  // namespace rhgr::sim
