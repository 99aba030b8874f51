#pragma once

// Radar configuration and the derived resolution constants.

#include <cstddef>

#include "rhgr/core.hpp"

namespace rhgr::dsp {

// c = 3e8 keeps range_res at exactly 37.5 mm for the 4 GHz default bandwidth.
inline constexpr double kSpeedOfLight = 3.0e8;

struct RadarConfig {
  double f_start_hz = 58.5e9;
  double f_end_hz = 62.5e9;
  double chirp_prt_s = 300e-6;
  std::size_t chirps_per_frame = 32;
  std::size_t samples_per_chirp = 64;
  std::size_t rx_channels = 3;
  double frame_rate_hz = 33.0;
  // L-shaped array: rx0 reference, rx1 horizontal baseline, rx2 vertical.
  std::size_t rx_ref = 0;
  std::size_t rx_azimuth = 1;
  std::size_t rx_elevation = 2;
  // antenna spacing as a fraction of wavelength (0.5 = half wavelength)
  double antenna_spacing_wavelengths = 0.5;

  double bandwidth_hz() const { return f_end_hz - f_start_hz; }
  double f_center_hz() const { return 0.5 * (f_start_hz + f_end_hz); }
  double wavelength_m() const { return kSpeedOfLight / f_center_hz(); }
  double range_res_m() const { return kSpeedOfLight / (2.0 * bandwidth_hz()); }
  std::size_t range_bins() const { return samples_per_chirp / 2; }
  double max_range_m() const { return static_cast<double>(range_bins()) * range_res_m(); }
  double v_res_mps() const {
    return wavelength_m() /
           (2.0 * static_cast<double>(chirps_per_frame) * chirp_prt_s);
  }
  double v_max_mps() const { return wavelength_m() / (4.0 * chirp_prt_s); }
  double antenna_spacing_m() const { return antenna_spacing_wavelengths * wavelength_m(); }

  void validate() const {
    if (f_end_hz <= f_start_hz) throw ConfigError("RadarConfig: f_end must exceed f_start");
    if (!is_power_of_two_size(samples_per_chirp) || !is_power_of_two_size(chirps_per_frame))
      throw ConfigError("RadarConfig: chirps and samples must be powers of two");
    if (rx_channels < 3) throw ConfigError("RadarConfig: need 3 rx channels");
  }

 private:
  static bool is_power_of_two_size(std::size_t n) { return n > 0 && (n & (n - 1)) == 0; }
};

// Raw ADC recording, frames x rx x chirps x samples.
struct RadarCube {
  std::size_t frames = 0, rx = 0, chirps = 0, samples = 0;
  std::vector<float> data;

  RadarCube() = default;
  RadarCube(std::size_t f, std::size_t r, std::size_t c, std::size_t s)
      : frames(f), rx(r), chirps(c), samples(s), data(f * r * c * s, 0.0f) {}

  float& at(std::size_t f, std::size_t r, std::size_t c, std::size_t s) {
    return data[((f * rx + r) * chirps + c) * samples + s];
  }
  float at(std::size_t f, std::size_t r, std::size_t c, std::size_t s) const {
    return data[((f * rx + r) * chirps + c) * samples + s];
  }
};

}  // namespace rhgr::dsp
