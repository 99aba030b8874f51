#pragma once

// Iterative radix-2 FFT for the power-of-two sizes used by the radar chain
// (64-point fast time, 32-point slow time).

#include <complex>
#include <vector>

#include "rhgr/core.hpp"

namespace rhgr {

using Cplx = std::complex<double>;
using CVec = std::vector<Cplx>;

inline bool is_power_of_two(std::size_t n) { return n > 0 && (n & (n - 1)) == 0; }

// In-place forward DFT, no normalization.
inline void fft(CVec& x) {
  const std::size_t n = x.size();
  if (!is_power_of_two(n)) throw ConfigError("fft: size must be a power of two");
  // bit reversal
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(x[i], x[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * M_PI / static_cast<double>(len);
    const Cplx wl(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      Cplx w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        Cplx u = x[i + k];
        Cplx v = x[i + k + len / 2] * w;
        x[i + k] = u + v;
        x[i + k + len / 2] = u - v;
        w *= wl;
      }
    }
  }
}

// Moves the zero-frequency bin to the center (numpy fftshift for even n).
inline CVec fftshift(const CVec& x) {
  const std::size_t n = x.size();
  CVec out(n);
  const std::size_t h = n / 2;
  for (std::size_t i = 0; i < n; ++i) out[i] = x[(i + h) % n];
  return out;
}

}  // namespace rhgr
