#pragma once

// Basic numeric containers, error types and RNG helpers shared by all modules.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace rhgr {

struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct BatchError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct LabelError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct TrainingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct VersionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct CorruptError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DependencyError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

using Vec = std::vector<double>;

// Dense row-major matrix of doubles.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  Vec data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::size_t size() const { return data.size(); }

  bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
};

// C += A * B, shapes (m x k)(k x n). Loop order chosen so the inner loop
// runs contiguously over both B and C.
inline void matmul_acc(const Matrix& a, const Matrix& b, Matrix& c) {
  if (a.cols != b.rows || c.rows != a.rows || c.cols != b.cols)
    throw ShapeError("matmul_acc: incompatible shapes");
  const std::size_t m = a.rows, k = a.cols, n = b.cols;
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = &a.data[i * k];
    double* crow = &c.data[i * n];
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      const double* brow = &b.data[p * n];
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  Matrix c(a.rows, b.cols, 0.0);
  matmul_acc(a, b, c);
  return c;
}

// C += A^T * B, shapes (k x m)(k x n) -> (m x n). Used by backprop.
inline void matmul_at_b_acc(const Matrix& a, const Matrix& b, Matrix& c) {
  if (a.rows != b.rows || c.rows != a.cols || c.cols != b.cols)
    throw ShapeError("matmul_at_b_acc: incompatible shapes");
  const std::size_t k = a.rows, m = a.cols, n = b.cols;
  for (std::size_t p = 0; p < k; ++p) {
    const double* arow = &a.data[p * m];
    const double* brow = &b.data[p * n];
    for (std::size_t i = 0; i < m; ++i) {
      const double av = arow[i];
      double* crow = &c.data[i * n];
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C += A * B^T, shapes (m x k)(n x k) -> (m x n). Used by backprop.
inline void matmul_a_bt_acc(const Matrix& a, const Matrix& b, Matrix& c) {
  if (a.cols != b.cols || c.rows != a.rows || c.cols != b.rows)
    throw ShapeError("matmul_a_bt_acc: incompatible shapes");
  const std::size_t m = a.rows, k = a.cols, n = b.rows;
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = &a.data[i * k];
    double* crow = &c.data[i * n];
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = &b.data[j * k];
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += arow[p] * brow[p];
      crow[j] += s;
    }
  }
}

inline bool all_finite(const Vec& v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

// One RNG type everywhere so seed-determinism holds across modules.
using Rng = std::mt19937_64;

// Derives a sub-seed from (base, stage, index) with FNV-1a so independent
// pipeline stages never share a stream.
inline std::uint64_t derive_seed(std::uint64_t base, const std::string& stage,
                                 std::uint64_t index = 0) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      h ^= (v >> (8 * i)) & 0xff;
      h *= 1099511628211ull;
    }
  };
  mix(base);
  for (char c : stage) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ull;
  }
  mix(index);
  return h;
}

inline double rand_uniform(Rng& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

inline double rand_normal(Rng& rng) {
  return std::normal_distribution<double>(0.0, 1.0)(rng);
}

}  // namespace rhgr
