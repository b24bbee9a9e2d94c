#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace rkm {

// Fatal dimension mismatch; message names the operands involved.
struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

using Vec = std::vector<double>;
using Rng = std::mt19937_64;

// Dense row-major matrix of 64-bit reals.
struct Matrix {
  int rows = 0, cols = 0;
  Vec v;

  Matrix() = default;
  Matrix(int r, int c) : rows(r), cols(c), v(static_cast<size_t>(r) * c, 0.0) {}

  double& at(int r, int c) { return v[static_cast<size_t>(r) * cols + c]; }
  double at(int r, int c) const { return v[static_cast<size_t>(r) * cols + c]; }

  static Matrix identity(int n) {
    Matrix m(n, n);
    for (int i = 0; i < n; ++i) m.at(i, i) = 1.0;
    return m;
  }
};

inline Vec matvec(const Matrix& w, std::span<const double> x) {
  if (w.cols != static_cast<int>(x.size()))
    throw ShapeError("matvec: matrix is " + std::to_string(w.rows) + "x" +
                     std::to_string(w.cols) + " but vector has length " +
                     std::to_string(x.size()));
  Vec y(w.rows, 0.0);
  for (int i = 0; i < w.rows; ++i) {
    const double* row = w.v.data() + static_cast<size_t>(i) * w.cols;
    double acc = 0.0;
    for (int j = 0; j < w.cols; ++j) acc += row[j] * x[j];
    y[i] = acc;
  }
  return y;
}

inline double uniform(Rng& rng, double lo, double hi) {
  std::uniform_real_distribution<double> dist(lo, hi);
  return dist(rng);
}

inline void fill_uniform(Rng& rng, std::span<double> out, double lo, double hi) {
  std::uniform_real_distribution<double> dist(lo, hi);
  for (double& x : out) x = dist(rng);
}

inline bool all_finite(std::span<const double> xs) {
  for (double x : xs)
    if (!std::isfinite(x)) return false;
  return true;
}

// Relative error |a-b| / max(1e-8, |a|, |b|).
inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({1e-8, std::abs(a), std::abs(b)});
}

}  // namespace rkm
