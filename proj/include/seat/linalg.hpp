#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace seat {

using Vec = std::vector<double>;

// Dense row-major matrix. Sized for vectors of a few thousand doubles;
// nothing here allocates per element.
struct Mat {
  int rows = 0;
  int cols = 0;
  Vec a;

  Mat() = default;
  Mat(int r, int c) : rows(r), cols(c), a(static_cast<std::size_t>(r) * c, 0.0) {}

  double& operator()(int r, int c) { return a[static_cast<std::size_t>(r) * cols + c]; }
  double operator()(int r, int c) const { return a[static_cast<std::size_t>(r) * cols + c]; }

  std::span<double> row(int r) { return {a.data() + static_cast<std::size_t>(r) * cols, static_cast<std::size_t>(cols)}; }
  std::span<const double> row(int r) const {
    return {a.data() + static_cast<std::size_t>(r) * cols, static_cast<std::size_t>(cols)};
  }

  void fill(double v) { a.assign(a.size(), v); }
};

inline double dot(std::span<const double> x, std::span<const double> y) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
  return s;
}

inline double norm2(std::span<const double> x) { return std::sqrt(dot(x, x)); }

inline double norm_inf(std::span<const double> x) {
  double m = 0.0;
  for (double v : x) m = std::max(m, std::fabs(v));
  return m;
}

// y += a * x
inline void axpy(double a, std::span<const double> x, std::span<double> y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}

inline bool all_finite(std::span<const double> x) {
  for (double v : x) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

inline bool all_finite(const Mat& m) { return all_finite(std::span<const double>(m.a)); }

}  // namespace seat
