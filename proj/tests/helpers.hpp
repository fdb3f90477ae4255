#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>

#include "lost/matrix.hpp"
#include "lost/rng.hpp"

namespace lost::test {

inline MatrixD gaussian(std::size_t m, std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  MatrixD w(m, n);
  for (double& v : w.flat()) v = rng.normal();
  return w;
}

// Plain loops, independent of the library kernels.
inline MatrixD naive_mul(const MatrixD& a, const MatrixD& b) {
  MatrixD c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      long double s = 0;
      for (std::size_t p = 0; p < a.cols(); ++p) s += static_cast<long double>(a(i, p)) * b(p, j);
      c(i, j) = static_cast<double>(s);
    }
  return c;
}

inline MatrixD naive_t(const MatrixD& a) {
  MatrixD t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

inline double fro(const MatrixD& a) {
  double s = 0;
  for (double v : a.flat()) s += v * v;
  return std::sqrt(s);
}

inline double rel_diff(const MatrixD& a, const MatrixD& b) {
  double num = 0, den = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a.flat()[i] - b.flat()[i]) * (a.flat()[i] - b.flat()[i]);
    den += b.flat()[i] * b.flat()[i];
  }
  return den == 0 ? std::sqrt(num) : std::sqrt(num / den);
}

inline double max_abs(const MatrixD& a, const MatrixD& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.flat()[i] - b.flat()[i]));
  return m;
}

}  // namespace lost::test
