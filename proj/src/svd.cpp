#include "lost/svd.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "lost/kernels.hpp"

namespace lost {
namespace {

double dot(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

void rotate(double* x, double* y, std::size_t n, double c, double s) {
  for (std::size_t i = 0; i < n; ++i) {
    const double xi = x[i], yi = y[i];
    x[i] = c * xi - s * yi;
    y[i] = s * xi + c * yi;
  }
}

// Orthogonalizes the rows of g (p x len) in place; rows of v (p x p) accumulate
// the same rotations. Returns false if max_sweeps was reached.
bool jacobi_rows(MatrixD& g, MatrixD& v, int max_sweeps) {
  constexpr double kTol = 1e-15;
  const std::size_t p = g.rows(), len = g.cols();
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    bool rotated = false;
    for (std::size_t i = 0; i + 1 < p; ++i) {
      for (std::size_t j = i + 1; j < p; ++j) {
        double* gi = g.data() + i * len;
        double* gj = g.data() + j * len;
        const double alpha = dot(gi, gi, len);
        const double beta = dot(gj, gj, len);
        const double gamma = dot(gi, gj, len);
        if (alpha == 0.0 || beta == 0.0) continue;
        if (std::abs(gamma) <= kTol * std::sqrt(alpha * beta)) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::hypot(1.0, zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        rotate(gi, gj, len, c, s);
        rotate(v.data() + i * p, v.data() + j * p, p, c, s);
      }
    }
    if (!rotated) return true;
  }
  return false;
}

// Fills rows of `basis` (p x len) flagged in `missing` with unit vectors
// orthogonal to every other row, drawing candidates from the standard basis.
void complete_orthonormal(MatrixD& basis, const std::vector<bool>& missing) {
  const std::size_t p = basis.rows(), len = basis.cols();
  std::size_t next_axis = 0;
  for (std::size_t r = 0; r < p; ++r) {
    if (!missing[r]) continue;
    for (;; ++next_axis) {
      if (next_axis >= len) throw ConvergenceError("svd: orthonormal completion failed");
      std::vector<double> cand(len, 0.0);
      cand[next_axis] = 1.0;
      // Two Gram-Schmidt passes.
      for (int pass = 0; pass < 2; ++pass) {
        for (std::size_t q = 0; q < p; ++q) {
          if (q == r || (missing[q] && q > r)) continue;
          const double* bq = basis.data() + q * len;
          const double proj = dot(cand.data(), bq, len);
          for (std::size_t k = 0; k < len; ++k) cand[k] -= proj * bq[k];
        }
      }
      const double nrm = std::sqrt(dot(cand.data(), cand.data(), len));
      if (nrm > 1e-6) {
        for (std::size_t k = 0; k < len; ++k) basis(r, k) = cand[k] / nrm;
        ++next_axis;
        break;
      }
    }
  }
}

}  // namespace

SvdResult svd(const MatrixD& w, int max_sweeps) {
  if (w.empty()) throw ParameterError("svd: empty matrix");
  if (!all_finite(w)) throw ParameterError("svd: non-finite entry in " + shape_str(w));

  const bool tall = w.rows() >= w.cols();
  // Work on the p rows of g, each a column of W (tall) or of W^T (wide).
  MatrixD g = tall ? transpose(w) : w;
  const std::size_t p = g.rows(), len = g.cols();
  MatrixD v = MatrixD::identity(p);

  if (!jacobi_rows(g, v, max_sweeps)) {
    throw ConvergenceError("svd: no convergence after " + std::to_string(max_sweeps) +
                           " sweeps for " + shape_str(w));
  }

  std::vector<double> sigma(p);
  for (std::size_t i = 0; i < p; ++i) {
    sigma[i] = std::sqrt(dot(g.data() + i * len, g.data() + i * len, len));
  }
  std::vector<std::size_t> order(p);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return sigma[a] > sigma[b]; });

  const double smax = sigma[order[0]];
  const double tiny = smax * static_cast<double>(std::max(w.rows(), w.cols())) * 1e-15;

  // Rows of `left` are the singular vectors living in the len-dim space.
  MatrixD left(p, len), right(p, p);
  std::vector<double> s_sorted(p);
  std::vector<bool> missing(p, false);
  for (std::size_t k = 0; k < p; ++k) {
    const std::size_t src = order[k];
    s_sorted[k] = sigma[src];
    for (std::size_t t = 0; t < p; ++t) right(k, t) = v(src, t);
    if (sigma[src] <= tiny || sigma[src] == 0.0) {
      missing[k] = true;
    } else {
      for (std::size_t t = 0; t < len; ++t) left(k, t) = g(src, t) / sigma[src];
    }
  }
  if (std::find(missing.begin(), missing.end(), true) != missing.end()) {
    complete_orthonormal(left, missing);
  }

  SvdResult out;
  out.S = std::move(s_sorted);
  // For tall W: left holds U^T (p x m), right holds V^T (p x n). Wide: swapped.
  out.U = tall ? transpose(left) : transpose(right);
  out.V = tall ? transpose(right) : transpose(left);

  for (std::size_t k = 0; k < p; ++k) {
    for (std::size_t i = 0; i < out.U.rows(); ++i) {
      const double u = out.U(i, k);
      if (u == 0.0) continue;
      if (u < 0.0) {
        for (std::size_t t = 0; t < out.U.rows(); ++t) out.U(t, k) = -out.U(t, k);
        for (std::size_t t = 0; t < out.V.rows(); ++t) out.V(t, k) = -out.V(t, k);
      }
      break;
    }
  }
  return out;
}

MatrixD sum_triplets(const SvdResult& svd, std::span<const std::size_t> which) {
  const std::size_t m = svd.U.rows(), n = svd.V.rows();
  MatrixD out(m, n);
  for (std::size_t k : which) {
    if (k >= svd.S.size()) {
      throw ParameterError("sum_triplets: triplet " + std::to_string(k) + " of " +
                           std::to_string(svd.S.size()));
    }
    const double s = svd.S[k];
    for (std::size_t i = 0; i < m; ++i) {
      const double us = s * svd.U(i, k);
      double* row = out.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += us * svd.V(j, k);
    }
  }
  return out;
}

MatrixD sum_triplets(const SvdResult& svd, std::size_t first, std::size_t last) {
  std::vector<std::size_t> which;
  for (std::size_t k = first; k < last; ++k) which.push_back(k);
  return sum_triplets(svd, which);
}

}  // namespace lost
