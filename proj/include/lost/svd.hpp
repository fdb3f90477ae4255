#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "lost/matrix.hpp"

namespace lost {

/// Thin SVD W = U diag(S) V^T with p = min(m, n).
/// U is m x p, V is n x p, S is non-increasing. The first nonzero entry of each
/// U column is non-negative (the paired V column is flipped to match).
struct SvdResult {
  MatrixD U;
  std::vector<double> S;
  MatrixD V;

  std::size_t rank_capacity() const noexcept { return S.size(); }
};

/// One-sided (Hestenes) Jacobi. Deterministic: cyclic pair order, serial.
/// Throws ConvergenceError naming the shape if `max_sweeps` is exhausted.
SvdResult svd(const MatrixD& w, int max_sweeps = 100);

/// Sum of S_i u_i v_i^T over the given triplet indices.
MatrixD sum_triplets(const SvdResult& svd, std::span<const std::size_t> which);

/// Sum over triplets [first, last).
MatrixD sum_triplets(const SvdResult& svd, std::size_t first, std::size_t last);

}  // namespace lost
