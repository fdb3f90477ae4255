#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "lost/matrix.hpp"

namespace lost {

enum class Op { N, T };

/// C = alpha * op(A) * op(B) + beta * C, OpenMP over row blocks of C.
/// Each entry of C is reduced over k in ascending order by one thread, so the
/// result is independent of the thread count. C is read only when beta != 0.
template <class T>
void gemm(Op op_a, Op op_b, T alpha, const Matrix<T>& a, const Matrix<T>& b, T beta, Matrix<T>& c);

template <class T>
Matrix<T> matmul(const Matrix<T>& a, const Matrix<T>& b);  // a * b
template <class T>
Matrix<T> matmul_nt(const Matrix<T>& a, const Matrix<T>& b);  // a * b^T
template <class T>
Matrix<T> matmul_tn(const Matrix<T>& a, const Matrix<T>& b);  // a^T * b

template <class T>
Matrix<T> transpose(const Matrix<T>& a);

/// out[:, j] = x[:, idx[j]]
template <class T>
Matrix<T> gather_columns(const Matrix<T>& x, std::span<const std::size_t> idx);

/// dst[:, idx[j]] += alpha * src[:, j]
template <class T>
void scatter_add_columns(Matrix<T>& dst, const Matrix<T>& src, std::span<const std::size_t> idx,
                         T alpha = T{1});

/// dst += alpha * src
template <class T>
void axpy(T alpha, const Matrix<T>& src, Matrix<T>& dst);

template <class T>
void scale(Matrix<T>& m, T alpha);

template <class T>
Matrix<T> add(const Matrix<T>& a, const Matrix<T>& b);
template <class T>
Matrix<T> sub(const Matrix<T>& a, const Matrix<T>& b);
template <class T>
Matrix<T> hadamard(const Matrix<T>& a, const Matrix<T>& b);

template <class T>
double frobenius_norm_sq(const Matrix<T>& a);
template <class T>
double frobenius_norm(const Matrix<T>& a) {
  return std::sqrt(frobenius_norm_sq(a));
}
/// ||a - b||_F / ||b||_F (absolute error when b is zero).
template <class T>
double relative_error(const Matrix<T>& a, const Matrix<T>& b);
template <class T>
double max_abs_diff(const Matrix<T>& a, const Matrix<T>& b);

// SiLU and its derivative. Written through exp(-|z|) so neither overflows.
template <class T>
inline T sigmoid(T z) noexcept {
  if (z >= T{0}) return T{1} / (T{1} + std::exp(-z));
  const T e = std::exp(z);
  return e / (T{1} + e);
}
template <class T>
inline T silu(T z) noexcept {
  return z * sigmoid(z);
}
template <class T>
inline T silu_grad(T z) noexcept {
  const T s = sigmoid(z);
  return s * (T{1} + z * (T{1} - s));
}

template <class T>
Matrix<T> silu(const Matrix<T>& z);
/// dz = dy * silu'(z)
template <class T>
Matrix<T> silu_backward(const Matrix<T>& z, const Matrix<T>& dy);

/// Thread control. LOST_THREADS caps the pool at startup; 1 forces serial.
int num_threads();
void set_num_threads(int n);
void apply_thread_env();

namespace reference {

/// Serial triple loop, same contract as lost::gemm. Kept as the test and
/// benchmark baseline.
template <class T>
void gemm(Op op_a, Op op_b, T alpha, const Matrix<T>& a, const Matrix<T>& b, T beta, Matrix<T>& c);

template <class T>
Matrix<T> silu(const Matrix<T>& z);

}  // namespace reference

}  // namespace lost
