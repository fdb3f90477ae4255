#include "lost/kernels.hpp"

#include <omp.h>

#include <algorithm>
#include <cstdlib>
#include <string>

namespace lost {
namespace {

// Parallel threshold in multiply-adds.
constexpr std::size_t kParallelWork = std::size_t{1} << 16;

template <class T>
constexpr int kNR = 64 / sizeof(T) * 2;  // two cache lines of C per row
constexpr int kMR = 4;

// acc[MR][NR] is kept in registers; K is walked in ascending order.
// Element (i, p) of A sits at a[i * si + p * sp].
template <class T, int MR, int NR>
inline void micro_tile(const T* a, std::size_t si, std::size_t sp, const T* b, std::size_t ldb,
                       T* c, std::size_t ldc, std::size_t K, T alpha, T beta) {
  T acc[MR][NR] = {};
  for (std::size_t p = 0; p < K; ++p) {
    const T* brow = b + p * ldb;
    for (int i = 0; i < MR; ++i) {
      const T av = a[i * si + p * sp];
#pragma omp simd
      for (int j = 0; j < NR; ++j) acc[i][j] += av * brow[j];
    }
  }
  for (int i = 0; i < MR; ++i) {
    T* crow = c + i * ldc;
    if (beta == T{0}) {
      for (int j = 0; j < NR; ++j) crow[j] = alpha * acc[i][j];
    } else {
      for (int j = 0; j < NR; ++j) crow[j] = alpha * acc[i][j] + beta * crow[j];
    }
  }
}

template <class T>
inline void edge_tile(const T* a, std::size_t si, std::size_t sp, const T* b, std::size_t ldb, T* c,
                      std::size_t ldc, std::size_t K, std::size_t mr, std::size_t nr, T alpha,
                      T beta) {
  for (std::size_t i = 0; i < mr; ++i) {
    for (std::size_t j = 0; j < nr; ++j) {
      T acc{0};
      for (std::size_t p = 0; p < K; ++p) acc += a[i * si + p * sp] * b[p * ldb + j];
      T& out = c[i * ldc + j];
      out = beta == T{0} ? alpha * acc : alpha * acc + beta * out;
    }
  }
}

// Rows [i0, i0 + MR) of C, sweeping column panels of width NR, NR/2, NR/4.
template <class T, int MR>
inline void row_block(const T* a, std::size_t si, std::size_t sp, const T* b, T* c, std::size_t N,
                      std::size_t K, T alpha, T beta) {
  constexpr int NR = kNR<T>;
  std::size_t j0 = 0;
  for (; j0 + NR <= N; j0 += NR) {
    micro_tile<T, MR, NR>(a, si, sp, b + j0, N, c + j0, N, K, alpha, beta);
  }
  if (j0 + NR / 2 <= N) {
    micro_tile<T, MR, NR / 2>(a, si, sp, b + j0, N, c + j0, N, K, alpha, beta);
    j0 += NR / 2;
  }
  if (j0 + NR / 4 <= N) {
    micro_tile<T, MR, NR / 4>(a, si, sp, b + j0, N, c + j0, N, K, alpha, beta);
    j0 += NR / 4;
  }
  if (j0 < N) edge_tile(a, si, sp, b + j0, N, c + j0, N, K, MR, N - j0, alpha, beta);
}

// C(MxN) = alpha * A(MxK) B(KxN) + beta C. B and C are row-major and
// contiguous; A is addressed through strides (si, sp).
template <class T>
void gemm_kernel(std::size_t M, std::size_t N, std::size_t K, T alpha, const T* a, std::size_t si,
                 std::size_t sp, const T* b, T beta, T* c) {
  const std::size_t row_blocks = (M + kMR - 1) / kMR;
  const bool parallel = M * N * K >= kParallelWork && row_blocks > 1;
#pragma omp parallel for schedule(static) if (parallel)
  for (std::size_t blk = 0; blk < row_blocks; ++blk) {
    const std::size_t i0 = blk * kMR;
    const std::size_t mr = std::min<std::size_t>(kMR, M - i0);
    if (mr == kMR) {
      row_block<T, kMR>(a + i0 * si, si, sp, b, c + i0 * N, N, K, alpha, beta);
    } else {
      for (std::size_t i = i0; i < M; ++i) {
        row_block<T, 1>(a + i * si, si, sp, b, c + i * N, N, K, alpha, beta);
      }
    }
  }
}

template <class T>
void transpose_into(const Matrix<T>& a, Matrix<T>& out) {
  out.resize(a.cols(), a.rows());
  const std::size_t R = a.rows(), C = a.cols();
  constexpr std::size_t B = 32;
  for (std::size_t i0 = 0; i0 < R; i0 += B) {
    for (std::size_t j0 = 0; j0 < C; j0 += B) {
      const std::size_t i1 = std::min(R, i0 + B), j1 = std::min(C, j0 + B);
      for (std::size_t i = i0; i < i1; ++i)
        for (std::size_t j = j0; j < j1; ++j) out(j, i) = a(i, j);
    }
  }
}

template <class T>
void check_gemm_shapes(Op op_a, Op op_b, const Matrix<T>& a, const Matrix<T>& b, T beta,
                       Matrix<T>& c, std::size_t& M, std::size_t& N, std::size_t& K) {
  M = op_a == Op::N ? a.rows() : a.cols();
  K = op_a == Op::N ? a.cols() : a.rows();
  const std::size_t kb = op_b == Op::N ? b.rows() : b.cols();
  N = op_b == Op::N ? b.cols() : b.rows();
  if (K != kb) {
    throw ParameterError("gemm: inner dimensions differ (" + shape_str(a) + " vs " + shape_str(b) +
                         ")");
  }
  if (beta == T{0}) {
    if (c.rows() != M || c.cols() != N) c.resize(M, N);
  } else {
    require_shape(c, M, N, "gemm output");
  }
}

}  // namespace

template <class T>
void gemm(Op op_a, Op op_b, T alpha, const Matrix<T>& a, const Matrix<T>& b, T beta, Matrix<T>& c) {
  std::size_t M, N, K;
  check_gemm_shapes(op_a, op_b, a, b, beta, c, M, N, K);
  if (M == 0 || N == 0) return;
  if (K == 0) {
    if (beta == T{0})
      c.set_zero();
    else
      scale(c, beta);
    return;
  }
  // op(A) is read in place; op(B) = B^T is materialized.
  const std::size_t si = op_a == Op::N ? K : 1;
  const std::size_t sp = op_a == Op::N ? 1 : M;
  if (op_b == Op::T) {
    Matrix<T> tb;
    transpose_into(b, tb);
    gemm_kernel(M, N, K, alpha, a.data(), si, sp, tb.data(), beta, c.data());
  } else {
    gemm_kernel(M, N, K, alpha, a.data(), si, sp, b.data(), beta, c.data());
  }
}

template <class T>
Matrix<T> matmul(const Matrix<T>& a, const Matrix<T>& b) {
  Matrix<T> c;
  gemm(Op::N, Op::N, T{1}, a, b, T{0}, c);
  return c;
}

template <class T>
Matrix<T> matmul_nt(const Matrix<T>& a, const Matrix<T>& b) {
  Matrix<T> c;
  gemm(Op::N, Op::T, T{1}, a, b, T{0}, c);
  return c;
}

template <class T>
Matrix<T> matmul_tn(const Matrix<T>& a, const Matrix<T>& b) {
  Matrix<T> c;
  gemm(Op::T, Op::N, T{1}, a, b, T{0}, c);
  return c;
}

template <class T>
Matrix<T> transpose(const Matrix<T>& a) {
  Matrix<T> out;
  transpose_into(a, out);
  return out;
}

template <class T>
Matrix<T> gather_columns(const Matrix<T>& x, std::span<const std::size_t> idx) {
  for (std::size_t j : idx) {
    if (j >= x.cols()) {
      throw ParameterError("gather_columns: index " + std::to_string(j) + " out of range for " +
                           shape_str(x));
    }
  }
  Matrix<T> out(x.rows(), idx.size());
  const std::size_t R = x.rows();
#pragma omp parallel for schedule(static) if (R * idx.size() >= kParallelWork)
  for (std::size_t i = 0; i < R; ++i) {
    const T* src = x.data() + i * x.cols();
    T* dst = out.data() + i * idx.size();
    for (std::size_t j = 0; j < idx.size(); ++j) dst[j] = src[idx[j]];
  }
  return out;
}

template <class T>
void scatter_add_columns(Matrix<T>& dst, const Matrix<T>& src, std::span<const std::size_t> idx,
                         T alpha) {
  if (src.rows() != dst.rows() || src.cols() != idx.size()) {
    throw ParameterError("scatter_add_columns: source " + shape_str(src) +
                         " does not match destination " + shape_str(dst));
  }
  for (std::size_t j : idx) {
    if (j >= dst.cols()) {
      throw ParameterError("scatter_add_columns: index " + std::to_string(j) +
                           " out of range for " + shape_str(dst));
    }
  }
  const std::size_t R = dst.rows();
#pragma omp parallel for schedule(static) if (R * idx.size() >= kParallelWork)
  for (std::size_t i = 0; i < R; ++i) {
    const T* s = src.data() + i * idx.size();
    T* d = dst.data() + i * dst.cols();
    for (std::size_t j = 0; j < idx.size(); ++j) d[idx[j]] += alpha * s[j];
  }
}

template <class T>
void axpy(T alpha, const Matrix<T>& src, Matrix<T>& dst) {
  if (!src.same_shape(dst)) {
    throw ParameterError("axpy: " + shape_str(src) + " vs " + shape_str(dst));
  }
  const std::size_t n = src.size();
  const T* s = src.data();
  T* d = dst.data();
#pragma omp parallel for simd schedule(static) if (n >= kParallelWork)
  for (std::size_t i = 0; i < n; ++i) d[i] += alpha * s[i];
}

template <class T>
void scale(Matrix<T>& m, T alpha) {
  for (T& v : m.flat()) v *= alpha;
}

template <class T>
Matrix<T> add(const Matrix<T>& a, const Matrix<T>& b) {
  Matrix<T> out = a;
  axpy(T{1}, b, out);
  return out;
}

template <class T>
Matrix<T> sub(const Matrix<T>& a, const Matrix<T>& b) {
  Matrix<T> out = a;
  axpy(T{-1}, b, out);
  return out;
}

template <class T>
Matrix<T> hadamard(const Matrix<T>& a, const Matrix<T>& b) {
  if (!a.same_shape(b)) {
    throw ParameterError("hadamard: " + shape_str(a) + " vs " + shape_str(b));
  }
  Matrix<T> out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] * b.data()[i];
  return out;
}

template <class T>
double frobenius_norm_sq(const Matrix<T>& a) {
  double s = 0.0;
  for (T v : a.flat()) s += static_cast<double>(v) * static_cast<double>(v);
  return s;
}

template <class T>
double relative_error(const Matrix<T>& a, const Matrix<T>& b) {
  if (!a.same_shape(b)) {
    throw ParameterError("relative_error: " + shape_str(a) + " vs " + shape_str(b));
  }
  double num = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a.data()[i]) - static_cast<double>(b.data()[i]);
    num += d * d;
  }
  const double den = frobenius_norm_sq(b);
  return den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
}

template <class T>
double max_abs_diff(const Matrix<T>& a, const Matrix<T>& b) {
  if (!a.same_shape(b)) {
    throw ParameterError("max_abs_diff: " + shape_str(a) + " vs " + shape_str(b));
  }
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    m = std::max(m, std::abs(static_cast<double>(a.data()[i]) - static_cast<double>(b.data()[i])));
  }
  return m;
}

template <class T>
Matrix<T> silu(const Matrix<T>& z) {
  Matrix<T> out(z.rows(), z.cols());
  const std::size_t n = z.size();
  const T* src = z.data();
  T* dst = out.data();
#pragma omp parallel for schedule(static) if (n >= kParallelWork)
  for (std::size_t i = 0; i < n; ++i) dst[i] = silu(src[i]);
  return out;
}

template <class T>
Matrix<T> silu_backward(const Matrix<T>& z, const Matrix<T>& dy) {
  if (!z.same_shape(dy)) {
    throw ParameterError("silu_backward: " + shape_str(z) + " vs " + shape_str(dy));
  }
  Matrix<T> out(z.rows(), z.cols());
  const std::size_t n = z.size();
#pragma omp parallel for schedule(static) if (n >= kParallelWork)
  for (std::size_t i = 0; i < n; ++i) out.data()[i] = dy.data()[i] * silu_grad(z.data()[i]);
  return out;
}

int num_threads() { return omp_get_max_threads(); }

void set_num_threads(int n) { omp_set_num_threads(std::max(1, n)); }

void apply_thread_env() {
  if (const char* env = std::getenv("LOST_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) set_num_threads(std::min(n, omp_get_num_procs()));
  }
}

#define LOST_INSTANTIATE(T)                                                                        \
  template void gemm<T>(Op, Op, T, const Matrix<T>&, const Matrix<T>&, T, Matrix<T>&);             \
  template Matrix<T> matmul<T>(const Matrix<T>&, const Matrix<T>&);                                \
  template Matrix<T> matmul_nt<T>(const Matrix<T>&, const Matrix<T>&);                             \
  template Matrix<T> matmul_tn<T>(const Matrix<T>&, const Matrix<T>&);                             \
  template Matrix<T> transpose<T>(const Matrix<T>&);                                               \
  template Matrix<T> gather_columns<T>(const Matrix<T>&, std::span<const std::size_t>);            \
  template void scatter_add_columns<T>(Matrix<T>&, const Matrix<T>&, std::span<const std::size_t>, \
                                       T);                                                         \
  template void axpy<T>(T, const Matrix<T>&, Matrix<T>&);                                          \
  template void scale<T>(Matrix<T>&, T);                                                           \
  template Matrix<T> add<T>(const Matrix<T>&, const Matrix<T>&);                                   \
  template Matrix<T> sub<T>(const Matrix<T>&, const Matrix<T>&);                                   \
  template Matrix<T> hadamard<T>(const Matrix<T>&, const Matrix<T>&);                              \
  template double frobenius_norm_sq<T>(const Matrix<T>&);                                          \
  template double relative_error<T>(const Matrix<T>&, const Matrix<T>&);                           \
  template double max_abs_diff<T>(const Matrix<T>&, const Matrix<T>&);                             \
  template Matrix<T> silu<T>(const Matrix<T>&);                                                    \
  template Matrix<T> silu_backward<T>(const Matrix<T>&, const Matrix<T>&);

LOST_INSTANTIATE(float)
LOST_INSTANTIATE(double)
#undef LOST_INSTANTIATE

}  // namespace lost
