#include "lost/kernels.hpp"

namespace lost::reference {

template <class T>
void gemm(Op op_a, Op op_b, T alpha, const Matrix<T>& a, const Matrix<T>& b, T beta, Matrix<T>& c) {
  const std::size_t M = op_a == Op::N ? a.rows() : a.cols();
  const std::size_t K = op_a == Op::N ? a.cols() : a.rows();
  const std::size_t N = op_b == Op::N ? b.cols() : b.rows();
  if (K != (op_b == Op::N ? b.rows() : b.cols())) {
    throw ParameterError("reference::gemm: inner dimensions differ");
  }
  if (beta == T{0}) {
    c.resize(M, N);
  } else {
    require_shape(c, M, N, "reference::gemm output");
  }
  for (std::size_t i = 0; i < M; ++i) {
    for (std::size_t j = 0; j < N; ++j) {
      T acc{0};
      for (std::size_t p = 0; p < K; ++p) {
        const T av = op_a == Op::N ? a(i, p) : a(p, i);
        const T bv = op_b == Op::N ? b(p, j) : b(j, p);
        acc += av * bv;
      }
      c(i, j) = beta == T{0} ? alpha * acc : alpha * acc + beta * c(i, j);
    }
  }
}

template <class T>
Matrix<T> silu(const Matrix<T>& z) {
  Matrix<T> out(z.rows(), z.cols());
  for (std::size_t i = 0; i < z.size(); ++i) out.data()[i] = lost::silu(z.data()[i]);
  return out;
}

template void gemm<float>(Op, Op, float, const MatrixF&, const MatrixF&, float, MatrixF&);
template void gemm<double>(Op, Op, double, const MatrixD&, const MatrixD&, double, MatrixD&);
template MatrixF silu<float>(const MatrixF&);
template MatrixD silu<double>(const MatrixD&);

}  // namespace lost::reference
