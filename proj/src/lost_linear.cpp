#include "lost/lost_linear.hpp"

#include <algorithm>
#include <string>

#include "lost/kernels.hpp"

namespace lost {

std::string_view to_string(Activation a) { return a == Activation::silu ? "silu" : "identity"; }
std::string_view to_string(Combine c) {
  return c == Combine::output_avg ? "output_avg" : "weight_avg";
}
Activation parse_activation(std::string_view s) {
  if (s == "silu") return Activation::silu;
  if (s == "identity" || s == "none") return Activation::identity;
  throw ParameterError("unknown activation '" + std::string(s) + "' (valid: silu, identity)");
}
Combine parse_combine(std::string_view s) {
  if (s == "output_avg") return Combine::output_avg;
  if (s == "weight_avg") return Combine::weight_avg;
  throw ParameterError("unknown combine mode '" + std::string(s) +
                       "' (valid: output_avg, weight_avg)");
}

template <class T>
LostLinear<T>::LostLinear(Matrix<T> a, Matrix<T> b, Matrix<T> ws, ChannelSelection sel,
                          double gamma, Activation activation, Combine combine)
    : a_(std::move(a)),
      b_(std::move(b)),
      ws_(std::move(ws)),
      sel_(std::move(sel)),
      gamma_(gamma),
      activation_(activation),
      combine_(combine) {
  validate();
}

template <class T>
void LostLinear<T>::validate() const {
  const std::size_t m = a_.rows(), n = b_.rows(), r = a_.cols();
  if (b_.cols() != r) {
    throw ParameterError("LostLinear: A is " + shape_str(a_) + " but B is " + shape_str(b_));
  }
  if (r < 1 || r > std::min(m, n)) {
    throw ParameterError("LostLinear: rank " + std::to_string(r) + " invalid for " +
                         shape_str(m, n));
  }
  if (ws_.rows() != m || ws_.cols() != sel_.k()) {
    throw ParameterError("LostLinear: W_s is " + shape_str(ws_) + ", expected " +
                         shape_str(m, sel_.k()));
  }
  for (std::size_t j = 0; j < sel_.k(); ++j) {
    if (sel_.indices[j] >= n || (j > 0 && sel_.indices[j] <= sel_.indices[j - 1])) {
      throw ParameterError("LostLinear: channel indices must be ascending and < " +
                           std::to_string(n));
    }
  }
  if (!(gamma_ >= 0.0 && gamma_ <= 1.0)) {
    throw ParameterError("LostLinear: gamma must lie in [0, 1]");
  }
  if (sel_.k() == 0 && gamma_ != 1.0) {
    throw ConfigError("LostLinear: a layer without sparse channels requires gamma = 1");
  }
  if (combine_ == Combine::weight_avg && activation_ != Activation::identity) {
    throw ConfigError("LostLinear: weight_avg combine requires the identity activation");
  }
}

template <class T>
Matrix<T> LostLinear<T>::merge_dense() const {
  Matrix<T> w = matmul_nt(a_, b_);
  scale(w, static_cast<T>(gamma_));
  if (sel_.k() > 0) scatter_add_columns(w, ws_, sel_.indices, static_cast<T>(1.0 - gamma_));
  return w;
}

template <class T>
Matrix<T> LostLinear<T>::forward(const Matrix<T>& x, ForwardCache<T>* cache) const {
  if (x.cols() != in_dim()) {
    throw ParameterError("LostLinear::forward: input has " + std::to_string(x.cols()) +
                         " columns, layer expects " + std::to_string(in_dim()));
  }
  if (combine_ == Combine::weight_avg && activation_ != Activation::identity) {
    throw ConfigError("LostLinear: weight_avg combine requires the identity activation");
  }
  const T g = static_cast<T>(gamma_);
  const T g_sparse = static_cast<T>(1.0 - gamma_);
  Matrix<T> y;

  if (combine_ == Combine::weight_avg) {
    Matrix<T> merged = merge_dense();
    gemm(Op::N, Op::T, T{1}, x, merged, T{0}, y);
    if (cache) {
      cache->x = x;
      cache->merged = std::move(merged);
      cache->filled = true;
    }
    return y;
  }

  Matrix<T> h = matmul(x, b_);
  Matrix<T> a = activation_ == Activation::silu ? silu(h) : h;
  gemm(Op::N, Op::T, g, a, a_, T{0}, y);
  Matrix<T> x_i;
  if (sel_.k() > 0) {
    x_i = gather_columns(x, sel_.indices);
    gemm(Op::N, Op::T, g_sparse, x_i, ws_, T{1}, y);
  }
  if (cache) {
    cache->x = x;
    cache->h = std::move(h);
    cache->a = std::move(a);
    cache->x_i = std::move(x_i);
    cache->filled = true;
  }
  return y;
}

template <class T>
std::pair<LayerGrads<T>, Matrix<T>> LostLinear<T>::backward(const ForwardCache<T>& cache,
                                                            const Matrix<T>& dy) const {
  if (!cache.filled) {
    throw StateError("LostLinear::backward: no cache from a training-mode forward");
  }
  require_shape(dy, cache.x.rows(), out_dim(), "LostLinear::backward dy");
  const T g = static_cast<T>(gamma_);
  const T g_sparse = static_cast<T>(1.0 - gamma_);
  LayerGrads<T> grads;
  Matrix<T> dx;

  if (combine_ == Combine::weight_avg) {
    // Through the merged weight: dW = dy^T x, then split by the merge rule.
    const Matrix<T> dw = matmul_tn(dy, cache.x);
    gemm(Op::N, Op::N, g, dw, b_, T{0}, grads.dA);
    gemm(Op::T, Op::N, g, dw, a_, T{0}, grads.dB);
    grads.dWs = gather_columns(dw, sel_.indices);
    scale(grads.dWs, g_sparse);
    dx = matmul(dy, cache.merged);
    return {std::move(grads), std::move(dx)};
  }

  Matrix<T> gh = matmul(dy, a_);  // b x r
  if (activation_ == Activation::silu) gh = silu_backward(cache.h, gh);
  gemm(Op::T, Op::N, g, dy, cache.a, T{0}, grads.dA);
  gemm(Op::T, Op::N, g, cache.x, gh, T{0}, grads.dB);
  gemm(Op::N, Op::T, g, gh, b_, T{0}, dx);
  if (sel_.k() > 0) {
    gemm(Op::T, Op::N, g_sparse, dy, cache.x_i, T{0}, grads.dWs);
    const Matrix<T> dx_i = matmul(dy, ws_);
    scatter_add_columns(dx, dx_i, sel_.indices, g_sparse);
  } else {
    grads.dWs = Matrix<T>(out_dim(), 0);
  }
  return {std::move(grads), std::move(dx)};
}

template class LostLinear<float>;
template class LostLinear<double>;

}  // namespace lost
