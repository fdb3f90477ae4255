#pragma once

#include <cstddef>
#include <string_view>
#include <utility>

#include "lost/factorize.hpp"
#include "lost/matrix.hpp"

namespace lost {

enum class Activation { silu, identity };
enum class Combine { output_avg, weight_avg };

std::string_view to_string(Activation a);
std::string_view to_string(Combine c);
Activation parse_activation(std::string_view s);
Combine parse_combine(std::string_view s);

/// Intermediates saved by a training-mode forward.
template <class T>
struct ForwardCache {
  Matrix<T> x;       // b x n
  Matrix<T> h;       // b x r, x B
  Matrix<T> a;       // b x r, act(h)
  Matrix<T> x_i;     // b x k, gathered input channels
  Matrix<T> merged;  // m x n, weight_avg only
  bool filled = false;
};

template <class T>
struct LayerGrads {
  Matrix<T> dA;   // m x r
  Matrix<T> dB;   // n x r
  Matrix<T> dWs;  // m x k
};

/// Linear map n -> m parameterized as
///   output_avg: y = gamma * act(x B) A^T + (1 - gamma) * x[:, I] W_s^T
///   weight_avg: y = x (gamma A B^T + (1 - gamma) expand(W_s))^T
/// B (n x r) is the input-side factor and A (m x r) the output-side factor.
/// gamma and the channel set I are fixed; only A, B, W_s are trained.
/// An empty channel set is a pure low-rank layer and requires gamma == 1.
template <class T>
class LostLinear {
 public:
  LostLinear() = default;
  LostLinear(Matrix<T> a, Matrix<T> b, Matrix<T> ws, ChannelSelection sel, double gamma,
             Activation activation, Combine combine);

  std::size_t in_dim() const noexcept { return b_.rows(); }
  std::size_t out_dim() const noexcept { return a_.rows(); }
  std::size_t rank() const noexcept { return a_.cols(); }
  std::size_t k() const noexcept { return sel_.k(); }
  double gamma() const noexcept { return gamma_; }
  Activation activation() const noexcept { return activation_; }
  Combine combine() const noexcept { return combine_; }
  const ChannelSelection& selection() const noexcept { return sel_; }

  const Matrix<T>& A() const noexcept { return a_; }
  const Matrix<T>& B() const noexcept { return b_; }
  const Matrix<T>& Ws() const noexcept { return ws_; }
  Matrix<T>& A() noexcept { return a_; }
  Matrix<T>& B() noexcept { return b_; }
  Matrix<T>& Ws() noexcept { return ws_; }

  /// Trainable scalars: r(m + n) + m k.
  std::size_t param_count() const noexcept { return a_.size() + b_.size() + ws_.size(); }

  /// x is b x n. Pass a cache to run in training mode.
  Matrix<T> forward(const Matrix<T>& x, ForwardCache<T>* cache = nullptr) const;

  /// Returns parameter gradients and dx (b x n).
  std::pair<LayerGrads<T>, Matrix<T>> backward(const ForwardCache<T>& cache,
                                               const Matrix<T>& dy) const;

  /// gamma A B^T + (1 - gamma) expand(W_s). This is the layer's exact function
  /// only under the identity activation.
  Matrix<T> merge_dense() const;

  /// Throws if shapes or settings are inconsistent.
  void validate() const;

  template <class U>
  LostLinear<U> cast() const {
    return LostLinear<U>(a_.template cast<U>(), b_.template cast<U>(), ws_.template cast<U>(), sel_,
                         gamma_, activation_, combine_);
  }

 private:
  Matrix<T> a_;
  Matrix<T> b_;
  Matrix<T> ws_;
  ChannelSelection sel_;
  double gamma_ = 1.0;
  Activation activation_ = Activation::silu;
  Combine combine_ = Combine::output_avg;
};

/// Everything `lost_init` needs besides the shape.
struct LostInitOptions {
  std::size_t rank = 1;
  double sparsity = 0.01;
  double gamma = 0.7;
  CompSource source = CompSource::rem;
  std::size_t rank_comp = 0;  // 0: default_rank_comp(m, n)
  Criterion criterion = Criterion::l2;
  LowRankInit lowrank_init = LowRankInit::svd;
  Activation activation = Activation::silu;
  Combine combine = Combine::output_avg;
};

/// Builds one LOST layer from a fresh Kaiming W drawn from `rng`:
/// SVD, factor truncation, complement, channel scoring and W_s = W[:, I].
/// Sub-streams "factors", "complement" and "criterion" are derived from `rng`'s
/// seed for the non-svd factor families and the random strategies.
LostLinear<double> lost_init(std::size_t m, std::size_t n, const LostInitOptions& opts, Rng& rng);

/// Everything `lost_init` computed, for inspection and tests.
struct LostInitTrace {
  MatrixD w;
  SvdResult svd;
  MatrixD complement;
  std::vector<double> scores;
  std::size_t rank_comp = 0;
  LostLinear<double> layer;
};
LostInitTrace lost_init_traced(std::size_t m, std::size_t n, const LostInitOptions& opts, Rng& rng);

/// Low-rank-only layer: factors from `alt_lowrank_init`, no sparse block, gamma = 1.
LostLinear<double> lowrank_only_init(std::size_t m, std::size_t n, std::size_t r,
                                     LowRankInit family, Activation activation, Rng& rng);

}  // namespace lost
