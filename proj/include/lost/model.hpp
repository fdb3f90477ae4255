#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "lost/lost_linear.hpp"
#include "lost/matrix.hpp"
#include "lost/model_config.hpp"

namespace lost {

/// y = x W^T with W m x n, no bias.
template <class T>
struct DenseLinear {
  Matrix<T> W;
};

/// One of the seven block linears; dense or LOST depending on the config.
template <class T>
using AnyLinear = std::variant<DenseLinear<T>, LostLinear<T>>;

template <class T>
struct LinearCache {
  ForwardCache<T> lost;  // LOST layers
  Matrix<T> x;           // dense layers
};

/// Gradient of one linear. Dense layers fill W, LOST layers fill A/B/Ws.
template <class T>
struct LinearGrad {
  Matrix<T> W;
  LayerGrads<T> lost;
};

template <class T>
struct Block {
  Matrix<T> norm1;  // 1 x d gains
  Matrix<T> norm2;
  std::array<AnyLinear<T>, 7> linears;  // indexed by LinearRole
};

template <class T>
struct RmsCache {
  Matrix<T> x;
  std::vector<T> inv_rms;
};

template <class T>
struct BlockCache {
  RmsCache<T> norm1, norm2;
  std::array<LinearCache<T>, 7> lin;
  Matrix<T> q, k, v;
  Matrix<T> probs;  // (batch * heads * T) x T, causal rows
  Matrix<T> gate, up;
};

template <class T>
struct ModelCache {
  std::vector<std::uint32_t> tokens;
  std::size_t batch = 0;
  std::size_t seq = 0;
  std::vector<BlockCache<T>> blocks;
  RmsCache<T> final_norm;
  Matrix<T> final_out;  // normalized hidden state fed to the head
  bool filled = false;
};

template <class T>
struct BlockGrads {
  Matrix<T> norm1, norm2;
  std::array<LinearGrad<T>, 7> lin;
};

template <class T>
struct ModelGrads {
  Matrix<T> embed, pos;
  std::vector<BlockGrads<T>> blocks;
  Matrix<T> final_norm, head;
};

/// A trainable tensor with its gradient. `decay` is false for norm gains.
template <class T>
struct ParamSlot {
  std::string name;
  Matrix<T>* value = nullptr;
  Matrix<T>* grad = nullptr;
  bool decay = true;
};

/// Read-only view used by checkpoints and counters.
template <class T>
struct TensorView {
  std::string name;
  const Matrix<T>* value = nullptr;
};

/// Pre-norm decoder: x = embed[tok] + pos[t]; per block
///   x += O(attn(Q u, K u, V u)), u = rmsnorm(x)
///   x += down(silu(gate u) * up u), u = rmsnorm(x)
/// logits = rmsnorm(x) head. Embedding and head are dense and untied.
template <class T>
class Model {
 public:
  Model() = default;

  /// Deterministic in cfg.seed. Each linear draws from a stream keyed by its
  /// name, so layers do not perturb each other.
  static Model build(const ModelConfig& cfg);

  const ModelConfig& config() const noexcept { return cfg_; }

  /// tokens is batch x seq, row-major. Returns (batch * seq) x vocab logits.
  Matrix<T> forward(std::span<const std::uint32_t> tokens, std::size_t batch, std::size_t seq,
                    ModelCache<T>* cache = nullptr) const;

  ModelGrads<T> backward(const ModelCache<T>& cache, const Matrix<T>& dlogits) const;

  /// Trainable tensors paired with their gradients, in checkpoint order.
  std::vector<ParamSlot<T>> params(ModelGrads<T>& grads);
  /// Same order, grad pointers null.
  std::vector<ParamSlot<T>> params();
  std::vector<TensorView<T>> tensors() const;

  /// Channel index lists of every LOST linear, named "block{i}.{role}.idx".
  std::vector<std::pair<std::string, const ChannelSelection*>> selections() const;

  std::size_t param_count() const;
  std::size_t index_count() const;

  /// Every LOST linear replaced by its merged dense weight.
  Model dense_equivalent() const;

  Matrix<T>& embed() noexcept { return embed_; }
  Matrix<T>& pos() noexcept { return pos_; }
  Matrix<T>& head() noexcept { return head_; }
  Matrix<T>& final_norm() noexcept { return final_norm_; }
  std::vector<Block<T>>& blocks() noexcept { return blocks_; }
  const std::vector<Block<T>>& blocks() const noexcept { return blocks_; }
  const Matrix<T>& embed() const noexcept { return embed_; }
  const Matrix<T>& pos() const noexcept { return pos_; }
  const Matrix<T>& head() const noexcept { return head_; }
  const Matrix<T>& final_norm() const noexcept { return final_norm_; }

  template <class U>
  Model<U> cast() const;

 private:
  template <class U>
  friend class Model;

  ModelConfig cfg_;
  Matrix<T> embed_;  // vocab x d
  Matrix<T> pos_;    // seq_len x d
  std::vector<Block<T>> blocks_;
  Matrix<T> final_norm_;  // 1 x d
  Matrix<T> head_;        // d x vocab
};

extern template class Model<float>;
extern template class Model<double>;

/// Zero-filled gradients shaped like the model's parameters.
template <class T>
ModelGrads<T> zero_grads(const Model<T>& model);

inline constexpr double kRmsEps = 1e-6;

/// y = x / sqrt(mean(x^2) + eps) * gain, row-wise.
template <class T>
Matrix<T> rmsnorm(const Matrix<T>& x, const Matrix<T>& gain, RmsCache<T>* cache = nullptr);

/// Returns dx and accumulates into dgain.
template <class T>
Matrix<T> rmsnorm_backward(const RmsCache<T>& cache, const Matrix<T>& gain, const Matrix<T>& dy,
                           Matrix<T>& dgain);

/// Mean next-token negative log-likelihood over all rows; fills dlogits with
/// d(mean nll)/d logits when given.
template <class T>
double cross_entropy(const Matrix<T>& logits, std::span<const std::uint32_t> targets,
                     Matrix<T>* dlogits = nullptr);

/// Causal multi-head attention over rows laid out as batch-major (b * seq) x d.
/// probs receives (batch * heads * seq) x seq softmax rows.
template <class T>
Matrix<T> causal_attention(const Matrix<T>& q, const Matrix<T>& k, const Matrix<T>& v,
                           std::size_t batch, std::size_t seq, std::size_t heads, Matrix<T>& probs);

template <class T>
void causal_attention_backward(const Matrix<T>& q, const Matrix<T>& k, const Matrix<T>& v,
                               const Matrix<T>& probs, const Matrix<T>& dout, std::size_t batch,
                               std::size_t seq, std::size_t heads, Matrix<T>& dq, Matrix<T>& dk,
                               Matrix<T>& dv);

namespace reference {
/// Serial attention over the full T x T score matrix with an explicit mask.
template <class T>
Matrix<T> causal_attention(const Matrix<T>& q, const Matrix<T>& k, const Matrix<T>& v,
                           std::size_t batch, std::size_t seq, std::size_t heads);
}  // namespace reference

}  // namespace lost
