#include "lost/model.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <type_traits>

#include "lost/init.hpp"
#include "lost/kernels.hpp"
#include "lost/rng.hpp"

namespace lost {

// ---------------------------------------------------------------------------
// ModelConfig

std::string_view to_string(Parameterization p) {
  switch (p) {
    case Parameterization::dense:
      return "dense";
    case Parameterization::lowrank_only:
      return "lowrank_only";
    case Parameterization::lost:
      return "lost";
  }
  return "?";
}

Parameterization parse_parameterization(std::string_view s) {
  if (s == "dense") return Parameterization::dense;
  if (s == "lowrank_only") return Parameterization::lowrank_only;
  if (s == "lost") return Parameterization::lost;
  throw ParameterError("unknown parameterization '" + std::string(s) +
                       "' (valid: dense, lowrank_only, lost)");
}

std::string_view to_string(LinearRole role) {
  switch (role) {
    case LinearRole::attn_q:
      return "attn_q";
    case LinearRole::attn_k:
      return "attn_k";
    case LinearRole::attn_v:
      return "attn_v";
    case LinearRole::attn_o:
      return "attn_o";
    case LinearRole::ffn_gate:
      return "ffn_gate";
    case LinearRole::ffn_up:
      return "ffn_up";
    case LinearRole::ffn_down:
      return "ffn_down";
  }
  return "?";
}

LinearShape ModelConfig::shape(LinearRole role) const {
  switch (role) {
    case LinearRole::ffn_gate:
    case LinearRole::ffn_up:
      return {d_ff, d_model};
    case LinearRole::ffn_down:
      return {d_model, d_ff};
    default:
      return {d_model, d_model};
  }
}

void ModelConfig::validate(bool for_build) const {
  auto fail = [](const std::string& msg) { throw ConfigError("model config: " + msg); };
  if (n_layers < 1 || d_model < 1 || d_ff < 1 || vocab_size < 1 || seq_len < 1) {
    fail("n_layers, d_model, d_ff, vocab_size and seq_len must be positive");
  }
  if (n_heads < 1) fail("n_heads must be positive");
  if (for_build && d_model % n_heads != 0) {
    fail("d_model " + std::to_string(d_model) + " is not divisible by n_heads " +
         std::to_string(n_heads));
  }
  if (parameterization == Parameterization::dense) return;
  const std::size_t max_rank = std::min(d_model, d_ff);
  if (rank < 1 || rank > max_rank) {
    fail("rank " + std::to_string(rank) + " must lie in [1, " + std::to_string(max_rank) + "]");
  }
  if (parameterization == Parameterization::lost) {
    if (!(sparsity > 0.0 && sparsity <= 1.0)) fail("sparsity must lie in (0, 1]");
    if (!(gamma >= 0.0 && gamma <= 1.0)) fail("gamma must lie in [0, 1]");
    if (comp_source != CompSource::ini && rank_comp > max_rank) {
      fail("rank_comp " + std::to_string(rank_comp) + " exceeds " + std::to_string(max_rank));
    }
  }
  if (combine == Combine::weight_avg && activation != Activation::identity) {
    fail("weight_avg combine requires activation = identity");
  }
}

LostInitOptions ModelConfig::lost_options() const {
  LostInitOptions o;
  o.rank = rank;
  o.sparsity = sparsity;
  o.gamma = gamma;
  o.source = comp_source;
  o.rank_comp = rank_comp;
  o.criterion = criterion;
  o.lowrank_init = lowrank_init;
  o.activation = activation;
  o.combine = combine;
  return o;
}

ModelConfig ModelConfig::desk() { return ModelConfig{}; }

ModelConfig ModelConfig::preset(std::string_view name) {
  ModelConfig c;
  c.vocab_size = 32000;
  c.seq_len = 256;
  c.parameterization = Parameterization::dense;
  c.sparsity = 0.01;
  c.gamma = 0.7;
  c.rank_comp = 256;
  if (name == "60m") {
    c.d_model = 512, c.d_ff = 1376, c.n_heads = 8, c.n_layers = 8, c.rank = 128;
  } else if (name == "130m") {
    c.d_model = 768, c.d_ff = 2048, c.n_heads = 12, c.n_layers = 12, c.rank = 256;
  } else if (name == "350m") {
    c.d_model = 1024, c.d_ff = 2736, c.n_heads = 16, c.n_layers = 24, c.rank = 256;
  } else if (name == "1b") {
    c.d_model = 2048, c.d_ff = 5461, c.n_heads = 32, c.n_layers = 24, c.rank = 512;
  } else if (name == "7b") {
    c.d_model = 4096, c.d_ff = 11008, c.n_heads = 32, c.n_layers = 32, c.rank = 1024;
  } else {
    throw ConfigError("unknown preset '" + std::string(name) +
                      "' (valid: 60m, 130m, 350m, 1b, 7b)");
  }
  return c;
}

// ---------------------------------------------------------------------------
// Building blocks

template <class T>
Matrix<T> rmsnorm(const Matrix<T>& x, const Matrix<T>& gain, RmsCache<T>* cache) {
  const std::size_t rows = x.rows(), d = x.cols();
  require_shape(gain, 1, d, "rmsnorm gain");
  Matrix<T> y(rows, d);
  std::vector<T> inv(rows);
#pragma omp parallel for schedule(static) if (rows * d >= 65536)
  for (std::size_t i = 0; i < rows; ++i) {
    const T* xi = x.data() + i * d;
    T ss{0};
    for (std::size_t j = 0; j < d; ++j) ss += xi[j] * xi[j];
    const T r = T{1} / std::sqrt(ss / static_cast<T>(d) + static_cast<T>(kRmsEps));
    inv[i] = r;
    T* yi = y.data() + i * d;
    for (std::size_t j = 0; j < d; ++j) yi[j] = xi[j] * r * gain.data()[j];
  }
  if (cache) {
    cache->x = x;
    cache->inv_rms = std::move(inv);
  }
  return y;
}

template <class T>
Matrix<T> rmsnorm_backward(const RmsCache<T>& cache, const Matrix<T>& gain, const Matrix<T>& dy,
                           Matrix<T>& dgain) {
  const Matrix<T>& x = cache.x;
  const std::size_t rows = x.rows(), d = x.cols();
  require_shape(dy, rows, d, "rmsnorm_backward dy");
  if (dgain.rows() != 1 || dgain.cols() != d) dgain = Matrix<T>(1, d);
  Matrix<T> dx(rows, d);
#pragma omp parallel for schedule(static) if (rows * d >= 65536)
  for (std::size_t i = 0; i < rows; ++i) {
    const T r = cache.inv_rms[i];
    const T* xi = x.data() + i * d;
    const T* dyi = dy.data() + i * d;
    T dot{0};
    for (std::size_t j = 0; j < d; ++j) dot += dyi[j] * gain.data()[j] * xi[j] * r;
    const T mean_dot = dot / static_cast<T>(d);
    T* dxi = dx.data() + i * d;
    for (std::size_t j = 0; j < d; ++j) {
      const T xhat = xi[j] * r;
      dxi[j] = r * (dyi[j] * gain.data()[j] - xhat * mean_dot);
    }
  }
  for (std::size_t i = 0; i < rows; ++i) {
    const T r = cache.inv_rms[i];
    for (std::size_t j = 0; j < d; ++j) dgain.data()[j] += dy(i, j) * x(i, j) * r;
  }
  return dx;
}

template <class T>
double cross_entropy(const Matrix<T>& logits, std::span<const std::uint32_t> targets,
                     Matrix<T>* dlogits) {
  const std::size_t rows = logits.rows(), vocab = logits.cols();
  if (targets.size() != rows) {
    throw ParameterError("cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                         std::to_string(rows) + " rows");
  }
  for (std::uint32_t t : targets) {
    if (t >= vocab)
      throw InputError("cross_entropy: target " + std::to_string(t) + " outside vocab " +
                       std::to_string(vocab));
  }
  if (dlogits) dlogits->resize(rows, vocab);
  std::vector<double> nll(rows);
  const double inv_rows = 1.0 / static_cast<double>(rows);
#pragma omp parallel for schedule(static) if (rows * vocab >= 65536)
  for (std::size_t i = 0; i < rows; ++i) {
    const T* li = logits.data() + i * vocab;
    double mx = li[0];
    for (std::size_t j = 1; j < vocab; ++j) mx = std::max(mx, static_cast<double>(li[j]));
    double sum = 0.0;
    for (std::size_t j = 0; j < vocab; ++j) sum += std::exp(static_cast<double>(li[j]) - mx);
    const double lse = mx + std::log(sum);
    nll[i] = lse - static_cast<double>(li[targets[i]]);
    if (dlogits) {
      T* di = dlogits->data() + i * vocab;
      for (std::size_t j = 0; j < vocab; ++j) {
        di[j] = static_cast<T>(std::exp(static_cast<double>(li[j]) - lse) * inv_rows);
      }
      di[targets[i]] -= static_cast<T>(inv_rows);
    }
  }
  double total = 0.0;
  for (double v : nll) total += v;
  return total * inv_rows;
}

namespace {

template <class T>
Matrix<T> linear_forward(const AnyLinear<T>& lin, const Matrix<T>& x, LinearCache<T>* cache) {
  if (const auto* dense = std::get_if<DenseLinear<T>>(&lin)) {
    if (cache) cache->x = x;
    return matmul_nt(x, dense->W);
  }
  return std::get<LostLinear<T>>(lin).forward(x, cache ? &cache->lost : nullptr);
}

template <class T>
Matrix<T> linear_backward(const AnyLinear<T>& lin, const LinearCache<T>& cache, const Matrix<T>& dy,
                          LinearGrad<T>& grad) {
  if (const auto* dense = std::get_if<DenseLinear<T>>(&lin)) {
    if (cache.x.rows() != dy.rows()) throw StateError("dense linear backward: missing cache");
    grad.W = matmul_tn(dy, cache.x);
    return matmul(dy, dense->W);
  }
  auto [g, dx] = std::get<LostLinear<T>>(lin).backward(cache.lost, dy);
  grad.lost = std::move(g);
  return dx;
}

std::string linear_name(std::size_t block, LinearRole role) {
  return "block" + std::to_string(block) + "." + std::string(to_string(role));
}

}  // namespace

// ---------------------------------------------------------------------------
// Model

template <class T>
Model<T> Model<T>::build(const ModelConfig& cfg) {
  cfg.validate(true);
  const std::size_t d = cfg.d_model;
  Rng root(cfg.seed);
  Model<double> m;
  m.cfg_ = cfg;
  {
    Rng r = root.derive("embed");
    m.embed_ = init_matrix(cfg.vocab_size, d, InitSpec::gaussian(0.02), r);
  }
  {
    Rng r = root.derive("pos_embed");
    m.pos_ = init_matrix(cfg.seq_len, d, InitSpec::gaussian(0.02), r);
  }
  {
    Rng r = root.derive("head");
    m.head_ = init_matrix(d, cfg.vocab_size,
                          InitSpec::gaussian(1.0 / std::sqrt(static_cast<double>(d))), r);
  }
  m.final_norm_ = MatrixD(1, d, 1.0);
  m.blocks_.resize(cfg.n_layers);
  for (std::size_t b = 0; b < cfg.n_layers; ++b) {
    Block<double>& blk = m.blocks_[b];
    blk.norm1 = MatrixD(1, d, 1.0);
    blk.norm2 = MatrixD(1, d, 1.0);
    for (LinearRole role : kLinearRoles) {
      const LinearShape s = cfg.shape(role);
      Rng r = root.derive(linear_name(b, role));
      auto& slot = blk.linears[static_cast<std::size_t>(role)];
      switch (cfg.parameterization) {
        case Parameterization::dense:
          slot = DenseLinear<double>{init_matrix(s.out, s.in, InitSpec::kaiming(), r)};
          break;
        case Parameterization::lowrank_only:
          slot = lowrank_only_init(s.out, s.in, cfg.rank, cfg.lowrank_init, cfg.activation, r);
          break;
        case Parameterization::lost:
          slot = lost_init(s.out, s.in, cfg.lost_options(), r);
          break;
      }
    }
  }
  if constexpr (std::is_same_v<T, double>) {
    return m;
  } else {
    return m.template cast<T>();
  }
}

template <class T>
template <class U>
Model<U> Model<T>::cast() const {
  Model<U> out;
  out.cfg_ = cfg_;
  out.embed_ = embed_.template cast<U>();
  out.pos_ = pos_.template cast<U>();
  out.head_ = head_.template cast<U>();
  out.final_norm_ = final_norm_.template cast<U>();
  out.blocks_.resize(blocks_.size());
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    out.blocks_[b].norm1 = blocks_[b].norm1.template cast<U>();
    out.blocks_[b].norm2 = blocks_[b].norm2.template cast<U>();
    for (std::size_t l = 0; l < 7; ++l) {
      const auto& src = blocks_[b].linears[l];
      if (const auto* dense = std::get_if<DenseLinear<T>>(&src)) {
        out.blocks_[b].linears[l] = DenseLinear<U>{dense->W.template cast<U>()};
      } else {
        out.blocks_[b].linears[l] = std::get<LostLinear<T>>(src).template cast<U>();
      }
    }
  }
  return out;
}

template <class T>
Matrix<T> Model<T>::forward(std::span<const std::uint32_t> tokens, std::size_t batch,
                            std::size_t seq, ModelCache<T>* cache) const {
  const std::size_t d = cfg_.d_model;
  if (seq < 1 || seq > cfg_.seq_len) {
    throw InputError("model forward: sequence length " + std::to_string(seq) + " outside [1, " +
                     std::to_string(cfg_.seq_len) + "]");
  }
  if (tokens.size() != batch * seq) {
    throw InputError("model forward: expected " + std::to_string(batch * seq) + " tokens, got " +
                     std::to_string(tokens.size()));
  }
  for (std::uint32_t t : tokens) {
    if (t >= cfg_.vocab_size) {
      throw InputError("model forward: token " + std::to_string(t) + " outside vocab " +
                       std::to_string(cfg_.vocab_size));
    }
  }
  const std::size_t rows = batch * seq;
  Matrix<T> x(rows, d);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* e = embed_.data() + tokens[r] * d;
    const T* p = pos_.data() + (r % seq) * d;
    T* xr = x.data() + r * d;
    for (std::size_t j = 0; j < d; ++j) xr[j] = e[j] + p[j];
  }
  if (cache) {
    cache->tokens.assign(tokens.begin(), tokens.end());
    cache->batch = batch;
    cache->seq = seq;
    cache->blocks.assign(blocks_.size(), BlockCache<T>{});
    cache->filled = true;
  }

  auto lin = [](const Block<T>& blk, LinearRole role) -> const AnyLinear<T>& {
    return blk.linears[static_cast<std::size_t>(role)];
  };
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    const Block<T>& blk = blocks_[b];
    BlockCache<T>* bc = cache ? &cache->blocks[b] : nullptr;
    auto lc = [&](LinearRole role) -> LinearCache<T>* {
      return bc ? &bc->lin[static_cast<std::size_t>(role)] : nullptr;
    };

    const Matrix<T> u = rmsnorm(x, blk.norm1, bc ? &bc->norm1 : nullptr);
    Matrix<T> q = linear_forward(lin(blk, LinearRole::attn_q), u, lc(LinearRole::attn_q));
    Matrix<T> k = linear_forward(lin(blk, LinearRole::attn_k), u, lc(LinearRole::attn_k));
    Matrix<T> v = linear_forward(lin(blk, LinearRole::attn_v), u, lc(LinearRole::attn_v));
    Matrix<T> probs;
    const Matrix<T> att = causal_attention(q, k, v, batch, seq, cfg_.n_heads, probs);
    axpy(T{1}, linear_forward(lin(blk, LinearRole::attn_o), att, lc(LinearRole::attn_o)), x);

    const Matrix<T> u2 = rmsnorm(x, blk.norm2, bc ? &bc->norm2 : nullptr);
    Matrix<T> gate = linear_forward(lin(blk, LinearRole::ffn_gate), u2, lc(LinearRole::ffn_gate));
    Matrix<T> up = linear_forward(lin(blk, LinearRole::ffn_up), u2, lc(LinearRole::ffn_up));
    Matrix<T> hid(gate.rows(), gate.cols());
    for (std::size_t i = 0; i < hid.size(); ++i) {
      hid.data()[i] = silu(gate.data()[i]) * up.data()[i];
    }
    axpy(T{1}, linear_forward(lin(blk, LinearRole::ffn_down), hid, lc(LinearRole::ffn_down)), x);

    if (bc) {
      bc->q = std::move(q);
      bc->k = std::move(k);
      bc->v = std::move(v);
      bc->probs = std::move(probs);
      bc->gate = std::move(gate);
      bc->up = std::move(up);
    }
  }
  Matrix<T> xf = rmsnorm(x, final_norm_, cache ? &cache->final_norm : nullptr);
  Matrix<T> logits = matmul(xf, head_);
  if (cache) cache->final_out = std::move(xf);
  return logits;
}

template <class T>
ModelGrads<T> Model<T>::backward(const ModelCache<T>& cache, const Matrix<T>& dlogits) const {
  if (!cache.filled) throw StateError("model backward: no cache from a training-mode forward");
  const std::size_t d = cfg_.d_model;
  const std::size_t rows = cache.batch * cache.seq;
  require_shape(dlogits, rows, cfg_.vocab_size, "model backward dlogits");

  ModelGrads<T> g = zero_grads(*this);
  g.head = matmul_tn(cache.final_out, dlogits);
  Matrix<T> dx =
      rmsnorm_backward(cache.final_norm, final_norm_, matmul_nt(dlogits, head_), g.final_norm);

  for (std::size_t bi = blocks_.size(); bi-- > 0;) {
    const Block<T>& blk = blocks_[bi];
    const BlockCache<T>& bc = cache.blocks[bi];
    BlockGrads<T>& bg = g.blocks[bi];
    auto back = [&](LinearRole role, const Matrix<T>& dy) {
      const auto i = static_cast<std::size_t>(role);
      return linear_backward(blk.linears[i], bc.lin[i], dy, bg.lin[i]);
    };

    const Matrix<T> dhid = back(LinearRole::ffn_down, dx);
    Matrix<T> dgate(dhid.rows(), dhid.cols()), dup(dhid.rows(), dhid.cols());
    for (std::size_t i = 0; i < dhid.size(); ++i) {
      const T gv = bc.gate.data()[i];
      dgate.data()[i] = dhid.data()[i] * bc.up.data()[i] * silu_grad(gv);
      dup.data()[i] = dhid.data()[i] * silu(gv);
    }
    Matrix<T> du2 = back(LinearRole::ffn_gate, dgate);
    axpy(T{1}, back(LinearRole::ffn_up, dup), du2);
    axpy(T{1}, rmsnorm_backward(bc.norm2, blk.norm2, du2, bg.norm2), dx);

    const Matrix<T> datt = back(LinearRole::attn_o, dx);
    Matrix<T> dq, dk, dv;
    causal_attention_backward(bc.q, bc.k, bc.v, bc.probs, datt, cache.batch, cache.seq,
                              cfg_.n_heads, dq, dk, dv);
    Matrix<T> du = back(LinearRole::attn_q, dq);
    axpy(T{1}, back(LinearRole::attn_k, dk), du);
    axpy(T{1}, back(LinearRole::attn_v, dv), du);
    axpy(T{1}, rmsnorm_backward(bc.norm1, blk.norm1, du, bg.norm1), dx);
  }

  for (std::size_t r = 0; r < rows; ++r) {
    const T* src = dx.data() + r * d;
    T* e = g.embed.data() + cache.tokens[r] * d;
    T* p = g.pos.data() + (r % cache.seq) * d;
    for (std::size_t j = 0; j < d; ++j) {
      e[j] += src[j];
      p[j] += src[j];
    }
  }
  return g;
}

template <class T>
ModelGrads<T> zero_grads(const Model<T>& model) {
  ModelGrads<T> g;
  g.embed = Matrix<T>(model.embed().rows(), model.embed().cols());
  g.pos = Matrix<T>(model.pos().rows(), model.pos().cols());
  g.head = Matrix<T>(model.head().rows(), model.head().cols());
  g.final_norm = Matrix<T>(1, model.final_norm().cols());
  g.blocks.resize(model.blocks().size());
  for (std::size_t b = 0; b < model.blocks().size(); ++b) {
    const Block<T>& blk = model.blocks()[b];
    BlockGrads<T>& bg = g.blocks[b];
    bg.norm1 = Matrix<T>(1, blk.norm1.cols());
    bg.norm2 = Matrix<T>(1, blk.norm2.cols());
    for (std::size_t l = 0; l < 7; ++l) {
      if (const auto* dense = std::get_if<DenseLinear<T>>(&blk.linears[l])) {
        bg.lin[l].W = Matrix<T>(dense->W.rows(), dense->W.cols());
      } else {
        const auto& layer = std::get<LostLinear<T>>(blk.linears[l]);
        bg.lin[l].lost.dA = Matrix<T>(layer.A().rows(), layer.A().cols());
        bg.lin[l].lost.dB = Matrix<T>(layer.B().rows(), layer.B().cols());
        bg.lin[l].lost.dWs = Matrix<T>(layer.Ws().rows(), layer.Ws().cols());
      }
    }
  }
  return g;
}

namespace {

// Walks parameters in checkpoint order: embed, pos_embed, per block norm1,
// attention linears, norm2, ffn linears, then final_norm and head.
template <class M, class G, class F>
void walk(M& model, G* grads, F&& f) {
  f(std::string("embed"), model.embed(), grads ? &grads->embed : nullptr, true);
  f(std::string("pos_embed"), model.pos(), grads ? &grads->pos : nullptr, true);
  auto& blocks = model.blocks();
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    auto& blk = blocks[b];
    auto* bg = grads ? &grads->blocks[b] : nullptr;
    const std::string prefix = "block" + std::to_string(b) + ".";
    auto linear = [&](LinearRole role) {
      const auto i = static_cast<std::size_t>(role);
      const std::string base = prefix + std::string(to_string(role)) + ".";
      auto& slot = blk.linears[i];
      if (auto* dense = std::get_if<0>(&slot)) {
        f(base + "W", dense->W, bg ? &bg->lin[i].W : nullptr, true);
      } else {
        auto& layer = std::get<1>(slot);
        f(base + "A", layer.A(), bg ? &bg->lin[i].lost.dA : nullptr, true);
        f(base + "B", layer.B(), bg ? &bg->lin[i].lost.dB : nullptr, true);
        if (layer.k() > 0) f(base + "Ws", layer.Ws(), bg ? &bg->lin[i].lost.dWs : nullptr, true);
      }
    };
    f(prefix + "norm1", blk.norm1, bg ? &bg->norm1 : nullptr, false);
    for (LinearRole role :
         {LinearRole::attn_q, LinearRole::attn_k, LinearRole::attn_v, LinearRole::attn_o}) {
      linear(role);
    }
    f(prefix + "norm2", blk.norm2, bg ? &bg->norm2 : nullptr, false);
    for (LinearRole role : {LinearRole::ffn_gate, LinearRole::ffn_up, LinearRole::ffn_down}) {
      linear(role);
    }
  }
  f(std::string("final_norm"), model.final_norm(), grads ? &grads->final_norm : nullptr, false);
  f(std::string("head"), model.head(), grads ? &grads->head : nullptr, true);
}

}  // namespace

template <class T>
std::vector<ParamSlot<T>> Model<T>::params(ModelGrads<T>& grads) {
  std::vector<ParamSlot<T>> out;
  walk(*this, &grads, [&](std::string name, Matrix<T>& value, Matrix<T>* grad, bool decay) {
    out.push_back({std::move(name), &value, grad, decay});
  });
  return out;
}

template <class T>
std::vector<ParamSlot<T>> Model<T>::params() {
  std::vector<ParamSlot<T>> out;
  ModelGrads<T>* none = nullptr;
  walk(*this, none, [&](std::string name, Matrix<T>& value, Matrix<T>*, bool decay) {
    out.push_back({std::move(name), &value, nullptr, decay});
  });
  return out;
}

template <class T>
std::vector<TensorView<T>> Model<T>::tensors() const {
  std::vector<TensorView<T>> out;
  const ModelGrads<T>* none = nullptr;
  walk(*this, none, [&](std::string name, const Matrix<T>& value, const Matrix<T>*, bool) {
    out.push_back({std::move(name), &value});
  });
  return out;
}

template <class T>
std::vector<std::pair<std::string, const ChannelSelection*>> Model<T>::selections() const {
  std::vector<std::pair<std::string, const ChannelSelection*>> out;
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    for (LinearRole role : kLinearRoles) {
      const auto& slot = blocks_[b].linears[static_cast<std::size_t>(role)];
      if (const auto* layer = std::get_if<LostLinear<T>>(&slot); layer && layer->k() > 0) {
        out.emplace_back(linear_name(b, role) + ".idx", &layer->selection());
      }
    }
  }
  return out;
}

template <class T>
std::size_t Model<T>::param_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors()) n += t.value->size();
  return n;
}

template <class T>
std::size_t Model<T>::index_count() const {
  std::size_t n = 0;
  for (const auto& [name, sel] : selections()) n += sel->k();
  return n;
}

template <class T>
Model<T> Model<T>::dense_equivalent() const {
  Model<T> out = *this;
  out.cfg_.parameterization = Parameterization::dense;
  for (auto& blk : out.blocks_) {
    for (auto& slot : blk.linears) {
      if (const auto* layer = std::get_if<LostLinear<T>>(&slot)) {
        slot = DenseLinear<T>{layer->merge_dense()};
      }
    }
  }
  return out;
}

template class Model<float>;
template class Model<double>;
template Model<float> Model<double>::cast<float>() const;
template Model<double> Model<float>::cast<double>() const;
template Model<double> Model<double>::cast<double>() const;
template Model<float> Model<float>::cast<float>() const;

#define LOST_INSTANTIATE(T)                                                                      \
  template ModelGrads<T> zero_grads<T>(const Model<T>&);                                         \
  template Matrix<T> rmsnorm<T>(const Matrix<T>&, const Matrix<T>&, RmsCache<T>*);               \
  template Matrix<T> rmsnorm_backward<T>(const RmsCache<T>&, const Matrix<T>&, const Matrix<T>&, \
                                         Matrix<T>&);                                            \
  template double cross_entropy<T>(const Matrix<T>&, std::span<const std::uint32_t>, Matrix<T>*);

LOST_INSTANTIATE(float)
LOST_INSTANTIATE(double)
#undef LOST_INSTANTIATE

}  // namespace lost
