#include "lost/accounting.hpp"

#include <cmath>
#include <cstdio>

#include "lost/factorize.hpp"

namespace lost {

namespace {

std::size_t ceil_div(std::size_t a, std::size_t b) { return (a + b - 1) / b; }

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

}  // namespace

std::size_t lost_layer_count(std::size_t m, std::size_t n, std::size_t r, double rho) {
  return r * (m + n) + m * channel_count(rho, n);
}

ParamReport count_params(const ModelConfig& cfg) {
  cfg.validate(false);
  ParamReport rep;
  rep.parameterization = cfg.parameterization;
  const std::size_t d = cfg.d_model;
  rep.embed = cfg.vocab_size * d;
  rep.pos_embed = cfg.seq_len * d;
  rep.head = d * cfg.vocab_size;
  rep.norms = (2 * cfg.n_layers + 1) * d;
  for (std::size_t b = 0; b < cfg.n_layers; ++b) {
    for (LinearRole role : kLinearRoles) {
      const LinearShape s = cfg.shape(role);
      LayerCount row;
      row.name = "block" + std::to_string(b) + "." + std::string(to_string(role));
      row.m = s.out;
      row.n = s.in;
      row.dense_count = s.out * s.in;
      const std::size_t k =
          cfg.parameterization == Parameterization::lost ? channel_count(cfg.sparsity, s.in) : 0;
      switch (cfg.parameterization) {
        case Parameterization::dense:
          row.count = row.dense_count;
          break;
        case Parameterization::lowrank_only:
          row.count = cfg.rank * (s.out + s.in);
          break;
        case Parameterization::lost:
          row.count = cfg.rank * (s.out + s.in) + s.out * k;
          break;
      }
      row.index_count = k;
      const std::size_t gap = row.dense_count > s.out * k ? row.dense_count - s.out * k : 0;
      row.break_even_rank = ceil_div(gap, s.out + s.in);
      row.degenerate =
          cfg.parameterization != Parameterization::dense && cfg.rank >= row.break_even_rank;
      rep.linear_dense += row.dense_count;
      rep.linear_count += row.count;
      rep.index_count += row.index_count;
      rep.layers.push_back(std::move(row));
    }
  }
  return rep;
}

MemoryEstimate memory_estimate(const ModelConfig& cfg, double bytes_per_scalar,
                               OptimizerKind optimizer, std::size_t batch, std::size_t seq) {
  const ParamReport rep = count_params(cfg);
  MemoryEstimate est;
  est.bytes_per_scalar = bytes_per_scalar;
  est.optimizer = optimizer;
  est.batch = batch;
  est.seq = seq;
  est.params = rep.total();
  est.index_bytes = rep.index_count * 8;

  const std::size_t d = cfg.d_model;
  std::size_t per_block = 8 * d + 3 * cfg.d_ff + cfg.n_heads * seq;
  if (cfg.parameterization != Parameterization::dense) {
    for (LinearRole role : kLinearRoles) {
      const LinearShape s = cfg.shape(role);
      per_block += 2 * cfg.rank;
      if (cfg.parameterization == Parameterization::lost) {
        per_block += channel_count(cfg.sparsity, s.in);
      }
    }
  }
  const std::size_t per_token = cfg.n_layers * per_block + 3 * d + cfg.vocab_size;
  est.activation_scalars = batch * seq * per_token;

  const double p = static_cast<double>(est.params);
  est.weights = p * bytes_per_scalar + static_cast<double>(est.index_bytes);
  est.gradients = p * bytes_per_scalar;
  est.optimizer_states = optimizer == OptimizerKind::adam ? 2.0 * p * bytes_per_scalar : 0.0;
  est.activations = static_cast<double>(est.activation_scalars) * bytes_per_scalar;

  est.assumptions = {
      "bytes per scalar = " + fmt(bytes_per_scalar) +
          " for weights, gradients, optimizer states and activations",
      "channel indices stored as int64 and counted with the weights",
      "gradients: one scalar per trainable parameter",
      std::string("optimizer states: ") +
          (optimizer == OptimizerKind::adam ? "Adam, two moments per parameter" : "none"),
      "activations kept for backward, per token: 8 d + 3 d_ff + heads * seq per block, "
      "plus 2 r + k per factorized linear, plus 3 d + vocab outside the blocks; inputs shared "
      "by several linears counted once",
      "no gradient checkpointing, no framework workspace, no fragmentation",
      "batch = " + std::to_string(batch) + ", seq = " + std::to_string(seq),
  };
  return est;
}

StorageCompare sparse_storage_compare(std::size_t m, std::size_t n, double rho) {
  StorageCompare s;
  s.m = m;
  s.n = n;
  s.rho = rho;
  s.k = channel_count(rho, n);
  s.structured_values = m * s.k;
  s.structured_indices = s.k;
  s.unstructured_values = static_cast<std::size_t>(
      std::ceil(rho * static_cast<double>(m) * static_cast<double>(n) - 1e-9));
  s.unstructured_mask_bits = m * n;
  s.unstructured_indices = s.unstructured_values;
  s.dense_shape_values = m * n;
  return s;
}

ModelStorageCompare model_storage_compare(const ModelConfig& cfg) {
  ModelConfig lost_cfg = cfg;
  lost_cfg.parameterization = Parameterization::lost;
  const ParamReport rep = count_params(lost_cfg);
  const std::size_t fixed = rep.embed + rep.pos_embed + rep.head + rep.norms;
  ModelStorageCompare out;
  out.structured = rep.total() + rep.index_count;
  double mask = static_cast<double>(fixed);
  out.unstructured_index = fixed;
  out.unstructured_dense_shape = fixed;
  for (const LayerCount& row : rep.layers) {
    const std::size_t lowrank = cfg.rank * (row.m + row.n);
    const StorageCompare s = sparse_storage_compare(row.m, row.n, cfg.sparsity);
    out.unstructured_index += lowrank + s.unstructured_index_total();
    mask += static_cast<double>(lowrank) + s.unstructured_mask_total(16.0);
    out.unstructured_dense_shape += lowrank + s.dense_shape_values;
  }
  out.unstructured_mask = mask;
  return out;
}

}  // namespace lost
