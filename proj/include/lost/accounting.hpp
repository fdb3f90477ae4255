#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "lost/model_config.hpp"

namespace lost {

struct LayerCount {
  std::string name;  // block{i}.{role}
  std::size_t m = 0, n = 0;
  std::size_t dense_count = 0;  // m n
  std::size_t count = 0;        // under the configured parameterization
  std::size_t index_count = 0;  // k for LOST layers
  /// Smallest rank at which r(m + n) + m k >= m n.
  std::size_t break_even_rank = 0;
  bool degenerate = false;  // configured rank >= break_even_rank
};

struct ParamReport {
  Parameterization parameterization = Parameterization::dense;
  std::vector<LayerCount> layers;
  std::size_t embed = 0, pos_embed = 0, head = 0, norms = 0;
  std::size_t linear_dense = 0, linear_count = 0, index_count = 0;

  std::size_t dense_total() const { return embed + pos_embed + head + norms + linear_dense; }
  std::size_t total() const { return embed + pos_embed + head + norms + linear_count; }
};

/// Exact counts for the config without allocating the model.
ParamReport count_params(const ModelConfig& cfg);

/// Trainable scalars of one LOST linear: r(m + n) + m ceil(rho n).
std::size_t lost_layer_count(std::size_t m, std::size_t n, std::size_t r, double rho);

enum class OptimizerKind { adam, none };

struct MemoryEstimate {
  double bytes_per_scalar = 2.0;
  OptimizerKind optimizer = OptimizerKind::adam;
  std::size_t batch = 0, seq = 0;
  std::size_t params = 0;
  std::size_t index_bytes = 0;
  std::size_t activation_scalars = 0;
  double weights = 0, gradients = 0, optimizer_states = 0, activations = 0;  // bytes
  std::vector<std::string> assumptions;

  double total() const { return weights + gradients + optimizer_states + activations; }
};

/// Activation scalars kept for backward, per token:
///   per block: 8 d + 3 d_ff + heads * seq (dense linears)
///              + sum over LOST linears of 2 r + k
///   outside blocks: 3 d + vocab
MemoryEstimate memory_estimate(const ModelConfig& cfg, double bytes_per_scalar,
                               OptimizerKind optimizer, std::size_t batch, std::size_t seq);

struct StorageCompare {
  std::size_t m = 0, n = 0, k = 0;
  double rho = 0;
  std::size_t structured_values = 0;       // m k
  std::size_t structured_indices = 0;      // k
  std::size_t unstructured_values = 0;     // ceil(rho m n)
  std::size_t unstructured_mask_bits = 0;  // m n
  std::size_t unstructured_indices = 0;    // one int64 per value
  std::size_t dense_shape_values = 0;      // m n, values kept in the original shape

  std::size_t structured_total() const { return structured_values + structured_indices; }
  /// Values plus a 1-bit mask, in scalar-equivalents of `scalar_bits`.
  double unstructured_mask_total(double scalar_bits) const {
    return static_cast<double>(unstructured_values) +
           static_cast<double>(unstructured_mask_bits) / scalar_bits;
  }
  /// Values plus one index per value, an index counted as one scalar-equivalent.
  std::size_t unstructured_index_total() const {
    return unstructured_values + unstructured_indices;
  }
};

StorageCompare sparse_storage_compare(std::size_t m, std::size_t n, double rho);

/// Whole-model totals of the storage conventions for a LOST config.
struct ModelStorageCompare {
  std::size_t structured = 0;                // count_params + channel indices
  std::size_t unstructured_index = 0;        // low-rank + values + int64 indices
  double unstructured_mask = 0;              // low-rank + values + 1-bit mask (16-bit scalars)
  std::size_t unstructured_dense_shape = 0;  // low-rank + m n values per linear
};
ModelStorageCompare model_storage_compare(const ModelConfig& cfg);

}  // namespace lost
