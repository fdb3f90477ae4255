#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "lost/matrix.hpp"
#include "lost/model.hpp"

namespace lost {

struct TrainConfig {
  std::size_t total_steps = 2000;
  std::optional<std::size_t> warmup_steps;  // unset: warmup_fraction * total_steps
  double warmup_fraction = 0.1;
  double peak_lr = 3e-3;
  double final_lr_fraction = 0.1;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double eps = 1e-8;
  double weight_decay = 0.0;
  double grad_clip = 1.0;  // global norm; 0 disables
  std::size_t batch_size = 32;
  std::size_t eval_every = 100;
  std::size_t eval_batches = 4;
  std::size_t checkpoint_every = 0;  // 0: only at the end
  std::uint64_t seed = 0;

  std::size_t warmup() const;
  /// Throws ConfigError.
  void validate() const;
};

/// Linear warmup from 0 to peak_lr, then cosine decay to
/// final_lr_fraction * peak_lr at total_steps.
double lr_at(std::size_t step, const TrainConfig& cfg);

template <class T>
struct AdamState {
  std::vector<Matrix<T>> m;
  std::vector<Matrix<T>> v;
  std::uint64_t t = 0;
};

/// Bias-corrected Adam with decoupled weight decay on slots with decay set.
/// Every gradient is checked first; a non-finite one throws NonFiniteError
/// and nothing is modified.
template <class T>
void adam_step(std::span<ParamSlot<T>> params, AdamState<T>& state, double lr,
               const TrainConfig& cfg);

/// Global 2-norm of all gradients.
template <class T>
double grad_norm(std::span<const ParamSlot<T>> params);

/// Scales gradients so the global norm is at most max_norm. Returns the norm
/// before clipping.
template <class T>
double clip_grad_norm(std::span<ParamSlot<T>> params, double max_norm);

}  // namespace lost
