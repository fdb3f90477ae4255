#include <cmath>
#include <numbers>
#include <string>

#include "lost/error.hpp"
#include "lost/optim.hpp"

namespace lost {

std::size_t TrainConfig::warmup() const {
  if (warmup_steps) return *warmup_steps;
  return static_cast<std::size_t>(std::llround(warmup_fraction * static_cast<double>(total_steps)));
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("train config: " + msg); };
  if (warmup() > total_steps) fail("warmup_steps exceeds total_steps");
  if (!(warmup_fraction >= 0.0 && warmup_fraction <= 1.0))
    fail("warmup_fraction must lie in [0, 1]");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    fail("beta1 and beta2 must lie in [0, 1)");
  }
  if (!(eps > 0.0)) fail("eps must be positive");
  if (!(peak_lr >= 0.0)) fail("peak_lr must be non-negative");
  if (!(final_lr_fraction >= 0.0 && final_lr_fraction <= 1.0)) {
    fail("final_lr_fraction must lie in [0, 1]");
  }
  if (!(weight_decay >= 0.0)) fail("weight_decay must be non-negative");
  if (!(grad_clip >= 0.0)) fail("grad_clip must be non-negative");
  if (batch_size < 1) fail("batch_size must be positive");
  if (eval_every < 1) fail("eval_every must be positive");
  if (eval_batches < 1) fail("eval_batches must be positive");
}

double lr_at(std::size_t step, const TrainConfig& cfg) {
  const std::size_t total = cfg.total_steps;
  const std::size_t warm = cfg.warmup();
  if (step >= total) return total == 0 ? 0.0 : cfg.peak_lr * cfg.final_lr_fraction;
  if (step < warm) return cfg.peak_lr * static_cast<double>(step) / static_cast<double>(warm);
  const double progress = static_cast<double>(step - warm) / static_cast<double>(total - warm);
  const double f = cfg.final_lr_fraction;
  return cfg.peak_lr * (f + (1.0 - f) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress)));
}

}  // namespace lost
