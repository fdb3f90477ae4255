#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "lost/config.hpp"
#include "lost/train.hpp"

namespace lost {

enum class AblationAxis {
  comp_criterion,
  lowrank_init,
  combine,
  activation,
  rcomp,
  sparsity,
  gamma
};

std::string_view to_string(AblationAxis a);
/// Accepts the names printed by to_string plus "comp_source_x_criterion".
AblationAxis parse_axis(std::string_view s);

struct AblationVariant {
  std::string label;
  ExperimentConfig config;
};

/// Variants of `base` along `axis`. Empty `values` selects the default sweep:
///   comp_criterion: {rem, top, bot, rand, ini} x {l2, l1, random}, written "src:crit"
///   lowrank_init:   svd kaiming xavier cola
///   combine:        output_avg (silu) and weight_avg (identity)
///   activation:     silu identity
///   rcomp:          8 16 32 48 63
///   sparsity:       0 0.01 0.05 0.1 0.2 0.3, rank re-fit to the base budget; 0 is lowrank_only
///   gamma:          0.4 0.5 0.6 0.7 0.8 0.9
/// Every variant keeps the base seeds, so only the axis differs.
/// Unknown values throw ParameterError listing the valid names.
std::vector<AblationVariant> make_variants(const ExperimentConfig& base, AblationAxis axis,
                                           const std::vector<std::string>& values);

/// Rank whose total parameter count is closest to `budget` at the given
/// sparsity (lowrank_only when sparsity is 0). Ties go to the smaller rank.
std::size_t budget_rank(const ModelConfig& cfg, double sparsity, std::size_t budget);

struct AblationRow {
  std::string label;
  std::size_t params = 0;
  std::vector<double> val_losses;  // one per seed
  double median_val_loss = 0.0;
  double median_ppl = 0.0;
  bool halted = false;
};

struct AblationOptions {
  std::size_t seeds = 1;  // seeds base, base + 1, ...
  std::function<void(const std::string&)> progress;
};

/// Trains every variant for base.train.total_steps and reports the final
/// validation loss. Nothing is written to disk.
std::vector<AblationRow> run_ablation(const std::vector<AblationVariant>& variants,
                                      const AblationOptions& opts = {});

/// Final validation loss of one training run; NaN if it halted.
double final_val_loss(const ExperimentConfig& cfg, TrainResult* result = nullptr);

void print_ablation(std::ostream& os, AblationAxis axis, const std::vector<AblationRow>& rows);

}  // namespace lost
