#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>

#include "lost/factorize.hpp"
#include "lost/lost_linear.hpp"

namespace lost {

enum class Parameterization { dense, lowrank_only, lost };

std::string_view to_string(Parameterization p);
Parameterization parse_parameterization(std::string_view s);

/// The seven linear maps of a decoder block.
enum class LinearRole { attn_q, attn_k, attn_v, attn_o, ffn_gate, ffn_up, ffn_down };
inline constexpr std::array<LinearRole, 7> kLinearRoles{
    LinearRole::attn_q,   LinearRole::attn_k, LinearRole::attn_v,  LinearRole::attn_o,
    LinearRole::ffn_gate, LinearRole::ffn_up, LinearRole::ffn_down};
std::string_view to_string(LinearRole role);

struct LinearShape {
  std::size_t out = 0;  // m
  std::size_t in = 0;   // n
};

struct ModelConfig {
  std::size_t n_layers = 2;
  std::size_t d_model = 64;
  std::size_t d_ff = 172;
  std::size_t n_heads = 4;
  std::size_t vocab_size = 256;
  std::size_t seq_len = 128;

  Parameterization parameterization = Parameterization::lost;
  std::size_t rank = 16;
  double sparsity = 0.01;
  double gamma = 0.7;
  std::size_t rank_comp = 32;  // 0: min(256, min(m, n) - 1) per layer
  LowRankInit lowrank_init = LowRankInit::svd;
  CompSource comp_source = CompSource::rem;
  Criterion criterion = Criterion::l2;
  Combine combine = Combine::output_avg;
  Activation activation = Activation::silu;
  std::uint64_t seed = 0;

  LinearShape shape(LinearRole role) const;
  std::size_t head_dim() const { return d_model / n_heads; }

  /// Throws ConfigError. Head divisibility is only needed to build a model;
  /// accounting accepts configs that are never instantiated.
  void validate(bool for_build = true) const;

  /// Options handed to lost_init for every block linear.
  LostInitOptions lost_options() const;

  /// Two-layer byte-level model used by tests and desk experiments.
  static ModelConfig desk();
  /// Architecture rows: "60m", "130m", "350m", "1b", "7b". Vocab 32000,
  /// seq_len 256, dense parameterization.
  static ModelConfig preset(std::string_view name);
};

}  // namespace lost
