#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lost/lost_linear.hpp"
#include "lost/model.hpp"

namespace lost {

struct CheckResult {
  std::string suite;
  std::string name;
  double observed = 0.0;  // worst error seen
  double tolerance = 0.0;
  bool passed = false;
  std::string detail;
};

/// |a - f| / max(|a|, |f|, floor): relative error that tolerates entries
/// whose true value is at the finite-difference noise level.
inline constexpr double kGradFloor = 1e-6;
double entry_rel_error(double analytic, double numeric, double floor = kGradFloor);

/// Worst entry-wise error of analytic vs central-difference gradients for the
/// loss 0.5 ||y||^2, per tensor: A, B, Ws, x.
struct LayerGradcheck {
  double dA = 0, dB = 0, dWs = 0, dx = 0;
  double worst() const;
};
LayerGradcheck gradcheck_layer(const LostLinear<double>& layer, const MatrixD& x, double h = 1e-5);

/// Worst entry-wise error over every model parameter for the mean
/// cross-entropy of (inputs, targets).
struct ModelGradcheck {
  double worst = 0;
  std::string worst_tensor;
  std::size_t entries = 0;
};
ModelGradcheck gradcheck_model(const Model<double>& model, std::span<const std::uint32_t> inputs,
                               std::span<const std::uint32_t> targets, std::size_t batch,
                               std::size_t seq, double h = 1e-5);

/// Random layer with dense random factors and channel set (not lost_init).
LostLinear<double> random_layer(std::size_t m, std::size_t n, std::size_t r, std::size_t k,
                                double gamma, Activation act, Combine combine, Rng& rng);

/// One-layer model used by the whole-model gradient check: d = 8, vocab 11, T = 4.
ModelConfig tiny_config(Parameterization p);

std::vector<CheckResult> verify_svd(std::uint64_t seed);
std::vector<CheckResult> verify_gradcheck(std::uint64_t seed);
std::vector<CheckResult> verify_decomp(std::uint64_t seed);
std::vector<CheckResult> verify_equivalence(std::uint64_t seed);

/// suite: svd, gradcheck, decomp, equivalence or all.
std::vector<CheckResult> run_verify(std::string_view suite, std::uint64_t seed = 0x5eed);

void print_checks(std::ostream& os, const std::vector<CheckResult>& checks);

}  // namespace lost
