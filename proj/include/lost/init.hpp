#pragma once

#include <cstddef>

#include "lost/matrix.hpp"
#include "lost/rng.hpp"

namespace lost {

enum class InitScheme { kaiming, xavier, gaussian };

struct InitSpec {
  InitScheme scheme = InitScheme::kaiming;
  double std = 0.0;  // gaussian only

  static InitSpec kaiming() { return {InitScheme::kaiming, 0.0}; }
  static InitSpec xavier() { return {InitScheme::xavier, 0.0}; }
  static InitSpec gaussian(double std) { return {InitScheme::gaussian, std}; }
};

/// m x n matrix; the fan-in is n (a layer maps n inputs to m outputs).
///   kaiming:  N(0, 2/n)
///   xavier:   N(0, 2/(m+n))
///   gaussian: N(0, std^2)
/// Entries are drawn row-major from `rng`, which advances.
MatrixD init_matrix(std::size_t m, std::size_t n, const InitSpec& spec, Rng& rng);

/// Standard deviation `init_matrix` uses for the given shape.
double init_std(std::size_t m, std::size_t n, const InitSpec& spec);

}  // namespace lost
