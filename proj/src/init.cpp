#include "lost/init.hpp"

#include <cmath>

namespace lost {

double init_std(std::size_t m, std::size_t n, const InitSpec& spec) {
  switch (spec.scheme) {
    case InitScheme::kaiming:
      return std::sqrt(2.0 / static_cast<double>(n));
    case InitScheme::xavier:
      return std::sqrt(2.0 / static_cast<double>(m + n));
    case InitScheme::gaussian:
      return spec.std;
  }
  return 0.0;
}

MatrixD init_matrix(std::size_t m, std::size_t n, const InitSpec& spec, Rng& rng) {
  if (m == 0 || n == 0) throw ParameterError("init_matrix: empty shape " + shape_str(m, n));
  if (spec.scheme == InitScheme::gaussian && !(spec.std >= 0.0)) {
    throw ParameterError("init_matrix: negative std");
  }
  const double std = init_std(m, n, spec);
  MatrixD w(m, n);
  for (double& v : w.flat()) v = std * rng.normal();
  return w;
}

}  // namespace lost
