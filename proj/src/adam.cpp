#include <cmath>

#include "lost/error.hpp"
#include "lost/optim.hpp"

namespace lost {

template <class T>
void adam_step(std::span<ParamSlot<T>> params, AdamState<T>& state, double lr,
               const TrainConfig& cfg) {
  for (const ParamSlot<T>& p : params) {
    require_shape(*p.grad, p.value->rows(), p.value->cols(), p.name.c_str());
    if (!all_finite(*p.grad)) {
      throw NonFiniteError(p.name, "adam_step: non-finite gradient in " + p.name);
    }
  }
  if (state.m.empty()) {
    for (const ParamSlot<T>& p : params) {
      state.m.emplace_back(p.value->rows(), p.value->cols());
      state.v.emplace_back(p.value->rows(), p.value->cols());
    }
  }
  if (state.m.size() != params.size()) {
    throw StateError("adam_step: optimizer state tracks " + std::to_string(state.m.size()) +
                     " tensors, got " + std::to_string(params.size()));
  }
  state.t += 1;
  const double t = static_cast<double>(state.t);
  const T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
  const T c1 = static_cast<T>(1.0 / (1.0 - std::pow(cfg.beta1, t)));
  const T c2 = static_cast<T>(1.0 / (1.0 - std::pow(cfg.beta2, t)));
  const T eps = static_cast<T>(cfg.eps);
  const T step = static_cast<T>(lr);

  for (std::size_t i = 0; i < params.size(); ++i) {
    T* w = params[i].value->data();
    const T* g = params[i].grad->data();
    T* m = state.m[i].data();
    T* v = state.v[i].data();
    const T decay = params[i].decay ? static_cast<T>(lr * cfg.weight_decay) : T{0};
    const std::size_t n = params[i].value->size();
#pragma omp parallel for schedule(static) if (n > 65536)
    for (std::size_t j = 0; j < n; ++j) {
      m[j] = b1 * m[j] + (T{1} - b1) * g[j];
      v[j] = b2 * v[j] + (T{1} - b2) * g[j] * g[j];
      const T mhat = m[j] * c1;
      const T vhat = v[j] * c2;
      w[j] -= step * mhat / (std::sqrt(vhat) + eps) + decay * w[j];
    }
  }
}

template <class T>
double grad_norm(std::span<const ParamSlot<T>> params) {
  double acc = 0.0;
  for (const ParamSlot<T>& p : params) {
    for (T g : p.grad->flat()) acc += static_cast<double>(g) * static_cast<double>(g);
  }
  return std::sqrt(acc);
}

template <class T>
double clip_grad_norm(std::span<ParamSlot<T>> params, double max_norm) {
  const double norm = grad_norm<T>(params);
  if (max_norm > 0.0 && norm > max_norm) {
    const T s = static_cast<T>(max_norm / norm);
    for (ParamSlot<T>& p : params) {
      for (T& g : p.grad->flat()) g *= s;
    }
  }
  return norm;
}

#define LOST_INSTANTIATE(T)                                                                       \
  template void adam_step<T>(std::span<ParamSlot<T>>, AdamState<T>&, double, const TrainConfig&); \
  template double grad_norm<T>(std::span<const ParamSlot<T>>);                                    \
  template double clip_grad_norm<T>(std::span<ParamSlot<T>>, double);

LOST_INSTANTIATE(float)
LOST_INSTANTIATE(double)
#undef LOST_INSTANTIATE

}  // namespace lost
