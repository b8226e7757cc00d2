#pragma once

#include <cstdint>

#include "sdpadv/tensor.hpp"

SDPADV_NAMESPACE_BEGIN

struct AdamState {
  Tensor m;
  Tensor v;
  std::uint64_t t = 0;
  Real learning_rate = Real(1e-3);
  Real beta1 = Real(0.9);
  Real beta2 = Real(0.999);
  Real epsilon = Real(1e-8);

  AdamState() = default;
  AdamState(const Shape& shape, Real lr) : m(shape), v(shape), learning_rate(lr) {}
};

/// One bias-corrected Adam update of `param` in place; increments state.t.
void adam_step(Tensor& param, const Tensor& grad, AdamState& state);

SDPADV_NAMESPACE_END
