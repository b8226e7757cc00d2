#include "sdpadv/optim.hpp"

#include <cmath>

#include "sdpadv/error.hpp"

SDPADV_NAMESPACE_BEGIN

void adam_step(Tensor& param, const Tensor& grad, AdamState& state) {
  if (param.shape() != grad.shape())
    throw DimensionError("adam_step: param " + to_string(param.shape()) + " vs grad " +
                         to_string(grad.shape()));
  if (state.m.shape() != param.shape()) state.m = Tensor(param.shape());
  if (state.v.shape() != param.shape()) state.v = Tensor(param.shape());

  ++state.t;
  const double c1 = 1.0 - std::pow(double(state.beta1), double(state.t));
  const double c2 = 1.0 - std::pow(double(state.beta2), double(state.t));
  const Real step = Real(double(state.learning_rate) / c1);
  const Real inv_c2 = Real(1.0 / c2);

  Real* p = param.ptr();
  const Real* g = grad.ptr();
  Real* m = state.m.ptr();
  Real* v = state.v.ptr();
  const Real b1 = state.beta1, b2 = state.beta2;
  for (std::size_t i = 0, n = param.size(); i < n; ++i) {
    m[i] = b1 * m[i] + (1 - b1) * g[i];
    v[i] = b2 * v[i] + (1 - b2) * g[i] * g[i];
    p[i] -= step * m[i] / (std::sqrt(v[i] * inv_c2) + state.epsilon);
  }
}

SDPADV_NAMESPACE_END
