#include "sdpadv/params.hpp"

#include <algorithm>
#include <cmath>

#include "sdpadv/error.hpp"

SDPADV_NAMESPACE_BEGIN

Parameter& ParamSet::add(std::string name, Tensor value) {
  if (contains(name)) throw ConfigError("duplicate parameter name '" + name + "'");
  Parameter p;
  p.name = std::move(name);
  p.grad = Tensor(value.shape());
  p.adam = AdamState(value.shape(), Real(1e-3));
  p.value = std::move(value);
  return params_.emplace_back(std::move(p));
}

Parameter& ParamSet::get(std::string_view name) {
  for (auto& p : params_)
    if (p.name == name) return p;
  throw IndexError("no parameter named '" + std::string(name) + "'");
}

const Parameter& ParamSet::get(std::string_view name) const {
  return const_cast<ParamSet*>(this)->get(name);
}

bool ParamSet::contains(std::string_view name) const {
  return std::any_of(params_.begin(), params_.end(),
                     [&](const Parameter& p) { return p.name == name; });
}

std::size_t ParamSet::num_values() const noexcept {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

void ParamSet::zero_grad() {
  for (auto& p : params_) p.grad.fill(0);
}

void ParamSet::set_learning_rate(Real lr) {
  for (auto& p : params_) p.adam.learning_rate = lr;
}

void ParamSet::adam_step() {
  for (auto& p : params_) sdpadv::adam_step(p.value, p.grad, p.adam);
}

void ParamSet::copy_values_from(const ParamSet& other) {
  if (other.size() != size()) throw LoadError("parameter count mismatch");
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const auto& src = other.params_[i];
    auto& dst = params_[i];
    if (src.name != dst.name || src.value.shape() != dst.value.shape())
      throw LoadError("parameter mismatch: '" + dst.name + "' " + to_string(dst.value.shape()) +
                      " vs '" + src.name + "' " + to_string(src.value.shape()));
    dst.value = src.value;
  }
}

bool operator==(const ParamSet& a, const ParamSet& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a.params_[i].name != b.params_[i].name || !(a.params_[i].value == b.params_[i].value))
      return false;
  return true;
}

Tensor he_uniform(Shape shape, std::size_t fan_in, std::mt19937_64& rng) {
  Tensor t(std::move(shape));
  const double bound = std::sqrt(6.0 / double(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (auto& v : t.data()) v = Real(dist(rng));
  return t;
}

SDPADV_NAMESPACE_END
