#pragma once

#include <cstdint>
#include <deque>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "sdpadv/optim.hpp"
#include "sdpadv/tensor.hpp"

SDPADV_NAMESPACE_BEGIN

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  AdamState adam;
};

/// Named, ordered parameter collection for one network, with Adam state.
/// Parameters have stable addresses for the lifetime of the set.
class ParamSet {
 public:
  Parameter& add(std::string name, Tensor value);

  Parameter& get(std::string_view name);
  const Parameter& get(std::string_view name) const;
  bool contains(std::string_view name) const;

  std::size_t size() const noexcept { return params_.size(); }
  std::size_t num_values() const noexcept;

  auto begin() noexcept { return params_.begin(); }
  auto end() noexcept { return params_.end(); }
  auto begin() const noexcept { return params_.begin(); }
  auto end() const noexcept { return params_.end(); }

  void zero_grad();
  void set_learning_rate(Real lr);
  /// Adam update of every parameter from its accumulated gradient.
  void adam_step();

  /// Copies values (not optimizer state) from `other`; names and shapes must match.
  void copy_values_from(const ParamSet& other);

  friend bool operator==(const ParamSet& a, const ParamSet& b);

 private:
  std::deque<Parameter> params_;
};

/// Uniform(-bound, bound) with bound = sqrt(6 / fan_in) (He uniform).
Tensor he_uniform(Shape shape, std::size_t fan_in, std::mt19937_64& rng);

SDPADV_NAMESPACE_END
