#pragma once

#include <cstdint>
#include <span>

#include "sdpadv/classifier.hpp"

SDPADV_NAMESPACE_BEGIN

// Perturbation attacks under an L-infinity budget. Outputs always satisfy
// ||x_A - x||_inf <= epsilon and x_A in [0,1].

struct IterAttackConfig {
  Real epsilon = Real(0.3);
  std::size_t steps = 40;
  Real step_size = Real(0.03);
  Real momentum = Real(1.0);  // MIM decay factor
  bool random_start = true;   // PGD only
  std::uint64_t seed = 0;

  /// 40 steps of epsilon/10 with a uniform random start.
  static IterAttackConfig pgd_defaults(Real epsilon);
  /// 10 steps of epsilon/steps, momentum 1.0.
  static IterAttackConfig mim_defaults(Real epsilon);
  void validate() const;
};

/// x_A = clamp(x + epsilon * sign(grad_x CE(f(x), y)), 0, 1).
Tensor fgsm(const Classifier& f, const Tensor& x, std::span<const int> labels, Real epsilon);

/// Projected sign-gradient ascent inside the epsilon-ball intersected with [0,1].
Tensor pgd(const Classifier& f, const Tensor& x, std::span<const int> labels,
           const IterAttackConfig& config);

/// Momentum iterative method: g <- mu g + grad / ||grad||_1 per image.
Tensor mim(const Classifier& f, const Tensor& x, std::span<const int> labels,
           const IterAttackConfig& config);

SDPADV_NAMESPACE_END
