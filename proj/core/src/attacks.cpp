#include "sdpadv/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "sdpadv/error.hpp"

SDPADV_NAMESPACE_BEGIN

namespace {

Real sign_of(Real v) { return v > 0 ? Real(1) : (v < 0 ? Real(-1) : Real(0)); }

void check_inputs(const Tensor& x, std::span<const int> labels, Real epsilon) {
  if (!(epsilon >= 0)) throw ConfigError("attack epsilon must be non-negative");
  if (x.rank() != 4 || x.dim(0) != labels.size())
    throw DimensionError("attack expects x[B,1,H,W] with B labels, got " + to_string(x.shape()) +
                         " and " + std::to_string(labels.size()) + " labels");
}

// Runs `attack_chunk` on slices of at most kInferenceChunk images.
template <class F>
Tensor chunked(const Tensor& x, std::span<const int> labels, F attack_chunk) {
  if (x.dim(0) <= kInferenceChunk) return attack_chunk(x, labels);
  std::vector<Tensor> parts;
  for (std::size_t begin = 0; begin < x.dim(0); begin += kInferenceChunk) {
    const std::size_t end = std::min(x.dim(0), begin + kInferenceChunk);
    parts.push_back(attack_chunk(x.slice_rows(begin, end), labels.subspan(begin, end - begin)));
  }
  return concat_rows(parts);
}

// x <- clamp(clamp(x, x0 - eps, x0 + eps), 0, 1)
void project(Tensor& x, const Tensor& x0, Real epsilon) {
  for (std::size_t i = 0; i < x.size(); ++i) {
    const Real v = std::clamp(x[i], x0[i] - epsilon, x0[i] + epsilon);
    x[i] = std::clamp(v, Real(0), Real(1));
  }
}

}  // namespace

IterAttackConfig IterAttackConfig::pgd_defaults(Real epsilon) {
  IterAttackConfig c;
  c.epsilon = epsilon;
  c.steps = 40;
  c.step_size = epsilon / 10;
  c.random_start = true;
  return c;
}

IterAttackConfig IterAttackConfig::mim_defaults(Real epsilon) {
  IterAttackConfig c;
  c.epsilon = epsilon;
  c.steps = 10;
  c.step_size = epsilon / Real(c.steps);
  c.momentum = 1;
  c.random_start = false;
  return c;
}

void IterAttackConfig::validate() const {
  if (!(epsilon >= 0)) throw ConfigError("epsilon must be non-negative");
  if (steps < 1) throw ConfigError("steps must be at least 1");
  if (!(step_size > 0)) throw ConfigError("step size must be positive");
  if (!(momentum >= 0)) throw ConfigError("momentum must be non-negative");
}

Tensor fgsm(const Classifier& f, const Tensor& x, std::span<const int> labels, Real epsilon) {
  check_inputs(x, labels, epsilon);
  if (epsilon == 0) return x;
  return chunked(x, labels, [&](const Tensor& xc, std::span<const int> yc) {
    const Tensor grad = f.input_gradient(xc, yc);
    Tensor out = xc;
    for (std::size_t i = 0; i < out.size(); ++i)
      out[i] = std::clamp(xc[i] + epsilon * sign_of(grad[i]), Real(0), Real(1));
    return out;
  });
}

Tensor pgd(const Classifier& f, const Tensor& x, std::span<const int> labels,
           const IterAttackConfig& config) {
  config.validate();
  check_inputs(x, labels, config.epsilon);
  std::mt19937_64 rng(config.seed);
  return chunked(x, labels, [&](const Tensor& x0, std::span<const int> yc) {
    Tensor adv = x0;
    if (config.random_start && config.epsilon > 0) {
      std::uniform_real_distribution<double> u(-double(config.epsilon), double(config.epsilon));
      for (auto& v : adv.data()) v += Real(u(rng));
      project(adv, x0, config.epsilon);
    }
    for (std::size_t step = 0; step < config.steps; ++step) {
      const Tensor grad = f.input_gradient(adv, yc);
      for (std::size_t i = 0; i < adv.size(); ++i) adv[i] += config.step_size * sign_of(grad[i]);
      project(adv, x0, config.epsilon);
    }
    return adv;
  });
}

Tensor mim(const Classifier& f, const Tensor& x, std::span<const int> labels,
           const IterAttackConfig& config) {
  config.validate();
  check_inputs(x, labels, config.epsilon);
  return chunked(x, labels, [&](const Tensor& x0, std::span<const int> yc) {
    const std::size_t B = x0.dim(0), D = x0.size() / B;
    Tensor adv = x0;
    Tensor momentum(x0.shape());
    for (std::size_t step = 0; step < config.steps; ++step) {
      const Tensor grad = f.input_gradient(adv, yc);
      for (std::size_t b = 0; b < B; ++b) {
        const Real* g = grad.ptr() + b * D;
        double l1 = 0;
        for (std::size_t j = 0; j < D; ++j) l1 += std::abs(double(g[j]));
        Real* m = momentum.ptr() + b * D;
        for (std::size_t j = 0; j < D; ++j) {
          const Real normalized = l1 > 0 ? Real(double(g[j]) / l1) : Real(0);
          m[j] = config.momentum * m[j] + normalized;
        }
      }
      for (std::size_t i = 0; i < adv.size(); ++i) adv[i] += config.step_size * sign_of(momentum[i]);
      project(adv, x0, config.epsilon);
    }
    return adv;
  });
}

SDPADV_NAMESPACE_END
