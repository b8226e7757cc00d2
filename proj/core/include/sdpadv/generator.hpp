#pragma once

#include <cstdint>
#include <filesystem>

#include "sdpadv/autodiff.hpp"
#include "sdpadv/spatial.hpp"

SDPADV_NAMESPACE_BEGIN

enum class ThetaProjection {
  Radial,       // rescale theta - theta_I onto the L2 ball of radius gamma
  Elementwise,  // theta := min(theta_I + gamma, theta), applied per entry
};

struct GeneratorConfig {
  Real gamma = Real(0.3);    // affine budget ||theta - theta_I||_2 <= gamma
  Real epsilon = Real(0.1);  // perturbation budget ||eta||_inf <= epsilon
  bool clamp_output = true;  // x_A clamped to [0,1]
  ThetaProjection projection = ThetaProjection::Radial;
  /// false removes the spatial step entirely (x_T = x); with gamma = 0 the
  /// outputs are bit-identical to the full pipeline.
  bool spatial = true;

  void validate() const;
};

struct GeneratorShape {
  std::size_t height = 28;
  std::size_t width = 28;
  std::size_t loc_hidden = 20;    // h_sd: X-FC(20)-FC(6)
  std::size_t pert_hidden = 128;  // h_p:  X-FC(128)-FC(128)-X
};

/// Adversarial generator g(x) = t_{h_sd(x)}(x) + h_p(t_{h_sd(x)}(x)).
class Generator {
 public:
  explicit Generator(GeneratorShape shape = {}, std::uint64_t seed = 0);

  struct Vars {
    Var theta;  // [B,6]
    Var x_t;    // [B,1,H,W]
    Var eta;    // [B,1,H,W]
    Var x_a;    // [B,1,H,W]
  };

  /// theta_x from the localisation network, projected into the gamma-ball.
  Var localise(Var x, Real gamma, ThetaProjection projection, bool trainable);
  /// eta = clamp(epsilon * tanh(h_p(x_T)), -epsilon, epsilon).
  Var perturb(Var x_t, Real epsilon, bool trainable);
  /// One localisation forward, one warp and one perturbation forward.
  Vars forward(Var x, const GeneratorConfig& config, bool trainable);

  struct Result {
    Tensor theta, x_t, eta, x_a;
  };
  /// Amortized inference over any batch size.
  Result generate(const Tensor& x, const GeneratorConfig& config) const;

  const GeneratorShape& shape() const noexcept { return shape_; }
  ParamSet& localisation() noexcept { return loc_; }
  ParamSet& perturbation() noexcept { return pert_; }
  const ParamSet& localisation() const noexcept { return loc_; }
  const ParamSet& perturbation() const noexcept { return pert_; }

  void zero_grad();
  void set_learning_rate(Real lr);
  void adam_step();

 private:
  GeneratorShape shape_;
  ParamSet loc_;
  ParamSet pert_;
};

/// elementwise clamp of a raw perturbation to [-epsilon, epsilon].
Var clamp_perturbation(Var raw, Real epsilon);

void save_generator(const std::filesystem::path& path, const Generator& g);
Generator load_generator(const std::filesystem::path& path, GeneratorShape shape = {});

SDPADV_NAMESPACE_END
