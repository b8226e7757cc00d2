#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "sdpadv/classifier.hpp"
#include "sdpadv/generator.hpp"

SDPADV_NAMESPACE_BEGIN

/// d: X-FC(64)-ReLU-FC(32)-ReLU-FC(2)-Softmax. Column 0 is the "real" class.
class Discriminator {
 public:
  explicit Discriminator(std::size_t inputs = 784, std::uint64_t seed = 0);

  /// Probability [B] that each image is real (a transformed x_T).
  Var real_probability(Var x, bool trainable);

  ParamSet& params() noexcept { return params_; }
  const ParamSet& params() const noexcept { return params_; }

 private:
  ParamSet params_;
};

/// -mean CE of the frozen classifier on (x_A, y).
Var loss_adv(const Classifier& f, Var x_a, std::span<const int> labels);

/// -mean log(1 - p_y): same optimum as loss_adv, but the logit gradient is
/// ~p_y instead of ~(1 - p_y), so it does not vanish on confident samples.
Var loss_adv_nonsaturating(const Classifier& f, Var x_a, std::span<const int> labels);

enum class AdvLoss {
  CrossEntropy,   // loss_adv
  NonSaturating,  // loss_adv_nonsaturating
};
/// mean ||theta - theta_I||_2.
Var loss_theta(Var theta);
/// mean max(0, ||eta||_2 - epsilon).
Var loss_eta(Var eta, Real epsilon);

inline constexpr Real kLogFloor = Real(1e-8);

/// E[log D(x_T)] + E[log(1 - D(x_A))]; the discriminator ascends this.
Var discriminator_objective(Var d_real, Var d_fake);

enum class GanGeneratorLoss {
  NonSaturating,  // -E[log D(x_A)]
  Minimax,        // E[log(1 - D(x_A))]
};

Var generator_gan_loss(Var d_fake, GanGeneratorLoss kind);

struct LossWeights {
  Real alpha0 = Real(5.0);
  Real decay = Real(0.8);
  std::size_t period = 10;
  Real floor = Real(0.8);
  Real beta = Real(1.0);
  Real lambda = Real(1.0);

  /// max(floor, alpha0 * decay^floor(epoch/period)).
  Real alpha(std::size_t epoch) const;
  void validate() const;
};

Real alpha_schedule(std::size_t epoch);

struct SdpAdvTrainOptions {
  std::size_t epochs = 100;
  std::size_t batch_size = 128;
  Real generator_lr = Real(5e-4);
  Real discriminator_lr = Real(5e-5);
  GanGeneratorLoss gan_loss = GanGeneratorLoss::NonSaturating;
  AdvLoss adv_loss = AdvLoss::CrossEntropy;
  std::uint64_t seed = 0;
  /// Validation images scored after each epoch; 0 uses the whole split.
  std::size_t validation_limit = 0;
  /// Stop once the validation accuracy under attack drops to this value.
  /// Negative disables early stopping.
  Real stop_accuracy = Real(-1);
};

struct EpochLog {
  std::size_t epoch = 0;
  Real l_adv = 0, l_theta = 0, l_eta = 0;
  Real d_loss = 0;  // discriminator objective, maximisation convention
  Real g_loss = 0;
  Real alpha = 0;
  Real val_accuracy = 0;
};

struct SdpAdvResult {
  Generator generator;
  Discriminator discriminator;
  std::vector<EpochLog> history;
  std::size_t best_epoch = 0;
  Real best_val_accuracy = 1;
  double seconds = 0;
};

/// Alternating training: per batch one discriminator ascent step, then one
/// generator descent step on L_adv + alpha L_theta + beta L_eta + lambda L_GAN.
/// Keeps the epoch with the lowest validation accuracy under attack.
/// Throws NumericError if the generator loss becomes non-finite.
SdpAdvResult train_sdpadv(const Classifier& f, const Dataset& train, const Dataset& val,
                          const GeneratorConfig& config, const LossWeights& weights,
                          const SdpAdvTrainOptions& options,
                          const std::function<void(const EpochLog&)>& on_epoch = {});

/// Accuracy of f on generate(x).x_a.
Real accuracy_under_attack(const Classifier& f, const Generator& g, const GeneratorConfig& config,
                           const Tensor& images, std::span<const int> labels);

void write_training_log(const std::filesystem::path& path, std::span<const EpochLog> history);

SDPADV_NAMESPACE_END
