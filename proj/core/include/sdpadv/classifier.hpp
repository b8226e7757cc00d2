#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "sdpadv/autodiff.hpp"
#include "sdpadv/data.hpp"

SDPADV_NAMESPACE_BEGIN

enum class Architecture {
  ModelA,  // Conv(64,8x8,2)-ReLU-Conv(128,6x6,2)-ReLU-Conv(128,5x5,1)-ReLU-FC(10)
  ModelB,  // FC(200)-ReLU-FC(200)-ReLU-FC(10)
};

std::string_view to_string(Architecture arch);
/// Accepts "model-a" / "model-b"; throws ConfigError otherwise.
Architecture parse_architecture(std::string_view tag);

struct ClassifierSpec {
  Architecture arch = Architecture::ModelA;
  std::size_t num_classes = 10;
  std::size_t height = 28;
  std::size_t width = 28;
  bool zero_init_output = false;
};

struct TrainingMeta {
  std::size_t epochs = 0;
  std::uint64_t seed = 0;
  bool defended = false;
  Real epsilon = 0;
  double seconds = 0;
  Real validation_accuracy = 0;
};

/// Target classifier f. Inputs are not clamped to [0,1].
class Classifier {
 public:
  explicit Classifier(ClassifierSpec spec = {}, std::uint64_t seed = 0);

  const ClassifierSpec& spec() const noexcept { return spec_; }
  ParamSet& params() noexcept { return params_; }
  const ParamSet& params() const noexcept { return params_; }

  /// Logits [B,K] recorded on the input's tape with frozen parameters.
  Var forward(Var x) const;
  /// Logits with parameters bound for training.
  Var forward_trainable(Var x);

  /// Batched inference.
  Tensor logits(const Tensor& x) const;
  std::vector<int> predict(const Tensor& x) const;

  /// Gradient of the summed cross-entropy with respect to the input.
  Tensor input_gradient(const Tensor& x, std::span<const int> labels) const;

  TrainingMeta meta;

 private:
  template <class Bind>
  Var run(Var x, Bind bind) const;

  ClassifierSpec spec_;
  ParamSet params_;
};

inline constexpr std::size_t kInferenceChunk = 256;

std::vector<int> argmax_rows(const Tensor& logits);

Real accuracy(std::span<const int> predictions, std::span<const int> labels);
Real evaluate_accuracy(const Classifier& f, const Tensor& images, std::span<const int> labels);

struct ClassifierTrainOptions {
  std::size_t epochs = 20;
  std::size_t batch_size = 128;
  Real learning_rate = Real(1e-3);
  std::uint64_t seed = 0;
  /// Called after each epoch with (epoch, mean train loss, validation accuracy).
  std::function<void(std::size_t, Real, Real)> on_epoch;
};

/// Adam + cross-entropy; returns the epoch with the best validation accuracy.
Classifier train_classifier(const ClassifierSpec& spec, const Dataset& train, const Dataset& val,
                            const ClassifierTrainOptions& options);

/// Adversarial training: every batch is half clean, half FGSM(epsilon)
/// examples crafted against the current parameters.
Classifier train_adversarial(const ClassifierSpec& spec, const Dataset& train, const Dataset& val,
                             Real epsilon, const ClassifierTrainOptions& options);

void save_classifier(const std::filesystem::path& path, const Classifier& f);
/// Throws LoadError if the checkpoint does not hold `spec`'s architecture.
Classifier load_classifier(const std::filesystem::path& path, const ClassifierSpec& spec);

SDPADV_NAMESPACE_END
