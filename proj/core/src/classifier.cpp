#include "sdpadv/classifier.hpp"

#include <algorithm>
#include <chrono>

#include "sdpadv/attacks.hpp"
#include "sdpadv/checkpoint.hpp"
#include "sdpadv/error.hpp"
#include "sdpadv/ops.hpp"

SDPADV_NAMESPACE_BEGIN

std::string_view to_string(Architecture arch) {
  return arch == Architecture::ModelA ? "model-a" : "model-b";
}

Architecture parse_architecture(std::string_view tag) {
  if (tag == "model-a") return Architecture::ModelA;
  if (tag == "model-b") return Architecture::ModelB;
  throw ConfigError("unknown classifier architecture '" + std::string(tag) + "'");
}

namespace {

struct ConvLayer {
  std::size_t filters, kernel, stride;
};

constexpr ConvLayer kModelAConvs[] = {{64, 8, 2}, {128, 6, 2}, {128, 5, 1}};
constexpr std::size_t kModelBHidden = 200;

}  // namespace

Classifier::Classifier(ClassifierSpec spec, std::uint64_t seed) : spec_(spec) {
  std::mt19937_64 rng(seed);
  const std::size_t K = spec_.num_classes;
  auto output_layer = [&](std::size_t fan_in) {
    params_.add("out.weight", spec_.zero_init_output ? Tensor({fan_in, K})
                                                     : he_uniform({fan_in, K}, fan_in, rng));
    params_.add("out.bias", Tensor({K}));
  };
  if (spec_.arch == Architecture::ModelA) {
    std::size_t channels = 1, h = spec_.height, w = spec_.width;
    int i = 1;
    for (const auto& layer : kModelAConvs) {
      const std::size_t fan_in = channels * layer.kernel * layer.kernel;
      const std::string name = "conv" + std::to_string(i++);
      params_.add(name + ".weight",
                  he_uniform({layer.filters, channels, layer.kernel, layer.kernel}, fan_in, rng));
      params_.add(name + ".bias", Tensor({layer.filters}));
      channels = layer.filters;
      h = (h + layer.stride - 1) / layer.stride;
      w = (w + layer.stride - 1) / layer.stride;
    }
    output_layer(channels * h * w);
  } else {
    const std::size_t in = spec_.height * spec_.width;
    params_.add("fc1.weight", he_uniform({in, kModelBHidden}, in, rng));
    params_.add("fc1.bias", Tensor({kModelBHidden}));
    params_.add("fc2.weight", he_uniform({kModelBHidden, kModelBHidden}, kModelBHidden, rng));
    params_.add("fc2.bias", Tensor({kModelBHidden}));
    output_layer(kModelBHidden);
  }
}

template <class Bind>
Var Classifier::run(Var x, Bind bind) const {
  const Shape& s = x.shape();
  if (s.size() != 4 || s[1] != 1 || s[2] != spec_.height || s[3] != spec_.width)
    throw DimensionError("classifier expects x[B,1," + std::to_string(spec_.height) + "," +
                         std::to_string(spec_.width) + "], got " + to_string(s));
  Var h = x;
  if (spec_.arch == Architecture::ModelA) {
    int i = 1;
    for (const auto& layer : kModelAConvs) {
      const std::string name = "conv" + std::to_string(i++);
      h = relu(conv2d(h, bind(name + ".weight"), bind(name + ".bias"), int(layer.stride)));
    }
    h = flatten(h);
  } else {
    h = flatten(h);
    h = relu(dense(h, bind("fc1.weight"), bind("fc1.bias")));
    h = relu(dense(h, bind("fc2.weight"), bind("fc2.bias")));
  }
  return dense(h, bind("out.weight"), bind("out.bias"));
}

Var Classifier::forward(Var x) const {
  Tape& tape = x.tape();
  return run(x, [&](const std::string& name) { return tape.frozen(params_.get(name)); });
}

Var Classifier::forward_trainable(Var x) {
  Tape& tape = x.tape();
  return run(x, [&](const std::string& name) { return tape.parameter(params_.get(name)); });
}

Tensor Classifier::logits(const Tensor& x) const {
  if (x.rank() != 4) throw DimensionError("classifier expects x[B,1,H,W], got " + to_string(x.shape()));
  std::vector<Tensor> parts;
  for (std::size_t begin = 0; begin < x.dim(0); begin += kInferenceChunk) {
    Tape tape;
    const std::size_t end = std::min(x.dim(0), begin + kInferenceChunk);
    parts.push_back(forward(tape.constant(x.slice_rows(begin, end))).value());
  }
  return concat_rows(parts);
}

std::vector<int> Classifier::predict(const Tensor& x) const { return argmax_rows(logits(x)); }

Tensor Classifier::input_gradient(const Tensor& x, std::span<const int> labels) const {
  Tape tape;
  Var in = tape.variable(x);
  tape.backward(softmax_cross_entropy(forward(in), labels, Reduction::Sum));
  return in.grad();
}

std::vector<int> argmax_rows(const Tensor& logits) {
  if (logits.rank() != 2) throw DimensionError("argmax_rows expects [B,K], got " + to_string(logits.shape()));
  const std::size_t B = logits.dim(0), K = logits.dim(1);
  std::vector<int> out(B);
  for (std::size_t i = 0; i < B; ++i) {
    const Real* row = logits.ptr() + i * K;
    out[i] = int(std::max_element(row, row + K) - row);
  }
  return out;
}

Real accuracy(std::span<const int> predictions, std::span<const int> labels) {
  if (predictions.size() != labels.size())
    throw DimensionError("accuracy: " + std::to_string(predictions.size()) + " predictions vs " +
                         std::to_string(labels.size()) + " labels");
  if (labels.empty()) return 0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hits += predictions[i] == labels[i];
  return Real(double(hits) / double(labels.size()));
}

Real evaluate_accuracy(const Classifier& f, const Tensor& images, std::span<const int> labels) {
  return accuracy(f.predict(images), labels);
}

namespace {

Classifier train_impl(const ClassifierSpec& spec, const Dataset& train, const Dataset& val,
                      Real epsilon, bool adversarial, const ClassifierTrainOptions& options) {
  if (adversarial && !(epsilon >= 0 && epsilon <= 1))
    throw ConfigError("adversarial training epsilon must lie in [0,1]");
  const auto start = std::chrono::steady_clock::now();
  Classifier f(spec, options.seed);
  f.params().set_learning_rate(options.learning_rate);
  ParamSet best = f.params();
  Real best_acc = -1;
  BatchSampler sampler(train.size(), options.batch_size, options.seed ^ 0x9e3779b97f4a7c15ULL);

  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    double loss_sum = 0;
    std::size_t steps = 0;
    for (const auto& idx : sampler.next_epoch()) {
      const Batch batch = gather(train, idx);
      Tensor adv;
      if (adversarial) adv = fgsm(f, batch.images, batch.labels, epsilon);
      f.params().zero_grad();
      Tape tape;
      Var loss = softmax_cross_entropy(f.forward_trainable(tape.constant(batch.images)), batch.labels);
      if (adversarial) {
        Var adv_loss = softmax_cross_entropy(f.forward_trainable(tape.constant(adv)), batch.labels);
        loss = scale(add(loss, adv_loss), Real(0.5));
      }
      tape.backward(loss);
      f.params().adam_step();
      loss_sum += loss.value()[0];
      ++steps;
    }
    const Real val_acc = val.size() ? evaluate_accuracy(f, val.images, val.labels) : Real(0);
    if (val_acc > best_acc) {
      best_acc = val_acc;
      best = f.params();
    }
    if (options.on_epoch) options.on_epoch(epoch, Real(loss_sum / double(std::max<std::size_t>(steps, 1))), val_acc);
  }
  f.params().copy_values_from(best);
  f.meta.epochs = options.epochs;
  f.meta.seed = options.seed;
  f.meta.defended = adversarial;
  f.meta.epsilon = adversarial ? epsilon : Real(0);
  f.meta.validation_accuracy = best_acc;
  f.meta.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return f;
}

}  // namespace

Classifier train_classifier(const ClassifierSpec& spec, const Dataset& train, const Dataset& val,
                            const ClassifierTrainOptions& options) {
  return train_impl(spec, train, val, 0, false, options);
}

Classifier train_adversarial(const ClassifierSpec& spec, const Dataset& train, const Dataset& val,
                             Real epsilon, const ClassifierTrainOptions& options) {
  return train_impl(spec, train, val, epsilon, true, options);
}

void save_classifier(const std::filesystem::path& path, const Classifier& f) {
  save_params(path, f.params());
  write_meta(path, {{"arch", std::string(to_string(f.spec().arch))},
                    {"epochs", std::to_string(f.meta.epochs)},
                    {"seed", std::to_string(f.meta.seed)},
                    {"defended", f.meta.defended ? "1" : "0"},
                    {"epsilon", std::to_string(f.meta.epsilon)},
                    {"seconds", std::to_string(f.meta.seconds)},
                    {"validation_accuracy", std::to_string(f.meta.validation_accuracy)}});
}

Classifier load_classifier(const std::filesystem::path& path, const ClassifierSpec& spec) {
  Classifier f(spec, 0);
  const Meta meta = read_meta(path);
  if (auto it = meta.find("arch"); it != meta.end() && it->second != to_string(spec.arch))
    throw LoadError(path.string() + " holds a " + it->second + " classifier, expected " +
                    std::string(to_string(spec.arch)));
  load_params(path, f.params());
  auto get = [&](const char* key) -> std::string {
    auto it = meta.find(key);
    return it == meta.end() ? std::string("0") : it->second;
  };
  f.meta.epochs = std::stoul(get("epochs"));
  f.meta.seed = std::stoull(get("seed"));
  f.meta.defended = get("defended") == "1";
  f.meta.epsilon = Real(std::stod(get("epsilon")));
  f.meta.seconds = std::stod(get("seconds"));
  f.meta.validation_accuracy = Real(std::stod(get("validation_accuracy")));
  return f;
}

SDPADV_NAMESPACE_END
