#include "sdpadv/gan.hpp"

#include <chrono>
#include <cmath>
#include <fstream>

#include "sdpadv/error.hpp"
#include "sdpadv/ops.hpp"

SDPADV_NAMESPACE_BEGIN

Discriminator::Discriminator(std::size_t inputs, std::uint64_t seed) {
  std::mt19937_64 rng(seed * 2 + 3);
  params_.add("fc1.weight", he_uniform({inputs, 64}, inputs, rng));
  params_.add("fc1.bias", Tensor({64}));
  params_.add("fc2.weight", he_uniform({64, 32}, 64, rng));
  params_.add("fc2.bias", Tensor({32}));
  params_.add("fc3.weight", he_uniform({32, 2}, 32, rng));
  params_.add("fc3.bias", Tensor({2}));
}

Var Discriminator::real_probability(Var x, bool trainable) {
  Tape& tape = x.tape();
  auto p = [&](const char* name) {
    return trainable ? tape.parameter(params_.get(name)) : tape.frozen(params_.get(name));
  };
  Var h = relu(dense(flatten(x), p("fc1.weight"), p("fc1.bias")));
  h = relu(dense(h, p("fc2.weight"), p("fc2.bias")));
  return select_column(softmax(dense(h, p("fc3.weight"), p("fc3.bias"))), 0);
}

Var loss_adv(const Classifier& f, Var x_a, std::span<const int> labels) {
  return scale(softmax_cross_entropy(f.forward(x_a), labels), Real(-1));
}

Var loss_adv_nonsaturating(const Classifier& f, Var x_a, std::span<const int> labels) {
  Var p = softmax(f.forward(x_a));
  const std::size_t B = p.shape()[0], K = p.shape()[1];
  Tensor others({B, K}, Real(1));
  for (std::size_t i = 0; i < B; ++i) others[i * K + std::size_t(labels[i])] = 0;
  // 1 - p_y as the sum of the other classes: no cancellation when p_y ~ 1.
  Tape& t = p.tape();
  Var rest = dense(mul(p, t.constant(std::move(others))), t.constant(Tensor({K, 1}, Real(1))),
                   t.constant(Tensor({1})));
  return scale(mean(log(rest, kLogFloor)), Real(-1));
}

Var loss_theta(Var theta) {
  Var id = theta.tape().constant(identity_thetas(theta.shape()[0]));
  return mean(row_norm(sub(theta, id)));
}

Var loss_eta(Var eta, Real epsilon) { return mean(relu(add_scalar(row_norm(eta), -epsilon))); }

Var discriminator_objective(Var d_real, Var d_fake) {
  Var real_term = mean(log(d_real, kLogFloor));
  Var fake_term = mean(log(add_scalar(scale(d_fake, Real(-1)), Real(1)), kLogFloor));
  return add(real_term, fake_term);
}

Var generator_gan_loss(Var d_fake, GanGeneratorLoss kind) {
  if (kind == GanGeneratorLoss::NonSaturating) return scale(mean(log(d_fake, kLogFloor)), Real(-1));
  return mean(log(add_scalar(scale(d_fake, Real(-1)), Real(1)), kLogFloor));
}

Real LossWeights::alpha(std::size_t epoch) const {
  const Real a = alpha0 * std::pow(decay, Real(epoch / period));
  return std::max(floor, a);
}

void LossWeights::validate() const {
  if (!(alpha0 >= 0 && floor >= 0 && beta >= 0 && lambda >= 0))
    throw ConfigError("loss weights must be non-negative");
  if (!(decay > 0 && decay <= 1)) throw ConfigError("alpha decay must lie in (0,1]");
  if (period == 0) throw ConfigError("alpha decay period must be positive");
}

Real alpha_schedule(std::size_t epoch) { return LossWeights{}.alpha(epoch); }

Real accuracy_under_attack(const Classifier& f, const Generator& g, const GeneratorConfig& config,
                           const Tensor& images, std::span<const int> labels) {
  return evaluate_accuracy(f, g.generate(images, config).x_a, labels);
}

SdpAdvResult train_sdpadv(const Classifier& f, const Dataset& train, const Dataset& val,
                          const GeneratorConfig& config, const LossWeights& weights,
                          const SdpAdvTrainOptions& options,
                          const std::function<void(const EpochLog&)>& on_epoch) {
  config.validate();
  weights.validate();
  if (options.batch_size == 0) throw ConfigError("batch size must be positive");
  const auto start = std::chrono::steady_clock::now();

  const std::size_t H = train.images.dim(2), W = train.images.dim(3);
  SdpAdvResult result{Generator({H, W}, options.seed), Discriminator(H * W, options.seed), {}, 0, 2, 0};
  Generator& g = result.generator;
  Discriminator& d = result.discriminator;
  g.set_learning_rate(options.generator_lr);
  d.params().set_learning_rate(options.discriminator_lr);
  Generator best = g;

  const Dataset scored = options.validation_limit ? val.head(options.validation_limit) : val;
  BatchSampler sampler(train.size(), options.batch_size, options.seed ^ 0x5bd1e995ULL);

  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    EpochLog log{};
    log.epoch = epoch;
    log.alpha = weights.alpha(epoch);
    std::size_t steps = 0;
    for (const auto& idx : sampler.next_epoch()) {
      const Batch batch = gather(train, idx);
      Tape tape;
      const Generator::Vars out = g.forward(tape.constant(batch.images), config, true);

      // Discriminator ascent on detached samples.
      {
        Tape dt;
        d.params().zero_grad();
        Var objective = discriminator_objective(d.real_probability(dt.constant(out.x_t.value()), true),
                                                d.real_probability(dt.constant(out.x_a.value()), true));
        dt.backward(scale(objective, Real(-1)));
        d.params().adam_step();
        log.d_loss += objective.value()[0];
      }

      // Generator descent; x_T reaches D only through x_A.
      Var l_adv = options.adv_loss == AdvLoss::CrossEntropy ? loss_adv(f, out.x_a, batch.labels)
                                                            : loss_adv_nonsaturating(f, out.x_a, batch.labels);
      Var l_theta = loss_theta(out.theta);
      Var l_eta = loss_eta(out.eta, config.epsilon);
      Var l_gan = generator_gan_loss(d.real_probability(out.x_a, false), options.gan_loss);
      Var total = add(add(l_adv, scale(l_theta, log.alpha)),
                      add(scale(l_eta, weights.beta), scale(l_gan, weights.lambda)));
      if (!std::isfinite(total.value()[0]))
        throw NumericError("generator loss diverged at epoch " + std::to_string(epoch));
      g.zero_grad();
      tape.backward(total);
      g.adam_step();

      log.l_adv += l_adv.value()[0];
      log.l_theta += l_theta.value()[0];
      log.l_eta += l_eta.value()[0];
      log.g_loss += total.value()[0];
      ++steps;
    }
    const Real n = Real(std::max<std::size_t>(steps, 1));
    log.l_adv /= n;
    log.l_theta /= n;
    log.l_eta /= n;
    log.d_loss /= n;
    log.g_loss /= n;
    log.val_accuracy = scored.size() ? accuracy_under_attack(f, g, config, scored.images, scored.labels) : Real(0);
    result.history.push_back(log);
    if (log.val_accuracy < result.best_val_accuracy) {
      result.best_val_accuracy = log.val_accuracy;
      result.best_epoch = epoch;
      best = g;
    }
    if (on_epoch) on_epoch(log);
    if (log.val_accuracy <= options.stop_accuracy) break;
  }
  g = best;
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

void write_training_log(const std::filesystem::path& path, std::span<const EpochLog> history) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "epoch,L_adv,L_theta,L_eta,d_loss,g_loss,alpha,val_acc\n";
  out.precision(9);
  for (const auto& e : history)
    out << e.epoch << ',' << e.l_adv << ',' << e.l_theta << ',' << e.l_eta << ',' << e.d_loss << ','
        << e.g_loss << ',' << e.alpha << ',' << e.val_accuracy << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

SDPADV_NAMESPACE_END
