#include "sdpadv/generator.hpp"

#include <algorithm>
#include <vector>

#include "sdpadv/checkpoint.hpp"
#include "sdpadv/classifier.hpp"
#include "sdpadv/error.hpp"
#include "sdpadv/ops.hpp"

SDPADV_NAMESPACE_BEGIN

void GeneratorConfig::validate() const {
  if (!(gamma >= 0)) throw ConfigError("gamma must be non-negative");
  if (!(epsilon >= 0)) throw ConfigError("epsilon must be non-negative");
}

Generator::Generator(GeneratorShape shape, std::uint64_t seed) : shape_(shape) {
  const std::size_t in = shape_.height * shape_.width;
  // Independent streams so h_p's initialization does not depend on h_sd.
  std::mt19937_64 loc_rng(seed * 2 + 1);
  std::mt19937_64 pert_rng(seed * 2 + 2);

  loc_.add("fc1.weight", he_uniform({in, shape_.loc_hidden}, in, loc_rng));
  loc_.add("fc1.bias", Tensor({shape_.loc_hidden}));
  // Zero weights and identity bias: training starts from theta_I.
  loc_.add("fc2.weight", Tensor({shape_.loc_hidden, 6}));
  loc_.add("fc2.bias", identity_thetas(1).reshaped({6}));

  pert_.add("fc1.weight", he_uniform({in, shape_.pert_hidden}, in, pert_rng));
  pert_.add("fc1.bias", Tensor({shape_.pert_hidden}));
  pert_.add("fc2.weight", he_uniform({shape_.pert_hidden, shape_.pert_hidden}, shape_.pert_hidden, pert_rng));
  pert_.add("fc2.bias", Tensor({shape_.pert_hidden}));
  pert_.add("fc3.weight", he_uniform({shape_.pert_hidden, in}, shape_.pert_hidden, pert_rng));
  pert_.add("fc3.bias", Tensor({in}));
}

namespace {

template <class Params>
Var bind(Tape& tape, Params& params, const char* name, bool trainable) {
  if constexpr (std::is_const_v<Params>) {
    return tape.frozen(params.get(name));
  } else {
    return trainable ? tape.parameter(params.get(name)) : tape.frozen(params.get(name));
  }
}

}  // namespace

Var Generator::localise(Var x, Real gamma, ThetaProjection projection, bool trainable) {
  if (!(gamma >= 0)) throw ConfigError("gamma must be non-negative");
  Tape& tape = x.tape();
  const std::size_t B = x.shape()[0];
  Var h = relu(dense(flatten(x), bind(tape, loc_, "fc1.weight", trainable),
                     bind(tape, loc_, "fc1.bias", trainable)));
  Var raw = dense(h, bind(tape, loc_, "fc2.weight", trainable), bind(tape, loc_, "fc2.bias", trainable));
  const Tensor identity = identity_thetas(B);
  if (projection == ThetaProjection::Elementwise) {
    Tensor bound = identity;
    for (auto& v : bound.data()) v += gamma;
    return minimum(raw, bound);
  }
  Var id = tape.constant(identity);
  return add(id, radial_project(sub(raw, id), gamma));
}

Var clamp_perturbation(Var raw, Real epsilon) { return clamp(raw, -epsilon, epsilon); }

Var Generator::perturb(Var x_t, Real epsilon, bool trainable) {
  if (!(epsilon >= 0)) throw ConfigError("epsilon must be non-negative");
  Tape& tape = x_t.tape();
  Var h = flatten(x_t);
  h = relu(dense(h, bind(tape, pert_, "fc1.weight", trainable), bind(tape, pert_, "fc1.bias", trainable)));
  h = relu(dense(h, bind(tape, pert_, "fc2.weight", trainable), bind(tape, pert_, "fc2.bias", trainable)));
  Var raw = dense(h, bind(tape, pert_, "fc3.weight", trainable), bind(tape, pert_, "fc3.bias", trainable));
  Var eta = clamp_perturbation(scale(tanh(raw), epsilon), epsilon);
  return reshape(eta, x_t.shape());
}

Generator::Vars Generator::forward(Var x, const GeneratorConfig& config, bool trainable) {
  config.validate();
  const Shape& s = x.shape();
  if (s.size() != 4 || s[1] != 1 || s[2] != shape_.height || s[3] != shape_.width)
    throw DimensionError("generator expects x[B,1," + std::to_string(shape_.height) + "," +
                         std::to_string(shape_.width) + "], got " + to_string(s));
  Vars out;
  if (config.spatial) {
    out.theta = localise(x, config.gamma, config.projection, trainable);
    out.x_t = transform(out.theta, x);
  } else {
    out.theta = x.tape().constant(identity_thetas(s[0]));
    out.x_t = x;
  }
  out.eta = perturb(out.x_t, config.epsilon, trainable);
  Var sum = add(out.x_t, out.eta);
  out.x_a = config.clamp_output ? clamp(sum, 0, 1) : sum;
  return out;
}

Generator::Result Generator::generate(const Tensor& x, const GeneratorConfig& config) const {
  if (x.rank() != 4) throw DimensionError("generate expects x[B,1,H,W], got " + to_string(x.shape()));
  auto& self = const_cast<Generator&>(*this);  // frozen forward never mutates parameters
  std::vector<Tensor> theta, x_t, eta, x_a;
  for (std::size_t begin = 0; begin < x.dim(0); begin += kInferenceChunk) {
    const std::size_t end = std::min(x.dim(0), begin + kInferenceChunk);
    Tape tape;
    const Vars v = self.forward(tape.constant(x.slice_rows(begin, end)), config, false);
    theta.push_back(v.theta.value());
    x_t.push_back(v.x_t.value());
    eta.push_back(v.eta.value());
    x_a.push_back(v.x_a.value());
  }
  return {concat_rows(theta), concat_rows(x_t), concat_rows(eta), concat_rows(x_a)};
}

void Generator::zero_grad() {
  loc_.zero_grad();
  pert_.zero_grad();
}

void Generator::set_learning_rate(Real lr) {
  loc_.set_learning_rate(lr);
  pert_.set_learning_rate(lr);
}

void Generator::adam_step() {
  loc_.adam_step();
  pert_.adam_step();
}

void save_generator(const std::filesystem::path& path, const Generator& g) {
  auto records = to_records(g.localisation(), "loc");
  auto pert = to_records(g.perturbation(), "pert");
  records.insert(records.end(), pert.begin(), pert.end());
  write_tensors(path, records);
}

Generator load_generator(const std::filesystem::path& path, GeneratorShape shape) {
  Generator g(shape, 0);
  const auto records = read_tensors(path);
  if (records.size() != g.localisation().size() + g.perturbation().size())
    throw LoadError("generator checkpoint holds " + std::to_string(records.size()) + " records");
  assign_records(g.localisation(), records, "loc");
  assign_records(g.perturbation(), records, "pert");
  return g;
}

SDPADV_NAMESPACE_END
