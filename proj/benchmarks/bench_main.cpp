#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "sdpadv/attacks.hpp"
#include "sdpadv/classifier.hpp"
#include "sdpadv/generator.hpp"
#include "sdpadv/ops.hpp"
#include "sdpadv/spatial.hpp"

using namespace sdpadv;

namespace {

Tensor random_images(std::size_t n, std::uint64_t seed = 3) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0, 1);
  Tensor x({n, 1, 28, 28});
  for (auto& v : x.data()) v = u(rng);
  return x;
}

std::vector<int> labels(std::size_t n) {
  std::vector<int> y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = int(i % 10);
  return y;
}

void BM_Conv2dForwardBackward(benchmark::State& state) {
  const std::size_t batch = state.range(0);
  const Tensor x = random_images(batch);
  Tensor k({64, 1, 8, 8}, Real(0.01));
  Tensor b({64});
  for (auto _ : state) {
    Tape tape;
    Var y = conv2d(tape.variable(x), tape.variable(k), tape.variable(b), 2);
    tape.backward(sum(y));
    const Tensor g = tape.grad(y);
    benchmark::DoNotOptimize(g.ptr());
  }
  state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(BM_Conv2dForwardBackward)->Arg(32)->Arg(128)->Unit(benchmark::kMillisecond);

void BM_DenseForwardBackward(benchmark::State& state) {
  const std::size_t batch = state.range(0);
  Tensor x({batch, 784}, Real(0.5));
  Tensor w({784, 128}, Real(0.01));
  Tensor b({128});
  for (auto _ : state) {
    Tape tape;
    Var y = dense(tape.variable(x), tape.variable(w), tape.variable(b));
    tape.backward(sum(y));
    const Tensor g = tape.grad(y);
    benchmark::DoNotOptimize(g.ptr());
  }
  state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(BM_DenseForwardBackward)->Arg(128)->Unit(benchmark::kMicrosecond);

void BM_Transform(benchmark::State& state) {
  const std::size_t batch = state.range(0);
  const Tensor x = random_images(batch);
  Tensor theta = identity_thetas(batch);
  for (std::size_t i = 0; i < batch; ++i) theta[i * 6 + 2] = Real(0.1);
  for (auto _ : state) {
    Tape tape;
    benchmark::DoNotOptimize(transform(tape.constant(theta), tape.constant(x)).value().ptr());
  }
  state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(BM_Transform)->Arg(100)->Unit(benchmark::kMicrosecond);

void BM_GeneratorInference(benchmark::State& state) {
  const Generator g({}, 1);
  const Tensor x = random_images(100);
  const GeneratorConfig config;
  for (auto _ : state) {
    Generator::Result r = g.generate(x, config);
    benchmark::DoNotOptimize(r.x_a.ptr());
  }
  state.SetItemsProcessed(state.iterations() * 100);
}
BENCHMARK(BM_GeneratorInference)->Unit(benchmark::kMillisecond);

void BM_Fgsm(benchmark::State& state) {
  const Classifier f({Architecture(state.range(0))}, 1);
  const Tensor x = random_images(100);
  const auto y = labels(100);
  for (auto _ : state) {
    Tensor adv = fgsm(f, x, y, Real(0.3));
    benchmark::DoNotOptimize(adv.ptr());
  }
  state.SetItemsProcessed(state.iterations() * 100);
}
BENCHMARK(BM_Fgsm)->Arg(int(Architecture::ModelA))->Arg(int(Architecture::ModelB))->Unit(benchmark::kMillisecond);

}  // namespace
int main(int argc, char** argv) {
  tune_allocator();
  benchmark::Initialize(&argc, argv);
  if (benchmark::ReportUnrecognizedArguments(argc, argv)) return 1;
  benchmark::RunSpecifiedBenchmarks();
  benchmark::Shutdown();
  return 0;
}
