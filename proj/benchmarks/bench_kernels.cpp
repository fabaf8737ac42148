#include <benchmark/benchmark.h>

#include "fsat/ops.hpp"
#include "fsat/rng.hpp"

namespace {

fsat::Tensor random_tensor(fsat::Shape shape, std::uint64_t seed) {
  fsat::Rng rng(seed);
  fsat::Tensor t(std::move(shape));
  for (double& v : t.values()) v = rng.uniform(-1.0, 1.0);
  return t;
}

// Args: batch, c_in, c_out, spatial size.
void BM_Conv2dForward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto ci = static_cast<std::size_t>(state.range(1));
  const auto co = static_cast<std::size_t>(state.range(2));
  const auto s = static_cast<std::size_t>(state.range(3));
  fsat::Tensor x = random_tensor({n, ci, s, s}, 1);
  fsat::Tensor w = random_tensor({co, ci, 3, 3}, 2);
  fsat::Tensor b = random_tensor({co}, 3);
  for (auto _ : state) {
    fsat::Tape tape;
    auto y = fsat::ops::conv2d(tape.constant(x), tape.constant(w), tape.constant(b), {1, 1});
    benchmark::DoNotOptimize(y.value().data());
  }
  state.counters["MFLOP"] = 2.0 * static_cast<double>(n * co * ci * 9 * s * s) / 1e6;
  state.counters["GFLOP/s"] = benchmark::Counter(
      2.0 * static_cast<double>(n * co * ci * 9 * s * s) * static_cast<double>(state.iterations()),
      benchmark::Counter::kIsRate);
}
BENCHMARK(BM_Conv2dForward)
    ->Args({64, 3, 16, 32})
    ->Args({64, 16, 32, 16})
    ->Args({64, 3, 32, 32})
    ->Args({64, 32, 64, 16})
    ->Args({64, 64, 64, 8})
    ->Unit(benchmark::kMillisecond);

void BM_Conv2dBackwardInput(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto ci = static_cast<std::size_t>(state.range(1));
  const auto co = static_cast<std::size_t>(state.range(2));
  const auto s = static_cast<std::size_t>(state.range(3));
  fsat::Tensor x = random_tensor({n, ci, s, s}, 1);
  fsat::Tensor w = random_tensor({co, ci, 3, 3}, 2);
  fsat::Tensor b = random_tensor({co}, 3);
  for (auto _ : state) {
    fsat::Tape tape;
    auto xv = tape.leaf(x, true);
    auto y = fsat::ops::conv2d(xv, tape.constant(w), tape.constant(b), {1, 1});
    tape.backward(fsat::ops::sum(y));
    benchmark::DoNotOptimize(tape.grad(xv).data());
  }
}
BENCHMARK(BM_Conv2dBackwardInput)
    ->Args({64, 3, 16, 32})
    ->Args({64, 16, 32, 16})
    ->Args({64, 32, 64, 16})
    ->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
