#include <benchmark/benchmark.h>

#include "fsat/attacks.hpp"
#include "fsat/dataset.hpp"

namespace {

// One attack iteration on the desk architecture: decode, re-encode, head, backward.
// Args: batch, mode (0 augmentation, 1 interpolation, 2 pgd).
void BM_AttackStep(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto mode = static_cast<fsat::AttackMode>(state.range(1));
  fsat::ClassifierSpec spec;
  spec.encoder.widths = {16, 32};
  spec.head_widths = {64};
  spec.num_classes = 8;
  const fsat::Classifier model(spec, 1);
  const fsat::Encoder encoder = model.prefix();
  fsat::DecoderSpec ds;
  ds.encoder = spec.encoder;
  const fsat::Decoder decoder(ds, 2);
  const fsat::Dataset data = fsat::make_synthetic_shapes(n, 3);
  const fsat::Tensor protos = fsat::choose_prototypes(fsat::make_synthetic_shapes(64, 4), 8, 5);

  fsat::AttackConfig cfg;
  cfg.mode = mode;
  cfg.steps = 10;
  cfg.batch = n;
  cfg.measure_distances = false;
  const fsat::AttackModels models{&model, &encoder, &decoder};
  for (auto _ : state) {
    auto out = fsat::run_attack(data.images, data.labels, models, cfg, &protos);
    benchmark::DoNotOptimize(out.data());
  }
  // Seconds per image-step.
  state.counters["s/img-step"] = benchmark::Counter(
      static_cast<double>(n * cfg.steps) * static_cast<double>(state.iterations()),
      benchmark::Counter::kIsRate | benchmark::Counter::kInvert);
}
BENCHMARK(BM_AttackStep)
    ->Args({16, 0})
    ->Args({64, 0})
    ->Args({64, 1})
    ->Args({64, 2})
    ->Unit(benchmark::kMillisecond);

}  // namespace
