#include <benchmark/benchmark.h>

#include <random>

#include "fednilm/config.hpp"
#include "fednilm/model.hpp"

using namespace fednilm;

namespace {

BasicBatch<float> make_batch(const ArchitectureSpec& spec, std::size_t rows,
                             std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> gauss(0.0f, 1.0f);
  BasicBatch<float> batch;
  batch.rows = rows;
  batch.width = spec.window_len;
  batch.inputs.resize(rows * static_cast<std::size_t>(spec.window_len));
  for (auto& v : batch.inputs) v = gauss(rng);
  batch.targets.resize(rows);
  for (auto& v : batch.targets) v = gauss(rng);
  return batch;
}

ArchitectureSpec desk_spec() {
  return preset("synthetic-small").resolve_architecture();
}

}  // namespace

static void BM_forward_desk(benchmark::State& state) {
  const auto spec = desk_spec();
  const auto params = init_params<float>(spec, 1);
  const auto batch = make_batch(spec, static_cast<std::size_t>(state.range(0)), 2);
  for (auto _ : state) {
    auto preds = forward<float>(spec, params, batch.inputs, batch.rows);
    benchmark::DoNotOptimize(preds);
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_forward_desk)->Arg(64)->Arg(512);

static void BM_backward_desk(benchmark::State& state) {
  const auto spec = desk_spec();
  const auto params = init_params<float>(spec, 1);
  const auto batch = make_batch(spec, static_cast<std::size_t>(state.range(0)), 2);
  for (auto _ : state) {
    auto grad = backward<float>(spec, params, batch);
    benchmark::DoNotOptimize(grad);
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_backward_desk)->Arg(64)->Arg(512);

static void BM_forward_full_seq2point(benchmark::State& state) {
  // the canonical 599-wide stack: ~29M parameters
  const auto spec = default_architecture(599);
  const auto params = init_params<float>(spec, 1);
  const auto batch = make_batch(spec, 4, 3);
  for (auto _ : state) {
    auto preds = forward<float>(spec, params, batch.inputs, batch.rows);
    benchmark::DoNotOptimize(preds);
  }
  state.SetItemsProcessed(state.iterations() * 4);
}
BENCHMARK(BM_forward_full_seq2point)->Unit(benchmark::kMillisecond);
