#include <benchmark/benchmark.h>

#include <random>

#include "fednilm/fedavg.hpp"
#include "fednilm/hash.hpp"
#include "fednilm/netproto.hpp"

using namespace fednilm;

namespace {

ParameterVector random_params(std::size_t count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> gauss(0.0f, 1.0f);
  ParameterVector p;
  p.spec_hash = rng();
  p.values.resize(count);
  for (auto& v : p.values) v = gauss(rng);
  return p;
}

}  // namespace

static void BM_encode_global(benchmark::State& state) {
  const auto params = random_params(static_cast<std::size_t>(state.range(0)), 7);
  const netproto::Global msg{12, 1e-3, params};
  for (auto _ : state) {
    auto frame = netproto::encode_frame(msg);
    benchmark::DoNotOptimize(frame);
  }
  state.SetBytesProcessed(state.iterations() *
                          static_cast<std::int64_t>(params.count() * 4));
}
BENCHMARK(BM_encode_global)->Arg(1024)->Arg(65536);

static void BM_decode_global(benchmark::State& state) {
  const auto params = random_params(static_cast<std::size_t>(state.range(0)), 7);
  const auto frame = netproto::encode_frame(netproto::Global{12, 1e-3, params});
  for (auto _ : state) {
    auto res = netproto::decode_frame(frame);
    benchmark::DoNotOptimize(res);
  }
  state.SetBytesProcessed(state.iterations() *
                          static_cast<std::int64_t>(frame.size()));
}
BENCHMARK(BM_decode_global)->Arg(1024)->Arg(65536);

static void BM_crc32(benchmark::State& state) {
  std::mt19937_64 rng(9);
  std::vector<std::uint8_t> data(static_cast<std::size_t>(state.range(0)));
  for (auto& b : data) b = static_cast<std::uint8_t>(rng());
  for (auto _ : state) {
    benchmark::DoNotOptimize(crc32(data));
  }
  state.SetBytesProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_crc32)->Arg(4096)->Arg(1 << 20);

static void BM_aggregate(benchmark::State& state) {
  const int k = static_cast<int>(state.range(0));
  std::vector<ClientUpdate> updates;
  for (int c = 0; c < k; ++c) {
    updates.push_back({c, random_params(65536, static_cast<std::uint64_t>(c)), 1000});
    updates.back().params.spec_hash = 1;
  }
  for (auto _ : state) {
    auto global = aggregate<float>(std::span<const ClientUpdate>(updates));
    benchmark::DoNotOptimize(global);
  }
  state.SetItemsProcessed(state.iterations() * k);
}
BENCHMARK(BM_aggregate)->Arg(4)->Arg(32);

BENCHMARK_MAIN();
