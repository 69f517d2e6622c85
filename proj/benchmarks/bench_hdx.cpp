#include <benchmark/benchmark.h>

#include <random>

#include "hdx/evalharness.hpp"
#include "hdx/explain.hpp"

namespace {

using namespace hdx;

const MLPClassifier& model() {
  static const MLPClassifier m = [] {
    TrainConfig cfg;
    cfg.epochs = 20;
    return train(gen_two_moons(2000, 0.1, 0), cfg).model;
  }();
  return m;
}

void BM_SteinKernel(benchmark::State& state) {
  const BaseKernel kernels[] = {BaseKernel::linear(), BaseKernel::rbf(0.2), BaseKernel::imq()};
  const BaseKernel& k = kernels[state.range(0)];
  const SteinPoint a = make_stein_point(model(), Vector::Constant(2, 0.3), 0, Variant::kRaw);
  const SteinPoint b = make_stein_point(model(), Vector::Constant(2, -0.4), 1, Variant::kRaw);
  for (auto _ : state) benchmark::DoNotOptimize(stein_kernel(k, a, b));
  state.SetLabel(k.describe());
}
BENCHMARK(BM_SteinKernel)->DenseRange(0, 2);

void BM_ExplainQuery(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Dataset d = gen_two_moons(n, 0.1, 1);
  const ScoreCache cache = build_cache(model(), d, Variant::kRaw);
  const ExplainerConfig ec{Variant::kRaw, BaseKernel::linear(), 3};
  std::mt19937_64 rng(0);
  std::normal_distribution<double> g;
  for (auto _ : state) {
    const Vector x = (Vector(2) << g(rng), g(rng)).finished();
    benchmark::DoNotOptimize(explain(model(), cache, x, ec));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}
BENCHMARK(BM_ExplainQuery)->Arg(1000)->Arg(10000)->Unit(benchmark::kMillisecond);

void BM_BuildCache(benchmark::State& state) {
  const Dataset d = gen_two_moons(static_cast<std::size_t>(state.range(0)), 0.1, 2);
  const auto v = static_cast<Variant>(state.range(1));
  for (auto _ : state) benchmark::DoNotOptimize(build_cache(model(), d, v));
}
BENCHMARK(BM_BuildCache)->Args({10000, 0})->Args({10000, 1})->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
