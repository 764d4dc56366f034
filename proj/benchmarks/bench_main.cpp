#include <random>

#include <benchmark/benchmark.h>

#include "ulearn/landscape.hpp"
#include "ulearn/model.hpp"
#include "ulearn/sal.hpp"
#include "ulearn/unlearnability.hpp"

using namespace ulearn;

namespace {

Batch random_batch(std::size_t n, std::size_t d, int classes, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> c(0, classes - 1);
  Tensor x = Tensor::matrix(n, d);
  for (double& v : x.data()) v = u(rng);
  std::vector<int> y(n);
  for (int& v : y) v = c(rng);
  return Batch{x, y};
}

ModelSpec spec_for(std::int64_t hidden) {
  return hidden == 0 ? ModelSpec{12, {}, 10} : ModelSpec{12, {static_cast<std::size_t>(hidden)}, 10};
}

}  // namespace

static void BM_Forward(benchmark::State& state) {
  const Model m = make_model(spec_for(state.range(0)), 1);
  const Batch b = random_batch(512, 12, 10, 2);
  for (auto _ : state) benchmark::DoNotOptimize(loss(m, b));
}
BENCHMARK(BM_Forward)->Arg(0)->Arg(64);

static void BM_Backward(benchmark::State& state) {
  const Model m = make_model(spec_for(state.range(0)), 1);
  const Batch b = random_batch(512, 12, 10, 2);
  for (auto _ : state) benchmark::DoNotOptimize(backward(m, b));
}
BENCHMARK(BM_Backward)->Arg(0)->Arg(64);

static void BM_SalLayer(benchmark::State& state) {
  const Model m = make_model(ModelSpec{12, {}, 10}, 1);
  const Batch b = random_batch(512, 12, 10, 2);
  SalProbeConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(sal_layer(m, 0, b, cfg));
}
BENCHMARK(BM_SalLayer);

static void BM_KMeans2(benchmark::State& state) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> v(static_cast<std::size_t>(state.range(0)));
  for (double& x : v) x = n(rng);
  for (auto _ : state) benchmark::DoNotOptimize(kmeans2_1d(v));
}
BENCHMARK(BM_KMeans2)->Arg(16)->Arg(1024);

static void BM_Pca(benchmark::State& state) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0.0, 1.0);
  Trajectory t{"bench", {}};
  for (std::size_t s = 0; s < 100; ++s) {
    std::vector<double> p(static_cast<std::size_t>(state.range(0)));
    for (double& x : p) x = n(rng);
    t.snapshots.push_back({s, p});
  }
  for (auto _ : state) benchmark::DoNotOptimize(pca_trajectory(t, 4));
}
BENCHMARK(BM_Pca)->Arg(130)->Arg(2000);
BENCHMARK_MAIN();
