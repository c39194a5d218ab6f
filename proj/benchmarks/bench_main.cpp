#include <benchmark/benchmark.h>

#include "eblab/estimators.hpp"
#include "eblab/lowerbound.hpp"
#include "eblab/regret.hpp"
#include "eblab/specfun.hpp"

using namespace eblab;

static void BM_HermitePsi(benchmark::State& state) {
  const int k = static_cast<int>(state.range(0));
  double x = -6.0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(hermite_psi(k, 1.5, x));
    x = x > 6.0 ? -6.0 : x + 0.01;
  }
}
BENCHMARK(BM_HermitePsi)->Arg(4)->Arg(40)->Arg(200);

static void BM_BesselScaled(benchmark::State& state) {
  const double x = static_cast<double>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(bessel_i_scaled(2.5, x));
}
BENCHMARK(BM_BesselScaled)->Arg(1)->Arg(25)->Arg(1000);

static void BM_GaussianGram(benchmark::State& state) {
  const int kmax = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(gaussian_orthogonality(1.0, kmax).max_k_deviation);
}
BENCHMARK(BM_GaussianGram)->Arg(6)->Arg(12)->Unit(benchmark::kMillisecond);

static void BM_PoissonFamily(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(poisson_family(32.0, 64.0, 8).gamma);
}
BENCHMARK(BM_PoissonFamily)->Unit(benchmark::kMillisecond);

static void BM_RobbinsTotal(benchmark::State& state) {
  const auto s = sample(MixtureModel::poisson(), Prior::uniform(0.0, 2.0), state.range(0), 7);
  for (auto _ : state) benchmark::DoNotOptimize(robbins_total(s.y));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_RobbinsTotal)->Arg(1000)->Arg(100000);

static void BM_NpmleFit(benchmark::State& state) {
  const auto s = sample(MixtureModel::poisson(), Prior::uniform(0.0, 2.0), state.range(0), 11);
  for (auto _ : state) benchmark::DoNotOptimize(npmle_fit(MixtureModel::poisson(), s.y).iterations);
}
BENCHMARK(BM_NpmleFit)->Arg(1000)->Arg(10000)->Unit(benchmark::kMillisecond);

static void BM_RobbinsCertificate(benchmark::State& state) {
  const Prior g = Prior::uniform(0.0, 2.0);
  for (auto _ : state) benchmark::DoNotOptimize(robbins_certificate(g, state.range(0)).total);
}
BENCHMARK(BM_RobbinsCertificate)->Arg(1000)->Arg(100000)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
