// Serial reference kernels against their OpenMP counterparts.

#include <benchmark/benchmark.h>

#include <map>
#include <random>

#include "ttech/gmm.hpp"
#include "ttech/parallel.hpp"
#include "ttech/surfaces.hpp"

using namespace ttech;

namespace {

const surfaces::MorseSlab& slab() {
  static const surfaces::MorseSlab s = surfaces::morse_slab(surfaces::SlabConfig::paper_scale());
  return s;
}

struct Mixture {
  gmm::Dataset x;
  gmm::GmmParams p;
  Mat resp;
  Vec floor;
};

const Mixture& mixture(int n) {
  static std::map<int, Mixture> cache;
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  Mixture m;
  m.x = gmm::gen_synthetic("overlap4", n, 1).data;
  m.p = gmm::gen_synthetic("overlap4", n, 1).truth;
  m.resp = gmm::e_step_serial(m.p, m.x).resp;
  m.floor = gmm::variance_floor(m.x);
  return cache.emplace(n, std::move(m)).first->second;
}

void threads(benchmark::State& state) { parallel::set_threads(static_cast<int>(state.range(0))); }

void BM_slab_energy_serial(benchmark::State& state) {
  const Vec v = slab().cluster.initial_variables();
  for (auto _ : state) benchmark::DoNotOptimize(slab().cluster.energy_serial(v));
}

void BM_slab_energy_parallel(benchmark::State& state) {
  threads(state);
  const Vec v = slab().cluster.initial_variables();
  for (auto _ : state) benchmark::DoNotOptimize(slab().cluster.energy(v));
}

void BM_slab_gradient_serial(benchmark::State& state) {
  const Vec v = slab().cluster.initial_variables();
  for (auto _ : state) benchmark::DoNotOptimize(slab().cluster.gradient_serial(v));
}

void BM_slab_gradient_parallel(benchmark::State& state) {
  threads(state);
  const Vec v = slab().cluster.initial_variables();
  for (auto _ : state) benchmark::DoNotOptimize(slab().cluster.gradient(v));
}

void BM_e_step_serial(benchmark::State& state) {
  const Mixture& m = mixture(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(gmm::e_step_serial(m.p, m.x));
  state.SetItemsProcessed(state.iterations() * m.x.rows());
}

void BM_e_step_parallel(benchmark::State& state) {
  parallel::set_threads(static_cast<int>(state.range(1)));
  const Mixture& m = mixture(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(gmm::e_step(m.p, m.x));
  state.SetItemsProcessed(state.iterations() * m.x.rows());
}

void BM_m_step_serial(benchmark::State& state) {
  const Mixture& m = mixture(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(gmm::m_step_serial(m.resp, m.x, gmm::CovKind::full, m.floor));
  state.SetItemsProcessed(state.iterations() * m.x.rows());
}

void BM_m_step_parallel(benchmark::State& state) {
  parallel::set_threads(static_cast<int>(state.range(1)));
  const Mixture& m = mixture(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(gmm::m_step(m.resp, m.x, gmm::CovKind::full, m.floor));
  state.SetItemsProcessed(state.iterations() * m.x.rows());
}

const std::vector<int64_t> kThreads{1, 2, 4};

}  // namespace

BENCHMARK(BM_slab_energy_serial)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_slab_energy_parallel)->ArgsProduct({kThreads})->UseRealTime()->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_slab_gradient_serial)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_slab_gradient_parallel)->ArgsProduct({kThreads})->UseRealTime()->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_e_step_serial)->Arg(1000)->Arg(100000)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_e_step_parallel)->ArgsProduct({{1000, 100000}, kThreads})->UseRealTime()->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_m_step_serial)->Arg(1000)->Arg(100000)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_m_step_parallel)->ArgsProduct({{1000, 100000}, kThreads})->UseRealTime()->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
