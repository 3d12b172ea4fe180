// Field-mode grid scan, four ways: the serial reference likelihood, the
// vectorized kernel on one thread and on all threads, and the lattice scan.
// All four produce the same numbers (see tests/test_likelihood.cpp).

#include <benchmark/benchmark.h>

#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "nvmag/data_io.hpp"
#include "nvmag/geometry.hpp"
#include "nvmag/inference.hpp"
#include "nvmag/likelihood.hpp"

using namespace nvmag;

namespace {

struct Setup {
  ModelParams truth;
  PLMap data;
  NoiseModel noise;
  DifferenceSteps steps;
  FieldGridAxes axes;

  Setup() {
    truth.orientation = orientation_matrix(4.7587, 0.2342, 0.4775);
    truth.field = {1.165e-3, 0.8091e-3, 0.7196};
    const MeasurementGrid grid{MeasurementGrid::linspace(-3e-3, 3e-3, 154), MeasurementGrid::angles(0.0, kTwoPi, 72)};
    data = synthesize_pl_map(truth, grid, noise.sigma_noise, 1);
    steps = default_steps(data.grid);
    // small box so the reference finishes in reasonable time
    const ParamSpace space = snap_field_space(ParamSpace::field(-2e-3, 2e-3, 21, 3e-3, 12, 18), data, steps);
    axes = {space.axes[0].values(), space.axes[1].values(), space.axes[2].values()};
  }

  ExternalFieldParams at(std::size_t n) const {
    const std::size_t np = axes.phi0.size(), nb = axes.b_perp.size();
    return {axes.b_z[n / (nb * np)], axes.b_perp[(n / np) % nb], axes.phi0[n % np]};
  }
};

const Setup& setup() {
  static const Setup s;
  return s;
}

void BM_PointReference(benchmark::State& state) {
  const Setup& s = setup();
  ModelParams p = s.truth;
  for (auto _ : state) benchmark::DoNotOptimize(log_likelihood(p, s.data, s.noise, s.steps));
  state.SetItemsProcessed(state.iterations());
}

void BM_PointKernel(benchmark::State& state) {
  const Setup& s = setup();
  const LikelihoodKernel k(s.data, s.truth.lineshape, s.noise, s.steps);
  for (auto _ : state) benchmark::DoNotOptimize(k(s.truth.orientation, s.truth.field));
  state.SetItemsProcessed(state.iterations());
}

void BM_ScanReference(benchmark::State& state) {
  const Setup& s = setup();
  std::vector<double> out(s.axes.size());
  ModelParams p = s.truth;
  for (auto _ : state) {
    for (std::size_t n = 0; n < out.size(); ++n) {
      p.field = s.at(n);
      out[n] = log_likelihood(p, s.data, s.noise, s.steps);
    }
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(out.size()));
}

void BM_ScanKernel(benchmark::State& state) {
  const Setup& s = setup();
  const LikelihoodKernel k(s.data, s.truth.lineshape, s.noise, s.steps);
  std::vector<double> out(s.axes.size());
  const int threads = static_cast<int>(state.range(0));
  for (auto _ : state) {
#pragma omp parallel for schedule(static) num_threads(threads)
    for (std::size_t n = 0; n < out.size(); ++n) out[n] = k(s.truth.orientation, s.at(n));
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(out.size()));
}

void BM_ScanLattice(benchmark::State& state) {
  const Setup& s = setup();
  for (auto _ : state)
    benchmark::DoNotOptimize(field_lattice_scan(s.data, s.truth.orientation, s.truth.lineshape, s.noise, s.steps, s.axes));
  state.SetItemsProcessed(state.iterations() * static_cast<long>(s.axes.size()));
}

int all_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void thread_args(benchmark::internal::Benchmark* b) {
  b->Arg(1);
  if (all_threads() > 1) b->Arg(all_threads());
}

}  // namespace

BENCHMARK(BM_PointReference)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_PointKernel)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_ScanReference)->Unit(benchmark::kMillisecond)->Iterations(1);
BENCHMARK(BM_ScanKernel)->Apply(thread_args)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_ScanLattice)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
