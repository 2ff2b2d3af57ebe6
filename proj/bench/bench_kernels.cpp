// Serial references against their OpenMP counterparts, plus radix-2 against
// the direct DFT. Thread count follows OED_THREADS.

#include <benchmark/benchmark.h>

#include <vector>

#include "oedflow/fft.hpp"
#include "oedflow/flow.hpp"
#include "oedflow/kernels.hpp"
#include "oedflow/linalg.hpp"
#include "oedflow/oracle.hpp"

using namespace oedflow;

namespace {

struct Batch {
  FlowParams params;
  std::vector<RealGrid> xs, cs;
};

Batch make_batch(std::size_t n, std::size_t count) {
  Rng rng(1);
  Batch b;
  b.params = flow_init({n, 2, 4, 64, 2.0}, rng);
  for (auto& v : b.params.values) v += 0.05 * rng.normal();
  for (std::size_t i = 0; i < count; ++i) {
    b.xs.push_back(gauss_sample(rng, {n}));
    b.cs.push_back(gauss_sample(rng, {2 * n}));
  }
  return b;
}

template <auto Kernel>
void BM_BatchGradient(benchmark::State& state) {
  const auto b = make_batch(static_cast<std::size_t>(state.range(0)), 16);
  BatchGradient out;
  for (auto _ : state) {
    Kernel(b.params, b.xs, b.cs, BackwardMode::Invertible, out);
    benchmark::DoNotOptimize(out.params.data());
  }
}
BENCHMARK(BM_BatchGradient<batch_gradient_serial>)->Arg(64)->Arg(256)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_BatchGradient<batch_gradient_omp>)->Arg(64)->Arg(256)->Unit(benchmark::kMillisecond);

template <auto Kernel>
void BM_InverseBatch(benchmark::State& state) {
  const auto b = make_batch(static_cast<std::size_t>(state.range(0)), 64);
  for (auto _ : state) benchmark::DoNotOptimize(Kernel(b.params, b.xs, b.cs.front().data));
}
BENCHMARK(BM_InverseBatch<inverse_batch_serial>)->Arg(64)->Arg(256)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_InverseBatch<inverse_batch_omp>)->Arg(64)->Arg(256)->Unit(benchmark::kMillisecond);

template <auto Search>
void BM_BruteForce(benchmark::State& state) {
  const std::size_t n = 16;
  Rng rng(2);
  Matrix g(n, n);
  for (std::size_t i = 0; i < n * n; ++i) g.data()[i] = rng.normal();
  const auto model = LinearGaussianModel::make(g * g.transpose() + Matrix::Identity(n, n), real_fourier_basis(n), 0.5);
  for (auto _ : state) benchmark::DoNotOptimize(Search(model, static_cast<std::size_t>(state.range(0))));
}
BENCHMARK(BM_BruteForce<brute_force_best_mask_serial>)->Arg(4)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_BruteForce<brute_force_best_mask_omp>)->Arg(4)->Unit(benchmark::kMillisecond);

std::vector<std::complex<double>> signal(std::size_t n) {
  Rng rng(3);
  std::vector<std::complex<double>> a(n);
  for (auto& v : a) v = {rng.normal(), rng.normal()};
  return a;
}

void BM_Radix2(benchmark::State& state) {
  auto a = signal(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    fft_radix2(a, -1);
    benchmark::DoNotOptimize(a.data());
  }
}
BENCHMARK(BM_Radix2)->Arg(32)->Arg(256)->Arg(1024);

void BM_DirectDft(benchmark::State& state) {
  const auto a = signal(static_cast<std::size_t>(state.range(0)));
  std::vector<std::complex<double>> out(a.size());
  for (auto _ : state) {
    dft_direct(a, out, -1);
    benchmark::DoNotOptimize(out.data());
  }
}
BENCHMARK(BM_DirectDft)->Arg(32)->Arg(256)->Arg(1024);

}  // namespace

int main(int argc, char** argv) {
  apply_thread_limit();
  benchmark::Initialize(&argc, argv);
  benchmark::RunSpecifiedBenchmarks();
  benchmark::Shutdown();
  return 0;
}
