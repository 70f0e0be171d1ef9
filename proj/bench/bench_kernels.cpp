// Serial reference kernels against their OpenMP counterparts.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "poseforge/kernels.hpp"

namespace {

namespace k = poseforge::kernels;

std::vector<double> random_buffer(std::size_t n, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

template <bool Parallel>
void BM_Gemm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  auto a = random_buffer(n * n, 1), b = random_buffer(n * n, 2);
  std::vector<double> c(n * n);
  for (auto _ : state) {
    std::fill(c.begin(), c.end(), 0.0);
    if constexpr (Parallel) k::parallel::gemm_nn(a, b, c, n, n, n);
    else k::serial::gemm_nn(a, b, c, n, n, n);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(2 * n * n * n));
}

// Complex-sized attention: rows = cols = atoms, 8 heads of width 8.
template <bool Parallel>
void BM_PairLogits(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const std::size_t h = 8, w = 8;
  auto q = random_buffer(n * h * w, 3), kk = random_buffer(n * h * w, 4);
  std::vector<double> out(n * n * h);
  for (auto _ : state) {
    if constexpr (Parallel) k::parallel::pair_logits(q, kk, out, n, n, h, w, 0.35);
    else k::serial::pair_logits(q, kk, out, n, n, h, w, 0.35);
    benchmark::DoNotOptimize(out.data());
  }
}

template <bool Parallel>
void BM_Attend(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const std::size_t h = 8, w = 8;
  auto p = random_buffer(n * n * h, 5), v = random_buffer(n * h * w, 6);
  std::vector<double> out(n * h * w);
  for (auto _ : state) {
    std::fill(out.begin(), out.end(), 0.0);
    if constexpr (Parallel) k::parallel::attend(p, v, out, n, n, h, w);
    else k::serial::attend(p, v, out, n, n, h, w);
    benchmark::DoNotOptimize(out.data());
  }
}

template <bool Parallel>
void BM_Softmax(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  auto x = random_buffer(n * n * 8, 7);
  std::vector<double> y(x.size());
  for (auto _ : state) {
    if constexpr (Parallel) k::parallel::softmax(x, y, n, n, 8);
    else k::serial::softmax(x, y, n, n, 8);
    benchmark::DoNotOptimize(y.data());
  }
}

template <bool Parallel>
void BM_LayerNorm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const std::size_t width = 64;
  auto x = random_buffer(n * width, 8);
  std::vector<double> xhat(x.size()), inv(n);
  for (auto _ : state) {
    if constexpr (Parallel) k::parallel::layer_norm(x, xhat, inv, n, width, 1e-5);
    else k::serial::layer_norm(x, xhat, inv, n, width, 1e-5);
    benchmark::DoNotOptimize(xhat.data());
  }
}

BENCHMARK(BM_Gemm<false>)->Name("gemm/serial")->Arg(64)->Arg(256);
BENCHMARK(BM_Gemm<true>)->Name("gemm/parallel")->Arg(64)->Arg(256);
BENCHMARK(BM_PairLogits<false>)->Name("pair_logits/serial")->Arg(48)->Arg(200);
BENCHMARK(BM_PairLogits<true>)->Name("pair_logits/parallel")->Arg(48)->Arg(200);
BENCHMARK(BM_Attend<false>)->Name("attend/serial")->Arg(48)->Arg(200);
BENCHMARK(BM_Attend<true>)->Name("attend/parallel")->Arg(48)->Arg(200);
BENCHMARK(BM_Softmax<false>)->Name("softmax/serial")->Arg(48)->Arg(200);
BENCHMARK(BM_Softmax<true>)->Name("softmax/parallel")->Arg(48)->Arg(200);
BENCHMARK(BM_LayerNorm<false>)->Name("layer_norm/serial")->Arg(48)->Arg(1000);
BENCHMARK(BM_LayerNorm<true>)->Name("layer_norm/parallel")->Arg(48)->Arg(1000);

}  // namespace

BENCHMARK_MAIN();
