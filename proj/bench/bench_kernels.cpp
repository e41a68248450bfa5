#include <benchmark/benchmark.h>

#include <vector>

#include "htl/kernels.hpp"
#include "htl/random.hpp"

namespace {

using namespace htl;

std::vector<double> randoms(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal();
  return v;
}

// Square-ish shapes matching the model: sequence length × d_model × d_ff.
template <auto Gemm>
void bench_gemm(benchmark::State& state) {
  const auto m = static_cast<std::size_t>(state.range(0));
  const auto k = static_cast<std::size_t>(state.range(1));
  const auto n = static_cast<std::size_t>(state.range(2));
  const auto a = randoms(m * k, 1), b = randoms(k * n, 2);
  std::vector<double> c(m * n);
  for (auto _ : state) {
    Gemm(a, b, c, kernels::GemmDims{m, k, n}, false);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * 2 * m * k * n));
}

template <auto Softmax>
void bench_softmax(benchmark::State& state) {
  const auto l = static_cast<std::size_t>(state.range(0));
  const auto s = randoms(l * l, 3);
  std::vector<std::uint8_t> allowed(l * l);
  for (std::size_t i = 0; i < l; ++i)
    for (std::size_t j = 0; j <= i; ++j) allowed[i * l + j] = 1;
  std::vector<double> out(l * l);
  for (auto _ : state) {
    Softmax(s, allowed, out, l, l);
    benchmark::DoNotOptimize(out.data());
  }
}

#define GEMM_ARGS Args({64, 64, 64})->Args({165, 64, 256})->Args({165, 256, 64})->Args({256, 128, 512})

BENCHMARK(bench_gemm<kernels::serial::gemm_nn>)->Name("gemm_nn/serial")->GEMM_ARGS;
BENCHMARK(bench_gemm<kernels::parallel::gemm_nn>)->Name("gemm_nn/parallel")->GEMM_ARGS;
BENCHMARK(bench_gemm<kernels::serial::gemm_nt>)->Name("gemm_nt/serial")->GEMM_ARGS;
BENCHMARK(bench_gemm<kernels::parallel::gemm_nt>)->Name("gemm_nt/parallel")->GEMM_ARGS;
BENCHMARK(bench_gemm<kernels::serial::gemm_tn>)->Name("gemm_tn/serial")->GEMM_ARGS;
BENCHMARK(bench_gemm<kernels::parallel::gemm_tn>)->Name("gemm_tn/parallel")->GEMM_ARGS;
BENCHMARK(bench_softmax<kernels::serial::masked_softmax>)->Name("masked_softmax/serial")->Arg(165)->Arg(512);
BENCHMARK(bench_softmax<kernels::parallel::masked_softmax>)->Name("masked_softmax/parallel")->Arg(165)->Arg(512);

}  // namespace

int main(int argc, char** argv) {
  htl::kernels::configure_runtime();
  benchmark::Initialize(&argc, argv);
  if (benchmark::ReportUnrecognizedArguments(argc, argv)) return 1;
  benchmark::RunSpecifiedBenchmarks();
  benchmark::Shutdown();
  return 0;
}
