// OpenMP kernels against their serial references on the layer shapes the
// desk network runs. The thread count is the benchmark argument.

#include <benchmark/benchmark.h>
#include <omp.h>

#include <random>

#include "msrpb/conv.hpp"
#include "msrpb/pipeline.hpp"

using namespace msrpb;

namespace {

struct Case {
  std::size_t in_ch, out_ch, t, h, w;
  Extent3 size, stride, pad;
};

// Unrolled layer (1 -> 1, 5x5x5), head conv (8 -> 8, 3x3x3), back-projection
// down-step (8 -> 8, 1x6x6 stride 2).
const Case kCases[] = {
    {1, 1, 8, 32, 32, {5, 5, 5}, {1, 1, 1}, {2, 2, 2}},
    {8, 8, 1, 16, 16, {3, 3, 3}, {1, 1, 1}, {1, 1, 1}},
    {8, 8, 1, 32, 32, {1, 6, 6}, {1, 2, 2}, {0, 2, 2}},
};

Tensor random(const std::vector<std::size_t> &shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n;
  Tensor t(shape);
  for (double &v : t.values())
    v = n(rng);
  return t;
}

std::vector<std::size_t> out_shape(const Case &c) {
  auto o = [](std::size_t n, std::size_t k, std::size_t s, std::size_t p) { return (n + 2 * p - k) / s + 1; };
  return {c.out_ch, o(c.t, c.size.t, c.stride.t, c.pad.t), o(c.h, c.size.h, c.stride.h, c.pad.h),
          o(c.w, c.size.w, c.stride.w, c.pad.w)};
}

struct Operands {
  Tensor x, w, y;
  std::vector<std::size_t> in_shape, y_shape;
};

Operands operands(const Case &c) {
  Operands o;
  o.in_shape = {c.in_ch, c.t, c.h, c.w};
  o.y_shape = out_shape(c);
  o.x = random(o.in_shape, 1);
  o.w = random({c.out_ch, c.in_ch, c.size.t, c.size.h, c.size.w}, 2);
  o.y = random(o.y_shape, 3);
  return o;
}

void set_threads(benchmark::State &state) { omp_set_num_threads(static_cast<int>(state.range(1))); }

void BM_Correlate(benchmark::State &state) {
  const Case &c = kCases[state.range(0)];
  const Operands o = operands(c);
  set_threads(state);
  for (auto _ : state)
    benchmark::DoNotOptimize(kernels::correlate(o.x, o.w, c.stride, c.pad, o.y_shape));
}

void BM_CorrelateReference(benchmark::State &state) {
  const Case &c = kCases[state.range(0)];
  const Operands o = operands(c);
  for (auto _ : state)
    benchmark::DoNotOptimize(reference::correlate(o.x, o.w, c.stride, c.pad, o.y_shape));
}

void BM_Scatter(benchmark::State &state) {
  const Case &c = kCases[state.range(0)];
  const Operands o = operands(c);
  set_threads(state);
  for (auto _ : state)
    benchmark::DoNotOptimize(kernels::scatter(o.y, o.w, c.stride, c.pad, o.in_shape));
}

void BM_ScatterReference(benchmark::State &state) {
  const Case &c = kCases[state.range(0)];
  const Operands o = operands(c);
  for (auto _ : state)
    benchmark::DoNotOptimize(reference::scatter(o.y, o.w, c.stride, c.pad, o.in_shape));
}

void BM_WeightGrad(benchmark::State &state) {
  const Case &c = kCases[state.range(0)];
  const Operands o = operands(c);
  set_threads(state);
  for (auto _ : state)
    benchmark::DoNotOptimize(kernels::weight_grad(o.x, o.y, c.stride, c.pad, c.size));
}

void BM_WeightGradReference(benchmark::State &state) {
  const Case &c = kCases[state.range(0)];
  const Operands o = operands(c);
  for (auto _ : state)
    benchmark::DoNotOptimize(reference::weight_grad(o.x, o.y, c.stride, c.pad, c.size));
}

void BM_NetworkForward(benchmark::State &state) {
  const auto profile = pipeline::profile("desk");
  const auto net = pipeline::init_network(profile.network);
  const Tensor patch = random({1, profile.patch.patch_t, profile.patch.patch_h, profile.patch.patch_w}, 4);
  set_threads(state);
  for (auto _ : state)
    benchmark::DoNotOptimize(pipeline::forward(patch, net));
}

void kernel_args(benchmark::internal::Benchmark *b) {
  const int max_threads = omp_get_num_procs();
  for (int c = 0; c < 3; ++c)
    for (int t = 1; t <= max_threads; t *= 2)
      b->Args({c, t});
  b->ArgNames({"case", "threads"})->Unit(benchmark::kMicrosecond);
}

void reference_args(benchmark::internal::Benchmark *b) {
  b->DenseRange(0, 2)->ArgName("case")->Unit(benchmark::kMicrosecond);
}

} // namespace

BENCHMARK(BM_Correlate)->Apply(kernel_args);
BENCHMARK(BM_CorrelateReference)->Apply(reference_args);
BENCHMARK(BM_Scatter)->Apply(kernel_args);
BENCHMARK(BM_ScatterReference)->Apply(reference_args);
BENCHMARK(BM_WeightGrad)->Apply(kernel_args);
BENCHMARK(BM_WeightGradReference)->Apply(reference_args);
BENCHMARK(BM_NetworkForward)->Apply([](benchmark::internal::Benchmark *b) {
  for (int t = 1; t <= omp_get_num_procs(); t *= 2)
    b->Args({0, t});
  b->ArgNames({"", "threads"})->Unit(benchmark::kMillisecond);
});

BENCHMARK_MAIN();
