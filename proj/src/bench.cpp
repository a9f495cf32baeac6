#include "nmn/bench.hpp"

#include <algorithm>
#include <chrono>

#include "nmn/kernel.hpp"
#include "nmn/layers.hpp"

namespace nmn {

NeuronFlops neuron_flops(Index d) {
  const double x = double(d);
  return {2 * x + 1, 2 * x + 15, 5 * x + 1, 4 * x + 4};
}

namespace {

template <typename F>
double best_seconds(int repeats, F&& f) {
  double best = INFINITY;
  for (int r = 0; r < repeats; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    f();
    best = std::min(best, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  return best;
}

// Keeps the optimizer from discarding a benchmarked result.
volatile double g_sink = 0;

}  // namespace

BenchPoint bench_point(Index batch, Index units, Index dim, int repeats, std::uint64_t seed) {
  Rng rng(seed);
  const MatrixXf x = gaussian_fill<float>(rng, batch, dim, 1.0);
  const MatrixXf w = gaussian_fill<float>(rng, units, dim, 1.0 / std::sqrt(double(dim)));
  const KernelConfig cfg{};
  BenchPoint p;
  p.batch = batch;
  p.units = units;
  p.dim = dim;
  p.yat_seconds = best_seconds(repeats, [&] { g_sink = yat_batch<float>(x, w, std::nullopt, cfg).value(0, 0); });
  p.gelu_seconds = best_seconds(repeats, [&] { g_sink = gelu<float>(gemm(x, w))(0, 0); });
  p.time_ratio = p.yat_seconds / p.gelu_seconds;
  const auto f = neuron_flops(dim);
  const double neurons = double(batch) * double(units);
  p.yat_flops = neurons * f.yat_optimized;
  p.linear_relu_flops = neurons * f.linear_relu;
  p.linear_gelu_flops = neurons * f.linear_gelu;
  // yat_batch keeps S, S+b, D and the output (B×n each) plus both norm vectors;
  // gemm + GeLU holds the pre-activation and the output.
  const std::size_t bn = std::size_t(batch) * std::size_t(units);
  p.yat_transient_bytes = sizeof(float) * (4 * bn + std::size_t(batch) + std::size_t(units));
  p.gelu_transient_bytes = sizeof(float) * 2 * bn;
  return p;
}

ScalingResult scaling_sweep(char axis, Index batch, Index units, Index dim, int repeats, std::uint64_t seed) {
  ScalingResult r;
  r.axis = std::string(1, axis);
  for (Index m : {1, 2, 4}) {
    r.points.push_back(bench_point(axis == 'B' ? batch * m : batch, axis == 'n' ? units * m : units,
                                   axis == 'd' ? dim * m : dim, repeats, seed));
  }
  r.growth = r.points.back().yat_seconds / r.points.front().yat_seconds;
  r.linear = r.growth / 4.0 >= 0.7 && r.growth / 4.0 <= 1.3;
  return r;
}

}  // namespace nmn
