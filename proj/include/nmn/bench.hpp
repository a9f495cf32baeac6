#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nmn/linalg.hpp"

namespace nmn {

/// Per-neuron forward FLOPs for a width-d input.
struct NeuronFlops {
  double linear_relu, linear_gelu, yat_naive, yat_optimized;
};
NeuronFlops neuron_flops(Index d);

struct BenchPoint {
  Index batch = 0, units = 0, dim = 0;
  double yat_seconds = 0;   // yat_batch forward, best of repeats
  double gelu_seconds = 0;  // gemm + GeLU forward, best of repeats
  double time_ratio = 0;
  double yat_flops = 0, linear_relu_flops = 0, linear_gelu_flops = 0;
  std::size_t yat_transient_bytes = 0, gelu_transient_bytes = 0;
};

BenchPoint bench_point(Index batch, Index units, Index dim, int repeats, std::uint64_t seed);

struct ScalingResult {
  std::string axis;  // "B", "n" or "d"
  std::vector<BenchPoint> points;
  double growth = 0;  // time(4×) / time(1×)
  bool linear = false;  // growth / 4 within [0.7, 1.3]
};

/// Sweeps one axis over {x, 2x, 4x} from the base shape.
ScalingResult scaling_sweep(char axis, Index batch, Index units, Index dim, int repeats, std::uint64_t seed);

}  // namespace nmn
