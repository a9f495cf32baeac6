#pragma once

#include <cmath>
#include <optional>
#include <string>

#include "nmn/kernel.hpp"
#include "nmn/layers.hpp"

namespace nmn {

/// Output multiplier s = (n / ln(1+n))^α for a layer with n units.
inline double adaptive_scale(Index units, double alpha) {
  const double n = static_cast<double>(units);
  return std::pow(n / std::log1p(n), alpha);
}

/// d s / d α = s · ln(n / ln(1+n)).
inline double adaptive_scale_dalpha(Index units, double alpha) {
  const double n = static_cast<double>(units);
  return adaptive_scale(units, alpha) * std::log(n / std::log1p(n));
}

/// Dense layer of biased ⵟ-units: Y_ij = s · (⟨w_j, x_i⟩ + b_j)² / (‖w_j − x_i‖² + ε).
///
/// Outputs are per unit. The scale s is recomputed from the current α on every
/// forward pass.
template <typename Scalar>
struct NmnDense {
  Param<Scalar> weight;  // n×d prototypes
  Param<Scalar> bias;    // 1×n inner biases
  Param<Scalar> alpha;   // 1×1 scale exponent
  KernelConfig cfg;
  bool has_bias = true;

  struct Cache {
    Matrix<Scalar> x;
    Matrix<Scalar> raw;  // kernel values before scaling
    BatchCache<Scalar> kernel;
    double scale = 1.0;
  };

  NmnDense() = default;
  NmnDense(const std::string& name, Index in, Index units, bool with_bias, KernelConfig kcfg, Rng& rng)
      : weight(name + ".weight", init_gaussian<Scalar>(rng, units, in, 1.0 / std::sqrt(double(in)))),
        alpha(name + ".alpha", Matrix<Scalar>::Ones(1, 1)),
        cfg(kcfg),
        has_bias(with_bias) {
    if (has_bias) bias = Param<Scalar>(name + ".bias", Matrix<Scalar>::Zero(1, units));
  }

  Index units() const { return weight.value.rows(); }
  Index in_features() const { return weight.value.cols(); }
  double scale() const { return adaptive_scale(units(), static_cast<double>(alpha.value(0, 0))); }

  std::optional<Vector<Scalar>> bias_vector() const {
    if (!has_bias) return std::nullopt;
    return Vector<Scalar>(bias.value.row(0).transpose());
  }

  Matrix<Scalar> forward(const Matrix<Scalar>& x, Cache& cache) const {
    if (x.cols() != in_features()) {
      throw ShapeError(weight.name + ": expected " + std::to_string(in_features()) + " input columns, got " +
                       std::to_string(x.cols()));
    }
    auto r = yat_batch(x, weight.value, bias_vector(), cfg);
    cache.x = x;
    cache.scale = scale();
    cache.raw = std::move(r.value);
    cache.kernel = std::move(r.cache);
    return cache.raw * static_cast<Scalar>(cache.scale);
  }

  Matrix<Scalar> forward(const Matrix<Scalar>& x) const {
    Cache c;
    return forward(x, c);
  }

  /// Accumulates gradients for prototypes, biases and α; returns dL/dx.
  Matrix<Scalar> backward(const Cache& cache, const Matrix<Scalar>& upstream) {
    if (upstream.rows() != cache.raw.rows() || upstream.cols() != cache.raw.cols()) {
      throw ShapeError(weight.name + ": upstream " + shape_str(upstream.rows(), upstream.cols()) +
                       " does not match cached output " + shape_str(cache.raw.rows(), cache.raw.cols()));
    }
    const double a = static_cast<double>(alpha.value(0, 0));
    const double ds = adaptive_scale_dalpha(units(), a);
    alpha.grad(0, 0) += static_cast<Scalar>(ds * static_cast<double>(upstream.cwiseProduct(cache.raw).sum()));
    const Matrix<Scalar> g = upstream * static_cast<Scalar>(cache.scale);
    auto grads = yat_batch_backward(g, cache.kernel, cache.x, weight.value);
    weight.grad += grads.grad_w;
    if (has_bias) bias.grad += grads.grad_bias.transpose();
    return std::move(grads.grad_x);
  }

  void parameters(ParamList<Scalar>& out) {
    out.push_back(&weight);
    if (has_bias) out.push_back(&bias);
    out.push_back(&alpha);
  }
};

}  // namespace nmn
