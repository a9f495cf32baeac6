#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <utility>

#include "nmn/linalg.hpp"

namespace nmn {

enum class EpsMode { fixed, automatic };

/// Policy for the stability constant ε in the denominator.
///
/// In `automatic` mode batched evaluations set ε = d·σ̂², where σ̂² is the mean
/// per-coordinate variance of the input batch; scalar evaluations have no batch
/// statistics and always use `eps`.
struct KernelConfig {
  double eps = 1e-6;
  EpsMode mode = EpsMode::fixed;

  static constexpr double kMinEps = 1e-12;

  template <typename Derived>
  double resolve(const Eigen::MatrixBase<Derived>& x) const {
    if (mode == EpsMode::fixed || x.rows() < 2) return std::max(eps, kMinEps);
    const auto xd = x.template cast<double>();
    const Eigen::RowVectorXd mean = xd.colwise().mean();
    const double var = (xd.rowwise() - mean).array().square().colwise().sum().sum() /
                       static_cast<double>((x.rows() - 1) * x.cols());
    return std::max(static_cast<double>(x.cols()) * var, kMinEps);
  }
};

/// Per-pair intermediates: s = ⟨w,x⟩ (+ b), dsq = ‖w−x‖², denom = dsq + ε.
template <typename Scalar>
struct PairCache {
  Scalar s;
  Scalar dsq;
  Scalar denom;
};

namespace detail {

inline void check_eps(double eps) {
  if (!(eps > 0.0)) throw DomainError("kernel epsilon must be positive");
}

template <typename A, typename B>
void check_same_len(const Eigen::MatrixBase<A>& w, const Eigen::MatrixBase<B>& x, const char* who) {
  if (w.size() != x.size()) {
    throw ShapeError(std::string(who) + ": length mismatch (" + std::to_string(w.size()) + " vs " +
                     std::to_string(x.size()) + ")");
  }
}

}  // namespace detail

template <typename A, typename B>
PairCache<typename A::Scalar> yat_pair(const Eigen::MatrixBase<A>& w, const Eigen::MatrixBase<B>& x,
                                       typename A::Scalar bias, const KernelConfig& cfg) {
  using Scalar = typename A::Scalar;
  detail::check_same_len(w, x, "yat");
  detail::check_eps(cfg.eps);
  const Scalar s = w.dot(x) + bias;
  const Scalar dsq = (w - x).squaredNorm();
  return {s, dsq, dsq + static_cast<Scalar>(cfg.eps)};
}

/// ⟨w,x⟩² / (‖w−x‖² + ε).
template <typename A, typename B>
typename A::Scalar yat(const Eigen::MatrixBase<A>& w, const Eigen::MatrixBase<B>& x,
                       const KernelConfig& cfg = {}) {
  const auto c = yat_pair(w, x, typename A::Scalar(0), cfg);
  return c.s * c.s / c.denom;
}

/// (⟨w,x⟩ + b)² / (‖w−x‖² + ε).
template <typename A, typename B>
typename A::Scalar yat_biased(const Eigen::MatrixBase<A>& w, const Eigen::MatrixBase<B>& x,
                              typename A::Scalar b, const KernelConfig& cfg = {}) {
  const auto c = yat_pair(w, x, b, cfg);
  return c.s * c.s / c.denom;
}

template <typename Scalar>
struct PairGrads {
  Vector<Scalar> grad_w;
  Vector<Scalar> grad_x;
};

/// Analytic gradients of the unbiased kernel:
///   ∇ₓ = (2s/D)(w − s(x−w)/D),   ∇_w = (2s/D)(x − s(w−x)/D).
template <typename A, typename B>
PairGrads<typename A::Scalar> yat_grads(const Eigen::MatrixBase<A>& w, const Eigen::MatrixBase<B>& x,
                                        const KernelConfig& cfg = {}) {
  using Scalar = typename A::Scalar;
  const auto c = yat_pair(w, x, Scalar(0), cfg);
  const Scalar f = Scalar(2) * c.s / c.denom;
  const Scalar g = c.s / c.denom;
  Vector<Scalar> diff = x - w;
  PairGrads<Scalar> out;
  out.grad_x = f * (w - g * diff);
  out.grad_w = f * (x + g * diff);
  return out;
}

/// Forward intermediates of a batched evaluation, kept for the backward pass.
template <typename Scalar>
struct BatchCache {
  Matrix<Scalar> inner;   // S = X Wᵀ
  Matrix<Scalar> numer;   // S + b (equals S when unbiased)
  Matrix<Scalar> denom;   // ‖X_i‖² + ‖W_j‖² − 2S_ij + ε, with the distance clamped at 0
  bool has_bias = false;
  double eps = 0.0;
};

template <typename Scalar>
struct BatchResult {
  Matrix<Scalar> value;
  BatchCache<Scalar> cache;
};

/// Y_ij = (S_ij + b_j)² / (‖X_i‖² + ‖W_j‖² − 2S_ij + ε) with S = X Wᵀ.
///
/// One GEMM plus cached row norms; the squared distance is never formed by
/// subtraction of rows.
template <typename Scalar>
BatchResult<Scalar> yat_batch(const Matrix<Scalar>& x, const Matrix<Scalar>& w,
                              const std::optional<Vector<Scalar>>& bias, const KernelConfig& cfg = {}) {
  if (x.cols() != w.cols()) {
    throw ShapeError("yat_batch: input has " + std::to_string(x.cols()) +
                     " columns but prototypes have " + std::to_string(w.cols()));
  }
  if (bias && bias->size() != w.rows()) {
    throw ShapeError("yat_batch: bias length " + std::to_string(bias->size()) + " != units " +
                     std::to_string(w.rows()));
  }
  detail::check_eps(cfg.eps);
  const double eps = cfg.resolve(x);

  BatchResult<Scalar> r;
  auto& c = r.cache;
  c.eps = eps;
  c.has_bias = bias.has_value();
  c.inner = gemm(x, w);
  const Vector<Scalar> xn = row_sq_norms(x);
  const Vector<Scalar> wn = row_sq_norms(w);
  c.denom.resize(x.rows(), w.rows());
  const Scalar e = static_cast<Scalar>(eps);
  for (Index i = 0; i < x.rows(); ++i) {
    for (Index j = 0; j < w.rows(); ++j) {
      const Scalar dsq = xn[i] + wn[j] - Scalar(2) * c.inner(i, j);
      c.denom(i, j) = std::max(dsq, Scalar(0)) + e;
    }
  }
  if (bias) {
    c.numer = c.inner.rowwise() + bias->transpose();
  } else {
    c.numer = c.inner;
  }
  r.value = c.numer.cwiseProduct(c.numer).cwiseQuotient(c.denom);
  return r;
}

template <typename Scalar>
struct BatchGrads {
  Matrix<Scalar> grad_x;
  Matrix<Scalar> grad_w;
  Vector<Scalar> grad_bias;  // empty when the forward pass had no bias
};

/// Chain rule through Y = T²/D, T = S + b, D = ‖x‖² + ‖w‖² − 2S + ε:
///   ∂Y/∂S = 2T/D + 2T²/D²,  ∂Y/∂‖x‖² = ∂Y/∂‖w‖² = −T²/D²,  ∂Y/∂b = 2T/D.
template <typename Scalar>
BatchGrads<Scalar> yat_batch_backward(const Matrix<Scalar>& upstream, const BatchCache<Scalar>& cache,
                                      const Matrix<Scalar>& x, const Matrix<Scalar>& w) {
  const Index b = x.rows(), n = w.rows();
  if (upstream.rows() != b || upstream.cols() != n || cache.inner.rows() != b || cache.inner.cols() != n ||
      x.cols() != w.cols()) {
    throw ShapeError("yat_batch_backward: upstream " + shape_str(upstream.rows(), upstream.cols()) +
                     " does not match cache " + shape_str(cache.inner.rows(), cache.inner.cols()) +
                     " for inputs " + shape_str(b, x.cols()) + " and prototypes " + shape_str(n, w.cols()));
  }
  const auto t = cache.numer.array();
  const auto d = cache.denom.array();
  const Matrix<Scalar> g_t = (upstream.array() * Scalar(2) * t / d).matrix();
  const Matrix<Scalar> g_d = (-upstream.array() * t * t / (d * d)).matrix();
  // D depends on S with coefficient −2.
  const Matrix<Scalar> g_s = g_t - Scalar(2) * g_d;

  BatchGrads<Scalar> out;
  out.grad_x.noalias() = g_s * w;
  out.grad_x += Scalar(2) * (g_d.rowwise().sum().asDiagonal() * x);
  out.grad_w.noalias() = g_s.transpose() * x;
  out.grad_w += Scalar(2) * (g_d.colwise().sum().transpose().asDiagonal() * w);
  if (cache.has_bias) out.grad_bias = g_t.colwise().sum().transpose();
  return out;
}

}  // namespace nmn
