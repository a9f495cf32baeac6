#pragma once

#include <cmath>
#include <limits>

#include "nmn/linalg.hpp"

namespace nmn {

/// Algebraic (non-exponential) squashing for non-negative scores.
struct SquashConfig {
  double n_exp = 1.0;  // sharpness exponent
  double eps = 0.0;    // softermax stability term
};

namespace detail {

inline void check_exponent(double n) {
  if (!(n > 0.0)) throw DomainError("squashing exponent must be positive");
}

}  // namespace detail

/// out_k = x_kⁿ / (ε + Σ x_iⁿ). All-zero input with ε > 0 maps to zeros.
template <typename Derived>
Vector<typename Derived::Scalar> softermax(const Eigen::MatrixBase<Derived>& x, const SquashConfig& cfg) {
  using Scalar = typename Derived::Scalar;
  detail::check_exponent(cfg.n_exp);
  if (cfg.eps < 0.0) throw DomainError("softermax: eps must be non-negative");
  if ((x.array() < Scalar(0)).any()) throw DomainError("softermax: inputs must be non-negative");
  const Vector<Scalar> p = x.array().pow(static_cast<Scalar>(cfg.n_exp));
  const Scalar denom = static_cast<Scalar>(cfg.eps) + p.sum();
  if (denom == Scalar(0)) return Vector<Scalar>::Zero(x.size());
  return p / denom;
}

/// Vector-Jacobian product of softermax: given out = softermax(x) and dL/dout,
/// returns dL/dx.
template <typename Scalar>
Vector<Scalar> softermax_backward(const Vector<Scalar>& x, const Vector<Scalar>& upstream,
                                  const SquashConfig& cfg) {
  const Scalar n = static_cast<Scalar>(cfg.n_exp);
  const Vector<Scalar> p = x.array().pow(n);
  const Scalar z = static_cast<Scalar>(cfg.eps) + p.sum();
  if (z == Scalar(0)) return Vector<Scalar>::Zero(x.size());
  // out_k = p_k / z  =>  dL/dp_j = g_j / z − Σ_k g_k p_k / z²
  const Scalar mix = upstream.dot(p) / (z * z);
  Vector<Scalar> dp = upstream.array() / z - mix;
  Vector<Scalar> dx(x.size());
  for (Index i = 0; i < x.size(); ++i) {
    Scalar dpdx;
    if (x[i] > Scalar(0)) {
      dpdx = n * std::pow(x[i], n - Scalar(1));
    } else {
      dpdx = (n == Scalar(1)) ? Scalar(1) : Scalar(0);
    }
    dx[i] = dp[i] * dpdx;
  }
  return dx;
}

/// σₙ(x) = xⁿ / (1 + xⁿ), maps [0, ∞) to [0, 1).
inline double soft_sigmoid(double x, double n) {
  detail::check_exponent(n);
  if (x < 0.0 || std::isnan(x)) throw DomainError("soft_sigmoid: input must be non-negative");
  const double p = std::pow(x, n);
  if (std::isinf(p)) return 1.0;
  return p / (1.0 + p);
}

/// τₙ(x) = (xⁿ − 1)/(xⁿ + 1), evaluated as 2σₙ(x) − 1.
inline double soft_tanh(double x, double n) {
  if (x < 0.0 || std::isnan(x)) throw DomainError("soft_tanh: input must be non-negative");
  return 2.0 * soft_sigmoid(x, n) - 1.0;
}

}  // namespace nmn
