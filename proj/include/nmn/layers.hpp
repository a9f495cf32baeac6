#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "nmn/linalg.hpp"

namespace nmn {

/// A trainable tensor and its accumulated gradient. Vectors are stored as
/// 1×n rows so the optimizer sees one uniform container type.
template <typename Scalar>
struct Param {
  std::string name;
  Matrix<Scalar> value;
  Matrix<Scalar> grad;

  Param() = default;
  Param(std::string n, Matrix<Scalar> v)
      : name(std::move(n)), value(std::move(v)), grad(Matrix<Scalar>::Zero(value.rows(), value.cols())) {}

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
  Index size() const { return value.size(); }
};

template <typename Scalar>
using ParamList = std::vector<Param<Scalar>*>;

template <typename Scalar>
void zero_grads(const ParamList<Scalar>& params) {
  for (auto* p : params) p->zero_grad();
}

template <typename Scalar>
Matrix<Scalar> init_gaussian(Rng& rng, Index rows, Index cols, double sigma) {
  return gaussian_fill<Scalar>(rng, rows, cols, sigma);
}

/// y = x Wᵀ (+ b), W stored out×in.
template <typename Scalar>
struct Linear {
  Param<Scalar> weight;
  Param<Scalar> bias;  // 1×out, empty when unbiased
  bool has_bias = false;

  Linear() = default;
  Linear(const std::string& name, Index in, Index out, bool with_bias, Rng& rng)
      : weight(name + ".weight", init_gaussian<Scalar>(rng, out, in, 1.0 / std::sqrt(double(in)))),
        has_bias(with_bias) {
    if (has_bias) bias = Param<Scalar>(name + ".bias", Matrix<Scalar>::Zero(1, out));
  }

  Index in_features() const { return weight.value.cols(); }
  Index out_features() const { return weight.value.rows(); }

  Matrix<Scalar> forward(const Matrix<Scalar>& x) const {
    if (x.cols() != in_features()) {
      throw ShapeError(weight.name + ": expected " + std::to_string(in_features()) + " input columns, got " +
                       std::to_string(x.cols()));
    }
    Matrix<Scalar> y = gemm(x, weight.value);
    if (has_bias) y.rowwise() += bias.value.row(0);
    return y;
  }

  /// Accumulates parameter gradients, returns dL/dx.
  Matrix<Scalar> backward(const Matrix<Scalar>& x, const Matrix<Scalar>& upstream) {
    weight.grad.noalias() += upstream.transpose() * x;
    if (has_bias) bias.grad += upstream.colwise().sum();
    Matrix<Scalar> dx(x.rows(), x.cols());
    dx.noalias() = upstream * weight.value;
    return dx;
  }

  void parameters(ParamList<Scalar>& out) {
    out.push_back(&weight);
    if (has_bias) out.push_back(&bias);
  }
};

/// Row-wise layer normalization with learnable gain and shift.
template <typename Scalar>
struct LayerNorm {
  Param<Scalar> gain;
  Param<Scalar> shift;
  double eps = 1e-5;

  struct Cache {
    Matrix<Scalar> xhat;
    Vector<Scalar> inv_std;
  };

  LayerNorm() = default;
  LayerNorm(const std::string& name, Index dim)
      : gain(name + ".gain", Matrix<Scalar>::Ones(1, dim)), shift(name + ".shift", Matrix<Scalar>::Zero(1, dim)) {}

  Matrix<Scalar> forward(const Matrix<Scalar>& x, Cache& cache) const {
    const Index d = x.cols();
    if (d != gain.value.cols()) throw ShapeError(gain.name + ": width mismatch");
    cache.xhat.resize(x.rows(), d);
    cache.inv_std.resize(x.rows());
    for (Index i = 0; i < x.rows(); ++i) {
      const Scalar mean = x.row(i).mean();
      const Scalar var = (x.row(i).array() - mean).square().mean();
      const Scalar inv = Scalar(1) / std::sqrt(var + static_cast<Scalar>(eps));
      cache.inv_std[i] = inv;
      cache.xhat.row(i) = (x.row(i).array() - mean) * inv;
    }
    Matrix<Scalar> y = cache.xhat.array().rowwise() * gain.value.row(0).array();
    y.rowwise() += shift.value.row(0);
    return y;
  }

  Matrix<Scalar> backward(const Cache& cache, const Matrix<Scalar>& upstream) {
    const Index d = upstream.cols();
    gain.grad += upstream.cwiseProduct(cache.xhat).colwise().sum();
    shift.grad += upstream.colwise().sum();
    const Matrix<Scalar> dxhat = upstream.array().rowwise() * gain.value.row(0).array();
    Matrix<Scalar> dx(upstream.rows(), d);
    for (Index i = 0; i < upstream.rows(); ++i) {
      const Scalar m1 = dxhat.row(i).mean();
      const Scalar m2 = dxhat.row(i).dot(cache.xhat.row(i)) / Scalar(d);
      dx.row(i) = cache.inv_std[i] * (dxhat.row(i).array() - m1 - cache.xhat.row(i).array() * m2);
    }
    return dx;
  }

  void parameters(ParamList<Scalar>& out) {
    out.push_back(&gain);
    out.push_back(&shift);
  }
};

/// Exact GeLU, x·Φ(x) with Φ the standard normal CDF.
template <typename Scalar>
Matrix<Scalar> gelu(const Matrix<Scalar>& x) {
  return x.unaryExpr([](Scalar v) {
    return Scalar(0.5) * v * (Scalar(1) + std::erf(v / std::sqrt(Scalar(2))));
  });
}

template <typename Scalar>
Matrix<Scalar> gelu_backward(const Matrix<Scalar>& x, const Matrix<Scalar>& upstream) {
  const Scalar inv_sqrt_2pi = Scalar(0.3989422804014327);
  const Matrix<Scalar> dydx = x.unaryExpr([&](Scalar v) {
    return Scalar(0.5) * (Scalar(1) + std::erf(v / std::sqrt(Scalar(2)))) +
           v * inv_sqrt_2pi * std::exp(Scalar(-0.5) * v * v);
  });
  return upstream.cwiseProduct(dydx);
}

/// Lookup table V×d.
template <typename Scalar>
struct Embedding {
  Param<Scalar> table;

  Embedding() = default;
  Embedding(const std::string& name, Index count, Index dim, double sigma, Rng& rng)
      : table(name, init_gaussian<Scalar>(rng, count, dim, sigma)) {}

  Matrix<Scalar> forward(const std::vector<int>& ids) const {
    Matrix<Scalar> out(static_cast<Index>(ids.size()), table.value.cols());
    for (std::size_t t = 0; t < ids.size(); ++t) {
      if (ids[t] < 0 || ids[t] >= table.value.rows()) {
        throw std::out_of_range(table.name + ": id " + std::to_string(ids[t]) + " outside [0, " +
                                std::to_string(table.value.rows()) + ")");
      }
      out.row(static_cast<Index>(t)) = table.value.row(ids[t]);
    }
    return out;
  }

  void backward(const std::vector<int>& ids, const Matrix<Scalar>& upstream) {
    for (std::size_t t = 0; t < ids.size(); ++t) table.grad.row(ids[t]) += upstream.row(static_cast<Index>(t));
  }

  void parameters(ParamList<Scalar>& out) { out.push_back(&table); }
};

}  // namespace nmn
