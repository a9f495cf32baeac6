#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "nmn/kernel.hpp"
#include "nmn/layers.hpp"
#include "nmn/squash.hpp"

namespace nmn {

enum class ScoreKind { yat, scaled_dot };
enum class ScoreNorm { softmax, softermax };

/// Multi-head self-attention with ⵟ-kernel scores (or scaled dot products for
/// the baseline). Projections are stored out×in; head h owns columns
/// [h·d_h, (h+1)·d_h) of Q, K and V.
template <typename Scalar>
struct YatAttention {
  Index heads = 1;
  Linear<Scalar> wq, wk, wv, wo;
  KernelConfig cfg;
  ScoreKind score = ScoreKind::yat;
  ScoreNorm norm = ScoreNorm::softmax;
  SquashConfig squash{1.0, 1e-6};
  bool causal = true;

  struct HeadCache {
    BatchCache<Scalar> kernel;  // yat scores only
    Matrix<Scalar> scores;      // pre-normalization
    Matrix<Scalar> weights;     // row-normalized, zero where masked
  };

  struct Cache {
    Matrix<Scalar> x, q, k, v, concat;
    std::vector<HeadCache> heads;
  };

  YatAttention() = default;
  YatAttention(const std::string& name, Index dim, Index n_heads, KernelConfig kcfg, Rng& rng,
               ScoreKind kind = ScoreKind::yat)
      : heads(n_heads),
        wq(name + ".wq", dim, dim, false, rng),
        wk(name + ".wk", dim, dim, false, rng),
        wv(name + ".wv", dim, dim, false, rng),
        wo(name + ".wo", dim, dim, false, rng),
        cfg(kcfg),
        score(kind) {
    if (n_heads < 1 || dim % n_heads != 0) {
      throw ShapeError(name + ": width " + std::to_string(dim) + " not divisible by " + std::to_string(n_heads) +
                       " heads");
    }
  }

  Index dim() const { return wq.in_features(); }
  Index head_dim() const { return dim() / heads; }

  bool masked(Index i, Index j) const { return causal && j > i; }

  Matrix<Scalar> forward(const Matrix<Scalar>& x, Cache& c) const {
    if (x.cols() != dim()) {
      throw ShapeError(wq.weight.name + ": expected width " + std::to_string(dim()) + ", got " +
                       std::to_string(x.cols()));
    }
    const Index len = x.rows(), dh = head_dim();
    c.x = x;
    c.q = wq.forward(x);
    c.k = wk.forward(x);
    c.v = wv.forward(x);
    c.concat.resize(len, dim());
    c.heads.assign(static_cast<std::size_t>(heads), HeadCache{});
    for (Index h = 0; h < heads; ++h) {
      auto& hc = c.heads[static_cast<std::size_t>(h)];
      const Matrix<Scalar> qh = c.q.middleCols(h * dh, dh);
      const Matrix<Scalar> kh = c.k.middleCols(h * dh, dh);
      if (score == ScoreKind::yat) {
        auto r = yat_batch(qh, kh, std::optional<Vector<Scalar>>{}, cfg);
        hc.scores = std::move(r.value);
        hc.kernel = std::move(r.cache);
      } else {
        hc.scores = gemm(qh, kh) / std::sqrt(static_cast<Scalar>(dh));
      }
      hc.weights = normalize(hc.scores);
      c.concat.middleCols(h * dh, dh).noalias() = hc.weights * c.v.middleCols(h * dh, dh);
    }
    return wo.forward(c.concat);
  }

  Matrix<Scalar> forward(const Matrix<Scalar>& x) const {
    Cache c;
    return forward(x, c);
  }

  /// Row-wise normalization over unmasked keys.
  Matrix<Scalar> normalize(const Matrix<Scalar>& s) const {
    const Index len = s.rows();
    Matrix<Scalar> a = Matrix<Scalar>::Zero(len, s.cols());
    for (Index i = 0; i < len; ++i) {
      const Index keys = causal ? i + 1 : s.cols();
      if (norm == ScoreNorm::softmax) {
        const Scalar mx = s.row(i).head(keys).maxCoeff();
        Scalar z = 0;
        for (Index j = 0; j < keys; ++j) {
          a(i, j) = std::exp(s(i, j) - mx);
          z += a(i, j);
        }
        a.row(i).head(keys) /= z;
      } else {
        const Vector<Scalar> row = s.row(i).head(keys).transpose();
        a.row(i).head(keys) = softermax(row, squash).transpose();
      }
    }
    return a;
  }

  Matrix<Scalar> normalize_backward(const Matrix<Scalar>& s, const Matrix<Scalar>& a,
                                    const Matrix<Scalar>& da) const {
    const Index len = s.rows();
    Matrix<Scalar> ds = Matrix<Scalar>::Zero(len, s.cols());
    for (Index i = 0; i < len; ++i) {
      const Index keys = causal ? i + 1 : s.cols();
      if (norm == ScoreNorm::softmax) {
        const Scalar dot = a.row(i).head(keys).dot(da.row(i).head(keys));
        ds.row(i).head(keys) = a.row(i).head(keys).array() * (da.row(i).head(keys).array() - dot);
      } else {
        const Vector<Scalar> row = s.row(i).head(keys).transpose();
        const Vector<Scalar> g = da.row(i).head(keys).transpose();
        ds.row(i).head(keys) = softermax_backward(row, g, squash).transpose();
      }
    }
    return ds;
  }

  /// Accumulates projection gradients, returns dL/dx.
  Matrix<Scalar> backward(const Cache& c, const Matrix<Scalar>& upstream) {
    const Index len = c.x.rows(), dh = head_dim();
    const Matrix<Scalar> dconcat = wo.backward(c.concat, upstream);
    Matrix<Scalar> dq(len, dim()), dk(len, dim()), dv(len, dim());
    for (Index h = 0; h < heads; ++h) {
      const auto& hc = c.heads[static_cast<std::size_t>(h)];
      const Matrix<Scalar> vh = c.v.middleCols(h * dh, dh);
      const Matrix<Scalar> dout = dconcat.middleCols(h * dh, dh);
      const Matrix<Scalar> da = dout * vh.transpose();
      dv.middleCols(h * dh, dh).noalias() = hc.weights.transpose() * dout;
      const Matrix<Scalar> ds = normalize_backward(hc.scores, hc.weights, da);
      const Matrix<Scalar> qh = c.q.middleCols(h * dh, dh);
      const Matrix<Scalar> kh = c.k.middleCols(h * dh, dh);
      if (score == ScoreKind::yat) {
        auto g = yat_batch_backward(ds, hc.kernel, qh, kh);
        dq.middleCols(h * dh, dh) = g.grad_x;
        dk.middleCols(h * dh, dh) = g.grad_w;
      } else {
        const Scalar inv = Scalar(1) / std::sqrt(static_cast<Scalar>(dh));
        dq.middleCols(h * dh, dh).noalias() = inv * ds * kh;
        dk.middleCols(h * dh, dh).noalias() = inv * ds.transpose() * qh;
      }
    }
    Matrix<Scalar> dx = wq.backward(c.x, dq);
    dx += wk.backward(c.x, dk);
    dx += wv.backward(c.x, dv);
    return dx;
  }

  void parameters(ParamList<Scalar>& out) {
    wq.parameters(out);
    wk.parameters(out);
    wv.parameters(out);
    wo.parameters(out);
  }
};

}  // namespace nmn
