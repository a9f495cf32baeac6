#pragma once

#include <optional>
#include <string>

#include "nmn/attention.hpp"
#include "nmn/layers.hpp"
#include "nmn/nmn.hpp"

namespace nmn {

enum class BlockKind { aether, standard };

/// Where an ablation LayerNorm is placed around the NMN of an aether block.
enum class NormInjection { none, pre, post };

struct BlockConfig {
  BlockKind kind = BlockKind::aether;
  Index dim = 128;
  Index heads = 4;
  Index mlp_mult = 4;
  KernelConfig kernel{};
  NormInjection injection = NormInjection::none;
  bool nmn_bias = true;
  bool causal = true;
};

/// aether:   r = x + YatAttn(x);        y = r + Linear(NMN(r))
/// standard: r = x + Attn(LN₁(x));      y = r + Linear(GeLU(Linear(LN₂(r))))
template <typename Scalar>
struct Block {
  BlockConfig cfg;
  YatAttention<Scalar> attn;
  // aether
  NmnDense<Scalar> nmn;
  std::optional<LayerNorm<Scalar>> inject_ln;
  // standard
  LayerNorm<Scalar> ln1, ln2;
  Linear<Scalar> fc1;
  // shared output projection 4d→d
  Linear<Scalar> proj;

  struct Cache {
    typename YatAttention<Scalar>::Cache attn;
    typename NmnDense<Scalar>::Cache nmn;
    typename LayerNorm<Scalar>::Cache ln_a, ln_b;
    Matrix<Scalar> attn_in, r, mlp_in, hidden_pre, hidden;
  };

  Block() = default;
  Block(const std::string& name, const BlockConfig& c, Rng& rng) : cfg(c) {
    const Index d = c.dim, h = c.dim * c.mlp_mult;
    const ScoreKind score = c.kind == BlockKind::aether ? ScoreKind::yat : ScoreKind::scaled_dot;
    attn = YatAttention<Scalar>(name + ".attn", d, c.heads, c.kernel, rng, score);
    attn.causal = c.causal;
    if (c.kind == BlockKind::aether) {
      nmn = NmnDense<Scalar>(name + ".nmn", d, h, c.nmn_bias, c.kernel, rng);
      if (c.injection == NormInjection::pre) inject_ln.emplace(name + ".ln_pre", d);
      if (c.injection == NormInjection::post) inject_ln.emplace(name + ".ln_post", h);
    } else {
      ln1 = LayerNorm<Scalar>(name + ".ln1", d);
      ln2 = LayerNorm<Scalar>(name + ".ln2", d);
      fc1 = Linear<Scalar>(name + ".fc1", d, h, false, rng);
    }
    proj = Linear<Scalar>(name + ".proj", h, d, false, rng);
  }

  /// Number of normalization operations applied per forward pass.
  int norm_count() const {
    if (cfg.kind == BlockKind::standard) return 2;
    return inject_ln ? 1 : 0;
  }

  Matrix<Scalar> forward(const Matrix<Scalar>& x, Cache& c) const {
    if (x.cols() != cfg.dim) {
      throw ShapeError("block: expected width " + std::to_string(cfg.dim) + ", got " + std::to_string(x.cols()));
    }
    if (cfg.kind == BlockKind::aether) {
      c.r = x + attn.forward(x, c.attn);
      c.mlp_in = inject_ln && cfg.injection == NormInjection::pre ? inject_ln->forward(c.r, c.ln_a) : c.r;
      c.hidden_pre = nmn.forward(c.mlp_in, c.nmn);
      c.hidden = inject_ln && cfg.injection == NormInjection::post ? inject_ln->forward(c.hidden_pre, c.ln_b)
                                                                    : c.hidden_pre;
      return c.r + proj.forward(c.hidden);
    }
    c.attn_in = ln1.forward(x, c.ln_a);
    c.r = x + attn.forward(c.attn_in, c.attn);
    c.mlp_in = ln2.forward(c.r, c.ln_b);
    c.hidden_pre = fc1.forward(c.mlp_in);
    c.hidden = gelu(c.hidden_pre);
    return c.r + proj.forward(c.hidden);
  }

  Matrix<Scalar> forward(const Matrix<Scalar>& x) const {
    Cache c;
    return forward(x, c);
  }

  Matrix<Scalar> backward(const Cache& c, const Matrix<Scalar>& upstream) {
    Matrix<Scalar> dhidden = proj.backward(c.hidden, upstream);
    Matrix<Scalar> dr = upstream;
    if (cfg.kind == BlockKind::aether) {
      if (inject_ln && cfg.injection == NormInjection::post) dhidden = inject_ln->backward(c.ln_b, dhidden);
      Matrix<Scalar> dmlp_in = nmn.backward(c.nmn, dhidden);
      if (inject_ln && cfg.injection == NormInjection::pre) dmlp_in = inject_ln->backward(c.ln_a, dmlp_in);
      dr += dmlp_in;
      Matrix<Scalar> dx = dr;
      dx += attn.backward(c.attn, dr);
      return dx;
    }
    const Matrix<Scalar> dpre = gelu_backward(c.hidden_pre, dhidden);
    dr += ln2.backward(c.ln_b, fc1.backward(c.mlp_in, dpre));
    Matrix<Scalar> dx = dr;
    dx += ln1.backward(c.ln_a, attn.backward(c.attn, dr));
    return dx;
  }

  void parameters(ParamList<Scalar>& out) {
    attn.parameters(out);
    if (cfg.kind == BlockKind::aether) {
      nmn.parameters(out);
      if (inject_ln) inject_ln->parameters(out);
    } else {
      ln1.parameters(out);
      ln2.parameters(out);
      fc1.parameters(out);
    }
    proj.parameters(out);
  }
};

}  // namespace nmn
