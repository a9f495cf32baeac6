#include "doctest.h"

#include <cmath>

#include "support/gradcheck.hpp"
#include "nmn/model.hpp"

using namespace nmn;
using nmn::testing::numeric_gradient;
using nmn::testing::worst_relative_error;

namespace {

MatrixXd ref_layernorm(const MatrixXd& x, const LayerNorm<double>& ln) {
  MatrixXd y(x.rows(), x.cols());
  for (Index i = 0; i < x.rows(); ++i) {
    double mu = 0, var = 0;
    for (Index j = 0; j < x.cols(); ++j) mu += x(i, j);
    mu /= double(x.cols());
    for (Index j = 0; j < x.cols(); ++j) var += (x(i, j) - mu) * (x(i, j) - mu);
    var /= double(x.cols());
    for (Index j = 0; j < x.cols(); ++j)
      y(i, j) = (x(i, j) - mu) / std::sqrt(var + 1e-5) * ln.gain.value(0, j) + ln.shift.value(0, j);
  }
  return y;
}

MatrixXd ref_dot_attention(const YatAttention<double>& a, const MatrixXd& x) {
  const Index len = x.rows(), dh = a.head_dim();
  const MatrixXd q = x * a.wq.weight.value.transpose();
  const MatrixXd k = x * a.wk.weight.value.transpose();
  const MatrixXd v = x * a.wv.weight.value.transpose();
  MatrixXd concat = MatrixXd::Zero(len, a.dim());
  for (Index h = 0; h < a.heads; ++h) {
    for (Index i = 0; i < len; ++i) {
      std::vector<double> s(static_cast<std::size_t>(i + 1));
      double mx = -1e300, z = 0;
      for (Index j = 0; j <= i; ++j) {
        double dot = 0;
        for (Index c = h * dh; c < (h + 1) * dh; ++c) dot += q(i, c) * k(j, c);
        s[j] = dot / std::sqrt(double(dh));
        mx = std::max(mx, s[j]);
      }
      for (double& e : s) z += (e = std::exp(e - mx));
      for (Index j = 0; j <= i; ++j)
        for (Index c = h * dh; c < (h + 1) * dh; ++c) concat(i, c) += s[j] / z * v(j, c);
    }
  }
  return concat * a.wo.weight.value.transpose();
}

double block_loss(const Block<double>& b, const MatrixXd& x, const MatrixXd& up) {
  return b.forward(x).cwiseProduct(up).sum();
}

double check_block_grads(Block<double>& b, MatrixXd x, Rng& rng) {
  const MatrixXd up = gaussian_fill(rng, x.rows(), x.cols(), 1.0);
  ParamList<double> ps;
  b.parameters(ps);
  zero_grads(ps);
  Block<double>::Cache c;
  b.forward(x, c);
  const MatrixXd dx = b.backward(c, up);
  auto loss = [&] { return block_loss(b, x, up); };
  double worst = worst_relative_error(dx, numeric_gradient(x, loss));
  for (auto* p : ps) {
    const MatrixXd num = numeric_gradient(p->value, loss);
    // A LayerNorm after the NMN cancels its scale, leaving alpha with a
    // near-zero true gradient that central differences cannot resolve.
    if (num.cwiseAbs().maxCoeff() < 1e-3) {
      worst = std::max(worst, (p->grad - num).cwiseAbs().maxCoeff() * 1e2);
      continue;
    }
    worst = std::max(worst, worst_relative_error(p->grad, num));
  }
  return worst;
}

BlockConfig small_block(BlockKind kind, Index d) {
  BlockConfig c;
  c.kind = kind;
  c.dim = d;
  c.heads = 2;
  c.kernel.eps = 0.1;
  return c;
}

}  // namespace

TEST_CASE("zeroed output projections make a block the identity") {
  Rng rng(1);
  for (BlockKind kind : {BlockKind::aether, BlockKind::standard}) {
    Block<double> b("b", small_block(kind, 8), rng);
    b.attn.wo.weight.value.setZero();
    b.proj.weight.value.setZero();
    const MatrixXd x = gaussian_fill(rng, 4, 8, 1.0);
    CHECK((b.forward(x) - x).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("aether block matches its composition") {
  Rng rng(2);
  Block<double> b("b", small_block(BlockKind::aether, 8), rng);
  const MatrixXd x = gaussian_fill(rng, 5, 8, 1.0);
  const MatrixXd r = x + b.attn.forward(x);
  const MatrixXd want = r + b.proj.forward(b.nmn.forward(r));
  CHECK((b.forward(x) - want).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(b.norm_count() == 0);
}

TEST_CASE("standard block matches a hand-rolled pre-norm reference (d=4)") {
  Rng rng(3);
  Block<double> b("b", small_block(BlockKind::standard, 4), rng);
  b.ln1.gain.value = gaussian_fill(rng, 1, 4, 1.0);
  b.ln2.shift.value = gaussian_fill(rng, 1, 4, 1.0);
  const MatrixXd x = gaussian_fill(rng, 3, 4, 1.0);
  const MatrixXd r = x + ref_dot_attention(b.attn, ref_layernorm(x, b.ln1));
  MatrixXd h = ref_layernorm(r, b.ln2) * b.fc1.weight.value.transpose();
  for (Index i = 0; i < h.rows(); ++i)
    for (Index j = 0; j < h.cols(); ++j) h(i, j) = 0.5 * h(i, j) * (1.0 + std::erf(h(i, j) / std::sqrt(2.0)));
  const MatrixXd want = r + h * b.proj.weight.value.transpose();
  CHECK((b.forward(x) - want).cwiseAbs().maxCoeff() < 1e-10);
  CHECK(b.norm_count() == 2);
}

TEST_CASE("block gradients match finite differences (d=8)") {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    Rng rng(30 + seed);
    for (BlockKind kind : {BlockKind::aether, BlockKind::standard}) {
      Block<double> b("b", small_block(kind, 8), rng);
      CHECK(check_block_grads(b, gaussian_fill(rng, 3, 8, 1.0), rng) < 1e-4);
    }
    for (NormInjection inj : {NormInjection::pre, NormInjection::post}) {
      BlockConfig c = small_block(BlockKind::aether, 8);
      c.injection = inj;
      Block<double> b("b", c, rng);
      CHECK(b.norm_count() == 1);
      CHECK(check_block_grads(b, gaussian_fill(rng, 3, 8, 1.0), rng) < 1e-4);
    }
  }
}

namespace {

ModelConfig tiny_model(BlockKind kind) {
  ModelConfig c;
  c.kind = kind;
  c.vocab = 11;
  c.dim = 8;
  c.heads = 2;
  c.layers = 2;
  c.max_len = 6;
  c.kernel.eps = 0.1;
  c.seed = 17;
  return c;
}

}  // namespace

TEST_CASE("model gradients match finite differences (V=11, d=8, L=4)") {
  for (BlockKind kind : {BlockKind::aether, BlockKind::standard}) {
    for (bool tied : {false, true}) {
      ModelConfig cfg = tiny_model(kind);
      cfg.tied = tied;
      Model<double> m(cfg);
      const std::vector<int> ids{3, 0, 10, 3};
      Rng rng(5);
      const MatrixXd up = gaussian_fill(rng, 4, 11, 1.0);
      Model<double>::Cache c;
      m.zero_grad();
      m.forward(ids, c);
      m.backward(c, up);
      auto loss = [&] { return m.forward(ids).cwiseProduct(up).sum(); };
      double worst = 0;
      for (auto* p : m.parameters()) {
        worst = std::max(worst, worst_relative_error(p->grad, numeric_gradient(p->value, loss)));
      }
      CHECK(worst < 1e-4);
    }
  }
}

TEST_CASE("aether model has no normalization layers") {
  Model<double> a(tiny_model(BlockKind::aether));
  Model<double> s(tiny_model(BlockKind::standard));
  CHECK(a.norm_count() == 0);
  CHECK(s.norm_count() == 5);
  for (auto* p : a.parameters()) CHECK(p->name.find("ln") == std::string::npos);
}

TEST_CASE("registry lists every tensor once and survives copies") {
  Model<double> m(tiny_model(BlockKind::aether));
  Index total = 0;
  for (auto* p : m.parameters()) total += p->size();
  // tok 11x8, pos 6x8, per block: 4 projections 8x8, nmn 32x8 + 1x32 + 1x1, proj 8x32; unembed 11x8
  CHECK(total == 88 + 48 + 2 * (4 * 64 + 256 + 32 + 1 + 256) + 88);

  Model<double> copy(m);
  for (std::size_t i = 0; i < m.parameters().size(); ++i) {
    CHECK(copy.parameters()[i] != m.parameters()[i]);
    CHECK(copy.parameters()[i]->name == m.parameters()[i]->name);
  }
}

TEST_CASE("construction is deterministic per seed") {
  Model<double> a(tiny_model(BlockKind::aether)), b(tiny_model(BlockKind::aether));
  const std::vector<int> ids{1, 2, 3};
  CHECK(a.forward(ids) == b.forward(ids));
  ModelConfig other = tiny_model(BlockKind::aether);
  other.seed = 18;
  CHECK(Model<double>(other).forward(ids) != a.forward(ids));
}

TEST_CASE("causal logits do not depend on later tokens") {
  Model<double> m(tiny_model(BlockKind::aether));
  const MatrixXd a = m.forward({1, 2, 3, 4});
  const MatrixXd b = m.forward({1, 2, 9, 0});
  CHECK((a.topRows(2) - b.topRows(2)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("bad inputs are rejected") {
  Model<double> m(tiny_model(BlockKind::aether));
  CHECK_THROWS_AS(m.forward({1, 11}), std::out_of_range);
  CHECK_THROWS_AS(m.forward({-1}), std::out_of_range);
  CHECK_THROWS_AS(m.forward({}), std::invalid_argument);
  CHECK_THROWS_AS(m.forward(std::vector<int>(7, 0)), std::invalid_argument);
  ModelConfig bad = tiny_model(BlockKind::aether);
  bad.vocab = 0;
  CHECK_THROWS_AS(Model<double>{bad}, ShapeError);
}
