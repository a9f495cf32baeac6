#pragma once

#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "nmn/block.hpp"

namespace nmn {

struct ModelConfig {
  BlockKind kind = BlockKind::aether;
  Index vocab = 0;
  Index dim = 128;
  Index heads = 4;
  Index layers = 2;
  Index max_len = 128;
  Index mlp_mult = 4;
  bool tied = false;
  bool nmn_bias = true;
  KernelConfig kernel{};
  NormInjection injection = NormInjection::none;
  std::uint64_t seed = 0;

  BlockConfig block() const {
    BlockConfig b;
    b.kind = kind;
    b.dim = dim;
    b.heads = heads;
    b.mlp_mult = mlp_mult;
    b.kernel = kernel;
    b.injection = injection;
    b.nmn_bias = nmn_bias;
    return b;
  }
};

/// Token + position embeddings, a stack of blocks and an unembedding. The
/// standard kind adds a final LayerNorm before unembedding.
template <typename Scalar>
class Model {
 public:
  struct Cache {
    std::vector<int> ids;
    Matrix<Scalar> final_in;  // input to the unembedding
    Matrix<Scalar> last_block_out;
    typename LayerNorm<Scalar>::Cache ln_f;
    std::vector<typename Block<Scalar>::Cache> blocks;
  };

  explicit Model(const ModelConfig& cfg) : cfg_(cfg) {
    if (cfg.vocab < 1 || cfg.max_len < 1) throw ShapeError("model: vocab and max_len must be positive");
    Rng rng(cfg.seed);
    const double sigma = 1.0 / std::sqrt(static_cast<double>(cfg.dim));
    tok_ = Embedding<Scalar>("tok_emb", cfg.vocab, cfg.dim, sigma, rng);
    pos_ = Embedding<Scalar>("pos_emb", cfg.max_len, cfg.dim, sigma, rng);
    for (Index l = 0; l < cfg.layers; ++l) blocks_.emplace_back("block" + std::to_string(l), cfg.block(), rng);
    if (cfg.kind == BlockKind::standard) ln_f_.emplace("ln_f", cfg.dim);
    if (!cfg.tied) unembed_ = Linear<Scalar>("unembed", cfg.dim, cfg.vocab, false, rng);
    rebuild_registry();
  }

  Model(const Model& other) : cfg_(other.cfg_), tok_(other.tok_), pos_(other.pos_), blocks_(other.blocks_),
                              ln_f_(other.ln_f_), unembed_(other.unembed_) {
    rebuild_registry();
  }
  Model& operator=(const Model&) = delete;

  const ModelConfig& config() const { return cfg_; }
  std::vector<Block<Scalar>>& blocks() { return blocks_; }
  const std::vector<Block<Scalar>>& blocks() const { return blocks_; }

  /// Every trainable tensor exactly once, in a fixed order.
  const ParamList<Scalar>& parameters() const { return registry_; }

  int norm_count() const {
    int n = ln_f_ ? 1 : 0;
    for (const auto& b : blocks_) n += b.norm_count();
    return n;
  }

  Matrix<Scalar> forward(const std::vector<int>& ids, Cache& c) const {
    if (ids.empty()) throw std::invalid_argument("model: empty sequence");
    if (static_cast<Index>(ids.size()) > cfg_.max_len) {
      throw std::invalid_argument("model: sequence length " + std::to_string(ids.size()) + " exceeds max_len " +
                                  std::to_string(cfg_.max_len));
    }
    for (int id : ids) {
      if (id < 0 || id >= cfg_.vocab) {
        throw std::out_of_range("model: token id " + std::to_string(id) + " outside vocabulary of " +
                                std::to_string(cfg_.vocab));
      }
    }
    c.ids = ids;
    std::vector<int> positions(ids.size());
    for (std::size_t t = 0; t < ids.size(); ++t) positions[t] = static_cast<int>(t);
    Matrix<Scalar> h = tok_.forward(ids) + pos_.forward(positions);
    c.blocks.resize(blocks_.size());
    for (std::size_t l = 0; l < blocks_.size(); ++l) h = blocks_[l].forward(h, c.blocks[l]);
    c.last_block_out = h;
    c.final_in = ln_f_ ? ln_f_->forward(h, c.ln_f) : h;
    if (cfg_.tied) return gemm(c.final_in, tok_.table.value);
    return unembed_.forward(c.final_in);
  }

  Matrix<Scalar> forward(const std::vector<int>& ids) const {
    Cache c;
    return forward(ids, c);
  }

  /// Accumulates into the registry gradients.
  void backward(const Cache& c, const Matrix<Scalar>& dlogits) {
    Matrix<Scalar> dh;
    if (cfg_.tied) {
      tok_.table.grad.noalias() += dlogits.transpose() * c.final_in;
      dh = dlogits * tok_.table.value;
    } else {
      dh = unembed_.backward(c.final_in, dlogits);
    }
    if (ln_f_) dh = ln_f_->backward(c.ln_f, dh);
    for (std::size_t l = blocks_.size(); l-- > 0;) dh = blocks_[l].backward(c.blocks[l], dh);
    tok_.backward(c.ids, dh);
    std::vector<int> positions(c.ids.size());
    for (std::size_t t = 0; t < c.ids.size(); ++t) positions[t] = static_cast<int>(t);
    pos_.backward(positions, dh);
  }

  void zero_grad() { zero_grads(registry_); }

 private:
  void rebuild_registry() {
    registry_.clear();
    tok_.parameters(registry_);
    pos_.parameters(registry_);
    for (auto& b : blocks_) b.parameters(registry_);
    if (ln_f_) ln_f_->parameters(registry_);
    if (!cfg_.tied) unembed_.parameters(registry_);
    std::set<std::string> names;
    for (auto* p : registry_) {
      if (!names.insert(p->name).second) throw std::logic_error("model: duplicate parameter " + p->name);
    }
  }

  ModelConfig cfg_;
  Embedding<Scalar> tok_, pos_;
  std::vector<Block<Scalar>> blocks_;
  std::optional<LayerNorm<Scalar>> ln_f_;
  Linear<Scalar> unembed_;
  ParamList<Scalar> registry_;
};

}  // namespace nmn
