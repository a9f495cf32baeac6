#include "nmn/train.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace nmn {

template <typename Scalar>
ClassifierHead<Scalar>::ClassifierHead(HeadKind k, Index in, Index classes, bool with_bias, const KernelConfig& cfg,
                                       Rng& rng)
    : kind(k) {
  if (k == HeadKind::yat) {
    nmn = NmnDense<Scalar>("head", in, classes, with_bias, cfg, rng);
  } else {
    linear = Linear<Scalar>("head", in, classes, with_bias, rng);
  }
}

template <typename Scalar>
ParamList<Scalar> ClassifierHead<Scalar>::parameters() {
  ParamList<Scalar> out;
  if (kind == HeadKind::yat) {
    nmn.parameters(out);
  } else {
    linear.parameters(out);
  }
  return out;
}

template <typename Scalar>
Matrix<Scalar> ClassifierHead<Scalar>::logits(const Matrix<Scalar>& x) const {
  return kind == HeadKind::yat ? nmn.forward(x) : linear.forward(x);
}

template <typename Scalar>
XentResult<Scalar> ClassifierHead<Scalar>::loss_and_grad(const Matrix<Scalar>& x, const std::vector<int>& labels) {
  auto params = parameters();
  zero_grads(params);
  if (kind == HeadKind::yat) {
    typename NmnDense<Scalar>::Cache c;
    auto r = softmax_xent(nmn.forward(x, c), labels);
    nmn.backward(c, r.grad);
    return r;
  }
  auto r = softmax_xent(linear.forward(x), labels);
  linear.backward(x, r.grad);
  return r;
}

namespace {

template <typename Scalar>
Matrix<Scalar> rows_of(const Dataset& d, const std::vector<Index>& idx, std::size_t from, std::size_t to,
                       std::vector<int>& labels) {
  Matrix<Scalar> x(static_cast<Index>(to - from), d.dim());
  labels.resize(to - from);
  for (std::size_t i = from; i < to; ++i) {
    x.row(static_cast<Index>(i - from)) = d.inputs.row(idx[i]).template cast<Scalar>();
    labels[i - from] = d.labels[static_cast<std::size_t>(idx[i])];
  }
  return x;
}

VectorXd row_norms(const MatrixXd& w) { return w.rowwise().norm(); }

}  // namespace

template <typename Scalar>
double accuracy(const ClassifierHead<Scalar>& head, const Dataset& data) {
  if (data.size() == 0) return NAN;
  Index correct = 0;
  constexpr Index chunk = 1000;
  for (Index start = 0; start < data.size(); start += chunk) {
    const Index n = std::min(chunk, data.size() - start);
    const Matrix<Scalar> logits = head.logits(data.inputs.middleRows(start, n).template cast<Scalar>());
    for (Index i = 0; i < n; ++i) {
      Index arg;
      logits.row(i).maxCoeff(&arg);
      if (arg == data.labels[static_cast<std::size_t>(start + i)]) ++correct;
    }
  }
  return double(correct) / double(data.size());
}

template <typename Scalar>
InversionResult invert_prototypes_eval(const ClassifierHead<Scalar>& head, const Dataset& data) {
  InversionResult r;
  r.original = accuracy(head, data);
  ClassifierHead<Scalar> flipped = head;
  flipped.weight().value = -flipped.weight().value;
  r.inverted = accuracy(flipped, data);
  return r;
}

template <typename Scalar>
ClassifierReport train_classifier(HeadKind kind, const Dataset& train, const Dataset& test,
                                  const ClassifierConfig& cfg) {
  train.validate();
  if (cfg.batch < 1) throw std::invalid_argument("batch size must be at least 1");
  if (train.size() == 0) throw DataError("empty training set");
  if (test.size() > 0 && test.dim() != train.dim()) throw ShapeError("train/test input widths differ");

  ClassifierReport rep;
  KernelConfig kernel = cfg.kernel;
  if (kind == HeadKind::yat && kernel.mode == EpsMode::automatic) {
    kernel = KernelConfig{kernel.resolve(train.inputs)};
  }
  rep.eps = kernel.eps;
  rep.init_sigma = 1.0 / std::sqrt(double(train.dim()));
  if (cfg.init_sigma > 0) {
    rep.init_sigma = cfg.init_sigma;
  } else if (cfg.data_scaled_init) {
    rep.init_sigma = double(train.inputs.rowwise().norm().mean()) / std::sqrt(double(train.dim()));
  }

  Rng rng(cfg.seed);
  ClassifierHead<Scalar> head(kind, train.dim(), std::max(train.classes, 2), cfg.with_bias, kernel, rng);
  {
    auto& w = head.weight().value;
    w = init_gaussian<Scalar>(rng, w.rows(), w.cols(), rep.init_sigma);
  }
  rep.initial_prototypes = head.weight().value.template cast<double>();
  rep.initial_norms = row_norms(rep.initial_prototypes);

  AdamState<Scalar> adam;
  adam.lr = cfg.lr;
  const auto params = head.parameters();
  std::vector<Index> order(static_cast<std::size_t>(train.size()));
  std::iota(order.begin(), order.end(), Index{0});
  std::vector<int> labels;
  long step = 0;
  auto norm_mean = [&] { return row_norms(head.weight().value.template cast<double>()).mean(); };

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    // Fisher-Yates with the library RNG so the order is platform-stable.
    for (std::size_t i = order.size() - 1; i > 0; --i) std::swap(order[i], order[rng.below(i + 1)]);
    double loss_sum = 0;
    Index seen = 0, correct = 0;
    for (std::size_t from = 0; from < order.size(); from += std::size_t(cfg.batch)) {
      const std::size_t to = std::min(order.size(), from + std::size_t(cfg.batch));
      const Matrix<Scalar> x = rows_of<Scalar>(train, order, from, to, labels);
      const auto r = head.loss_and_grad(x, labels);
      adam_step(adam, params);
      ++step;
      loss_sum += r.loss * double(to - from);
      seen += Index(to - from);
      correct += r.correct;
      if (cfg.log_every > 0 && step % cfg.log_every == 0) {
        rep.log.add({step, "train", r.loss, double(r.correct) / double(to - from), norm_mean(), head.alpha()});
      }
    }
    rep.log.add({step, "epoch", loss_sum / double(seen), double(correct) / double(seen), norm_mean(), head.alpha()});
    if (test.size() > 0) rep.log.add({step, "test", NAN, accuracy(head, test), norm_mean(), head.alpha()});
  }

  rep.prototypes = head.weight().value.template cast<double>();
  rep.final_norms = row_norms(rep.prototypes);
  rep.norm_change = rep.final_norms.mean() / rep.initial_norms.mean() - 1.0;
  rep.alpha = head.alpha();
  rep.train_accuracy = accuracy(head, train);
  const Dataset& eval = test.size() > 0 ? test : train;
  rep.inversion = invert_prototypes_eval(head, eval);
  rep.test_accuracy = rep.inversion.original;
  return rep;
}

ClassifierConfig mnist_defaults(HeadKind kind) {
  ClassifierConfig c;
  if (kind == HeadKind::yat) {
    c.kernel.mode = EpsMode::automatic;
    c.data_scaled_init = true;
  }
  return c;
}

LmKind parse_lm_kind(const std::string& s) {
  if (s == "aether") return LmKind::aether;
  if (s == "standard") return LmKind::standard;
  if (s == "aether-preln") return LmKind::aether_preln;
  if (s == "aether-postln") return LmKind::aether_postln;
  throw std::invalid_argument("unknown model kind '" + s + "' (aether, standard, aether-preln, aether-postln)");
}

std::string to_string(LmKind k) {
  switch (k) {
    case LmKind::aether: return "aether";
    case LmKind::standard: return "standard";
    case LmKind::aether_preln: return "aether-preln";
    case LmKind::aether_postln: return "aether-postln";
  }
  return "?";
}

ModelConfig lm_model_config(const LmConfig& cfg, int vocab) {
  ModelConfig m;
  m.kind = cfg.kind == LmKind::standard ? BlockKind::standard : BlockKind::aether;
  m.injection = cfg.kind == LmKind::aether_preln    ? NormInjection::pre
                : cfg.kind == LmKind::aether_postln ? NormInjection::post
                                                    : NormInjection::none;
  m.vocab = vocab;
  m.dim = cfg.dim;
  m.heads = cfg.heads;
  m.layers = cfg.layers;
  m.max_len = cfg.len;
  m.kernel.eps = cfg.eps;
  m.seed = cfg.seed;
  return m;
}

namespace {

/// Forward/backward over a batch; returns the mean loss. Gradients are zeroed first.
template <typename Scalar>
double lm_batch_step(Model<Scalar>& model, const LmBatch& b) {
  model.zero_grad();
  double loss = 0;
  typename Model<Scalar>::Cache c;
  const auto scale = static_cast<Scalar>(1.0 / double(b.inputs.size()));
  for (std::size_t i = 0; i < b.inputs.size(); ++i) {
    auto r = softmax_xent(model.forward(b.inputs[i], c), b.targets[i]);
    loss += r.loss;
    model.backward(c, r.grad * scale);
  }
  return loss / double(b.inputs.size());
}

template <typename Scalar>
bool grads_finite(const Model<Scalar>& model) {
  for (const auto* p : model.parameters()) {
    if (!all_finite(p->grad)) return false;
  }
  return true;
}

}  // namespace

template <typename Scalar>
double lm_eval(const Model<Scalar>& model, const CharCorpus& corpus, const LmConfig& cfg) {
  LmBatcher val(corpus, cfg.len, cfg.batch, cfg.seed ^ 0x5eedULL, true);
  double total = 0;
  Index count = 0;
  for (Index k = 0; k < cfg.eval_batches; ++k) {
    const LmBatch b = val.next();
    for (std::size_t i = 0; i < b.inputs.size(); ++i) {
      total += softmax_xent(model.forward(b.inputs[i]), b.targets[i]).loss;
      ++count;
    }
  }
  return total / double(count);
}

template <typename Scalar>
std::vector<double> lm_overfit(Model<Scalar> model, const CharCorpus& corpus, const LmConfig& cfg, int steps) {
  LmBatcher src(corpus, std::min<Index>(cfg.len, 32), 2, cfg.seed + 1);
  const LmBatch b = src.next();
  AdamState<Scalar> adam;
  adam.lr = cfg.lr;
  std::vector<double> losses;
  for (int s = 0; s < steps; ++s) {
    losses.push_back(lm_batch_step(model, b));
    adam_step(adam, model.parameters());
  }
  losses.push_back(lm_batch_step(model, b));
  return losses;
}

template <typename Scalar>
LmReport train_lm(const CharCorpus& corpus, const LmConfig& cfg) {
  if (cfg.batch < 1) throw std::invalid_argument("batch size must be at least 1");
  LmReport rep;
  Model<Scalar> model(lm_model_config(cfg, corpus.vocab()));
  LmBatcher train(corpus, cfg.len, cfg.batch, cfg.seed);
  rep.ln_vocab = std::log(double(corpus.vocab()));
  rep.norm_count = model.norm_count();

  const auto probe = lm_overfit(model, corpus, cfg, 50);
  rep.sanity_ok = std::all_of(probe.begin(), probe.end(), [](double v) { return std::isfinite(v); }) &&
                  probe.back() < probe.front();
  if (!rep.sanity_ok) {
    throw std::runtime_error("train_lm: loss did not decrease over 50 steps on a fixed micro-batch (" +
                             std::to_string(probe.front()) + " -> " + std::to_string(probe.back()) + ")");
  }

  AdamState<Scalar> adam;
  adam.lr = cfg.lr;
  rep.initial_val_loss = lm_eval(model, corpus, cfg);
  rep.log.add({0, "val", rep.initial_val_loss, NAN, NAN, NAN});
  double last_val = rep.initial_val_loss;
  for (long step = 1; step <= cfg.steps; ++step) {
    const double loss = lm_batch_step(model, train.next());
    rep.steps_run = step;
    if (!std::isfinite(loss) || !grads_finite(model)) {
      ++rep.nan_events;
      rep.diverged = true;
      rep.log.add({step, "train", loss, NAN, NAN, NAN});
      break;
    }
    adam_step(adam, model.parameters());
    rep.final_train_loss = loss;
    rep.log.add({step, "train", loss, NAN, NAN, NAN});
    if (step % cfg.eval_every == 0 || step == cfg.steps) {
      last_val = lm_eval(model, corpus, cfg);
      rep.log.add({step, "val", last_val, NAN, NAN, NAN});
      if (!std::isfinite(last_val)) ++rep.nan_events;
      if (!std::isfinite(last_val) || last_val > cfg.divergence_threshold) {
        rep.diverged = true;
        break;
      }
    }
  }
  rep.final_val_loss = last_val;
  return rep;
}

#define NMN_INSTANTIATE(S)                                                                                  \
  template struct ClassifierHead<S>;                                                                        \
  template double accuracy<S>(const ClassifierHead<S>&, const Dataset&);                                    \
  template InversionResult invert_prototypes_eval<S>(const ClassifierHead<S>&, const Dataset&);             \
  template ClassifierReport train_classifier<S>(HeadKind, const Dataset&, const Dataset&,                   \
                                                const ClassifierConfig&);                                   \
  template double lm_eval<S>(const Model<S>&, const CharCorpus&, const LmConfig&);                          \
  template std::vector<double> lm_overfit<S>(Model<S>, const CharCorpus&, const LmConfig&, int);            \
  template LmReport train_lm<S>(const CharCorpus&, const LmConfig&);

NMN_INSTANTIATE(float)
NMN_INSTANTIATE(double)

}  // namespace nmn
