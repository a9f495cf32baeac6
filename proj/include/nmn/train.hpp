#pragma once

#include <string>
#include <vector>

#include "nmn/data.hpp"
#include "nmn/metrics.hpp"
#include "nmn/model.hpp"
#include "nmn/optim.hpp"

namespace nmn {

enum class HeadKind { linear, yat };

/// A single 10-prototype layer: z = Wx for linear, z = s·ⵟ(w_i, x) for yat.
template <typename Scalar>
struct ClassifierHead {
  HeadKind kind = HeadKind::yat;
  Linear<Scalar> linear;
  NmnDense<Scalar> nmn;

  ClassifierHead(HeadKind k, Index in, Index classes, bool with_bias, const KernelConfig& cfg, Rng& rng);

  Param<Scalar>& weight() { return kind == HeadKind::yat ? nmn.weight : linear.weight; }
  const Param<Scalar>& weight() const { return kind == HeadKind::yat ? nmn.weight : linear.weight; }
  ParamList<Scalar> parameters();
  Matrix<Scalar> logits(const Matrix<Scalar>& x) const;
  /// One forward/backward pass; gradients are overwritten, not accumulated.
  XentResult<Scalar> loss_and_grad(const Matrix<Scalar>& x, const std::vector<int>& labels);
  double alpha() const { return kind == HeadKind::yat ? double(nmn.alpha.value(0, 0)) : NAN; }
};

struct ClassifierConfig {
  int epochs = 5;
  Index batch = 128;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  KernelConfig kernel{};
  bool with_bias = false;
  double init_sigma = 0.0;     // explicit prototype σ; 0 defers to data_scaled_init
  bool data_scaled_init = false;  // σ = mean‖x‖/√d, so prototypes start at the data's norm
  long log_every = 100;  // steps between train-split rows in the metrics log
};

/// Per-head MNIST defaults: the yat head resolves ε from the inputs and starts
/// its prototypes at the data scale; the linear head keeps σ = 1/√d.
ClassifierConfig mnist_defaults(HeadKind kind);

struct InversionResult {
  double original = NAN;
  double inverted = NAN;
};

struct ClassifierReport {
  MetricsLog log;
  MatrixXd initial_prototypes, prototypes;
  VectorXd initial_norms, final_norms;  // per class
  double norm_change = NAN;             // relative change of the mean prototype norm
  double eps = NAN;                     // resolved kernel ε
  double init_sigma = NAN;
  double alpha = NAN;
  double train_accuracy = NAN;
  double test_accuracy = NAN;
  InversionResult inversion;
};

template <typename Scalar>
double accuracy(const ClassifierHead<Scalar>& head, const Dataset& data);

/// Accuracy with W and with −W. Biases, if any, are left alone.
template <typename Scalar>
InversionResult invert_prototypes_eval(const ClassifierHead<Scalar>& head, const Dataset& data);

template <typename Scalar>
ClassifierReport train_classifier(HeadKind kind, const Dataset& train, const Dataset& test,
                                  const ClassifierConfig& cfg);

enum class LmKind { aether, standard, aether_preln, aether_postln };

LmKind parse_lm_kind(const std::string& s);
std::string to_string(LmKind k);

struct LmConfig {
  LmKind kind = LmKind::aether;
  Index dim = 128;
  Index heads = 4;
  Index layers = 2;
  Index len = 128;
  Index batch = 8;
  long steps = 300;
  double lr = 3e-4;
  double eps = 1e-6;
  std::uint64_t seed = 0;
  long eval_every = 100;
  Index eval_batches = 4;
  double divergence_threshold = 10.0;
};

struct LmReport {
  MetricsLog log;
  double ln_vocab = NAN;
  double initial_val_loss = NAN;
  double final_val_loss = NAN;
  double final_train_loss = NAN;
  long nan_events = 0;
  bool diverged = false;
  bool sanity_ok = false;  // the 50-step micro-batch overfit check
  int norm_count = 0;
  long steps_run = 0;
};

ModelConfig lm_model_config(const LmConfig& cfg, int vocab);

/// Mean validation cross-entropy over `cfg.eval_batches` fixed batches.
template <typename Scalar>
double lm_eval(const Model<Scalar>& model, const CharCorpus& corpus, const LmConfig& cfg);

/// Trains on a single fixed micro-batch; returns the losses seen at each step.
template <typename Scalar>
std::vector<double> lm_overfit(Model<Scalar> model, const CharCorpus& corpus, const LmConfig& cfg, int steps);

template <typename Scalar>
LmReport train_lm(const CharCorpus& corpus, const LmConfig& cfg);

}  // namespace nmn
