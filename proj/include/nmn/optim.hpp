#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "nmn/layers.hpp"

namespace nmn {

template <typename Scalar>
struct XentResult {
  double loss = 0.0;
  Matrix<Scalar> grad;  // dL/dlogits
  Index correct = 0;
};

/// Mean negative log-likelihood of `targets` under row-softmax(logits), with
/// max subtraction. Gradient is (softmax − onehot)/B.
template <typename Scalar>
XentResult<Scalar> softmax_xent(const Matrix<Scalar>& logits, const std::vector<int>& targets) {
  const Index b = logits.rows(), c = logits.cols();
  if (static_cast<Index>(targets.size()) != b) {
    throw ShapeError("softmax_xent: " + std::to_string(targets.size()) + " targets for " + std::to_string(b) +
                     " rows");
  }
  XentResult<Scalar> r;
  r.grad.resize(b, c);
  double total = 0.0;
  for (Index i = 0; i < b; ++i) {
    const int t = targets[static_cast<std::size_t>(i)];
    if (t < 0 || t >= c) throw std::out_of_range("softmax_xent: target " + std::to_string(t) + " outside [0, " +
                                                 std::to_string(c) + ")");
    Index arg;
    const double mx = static_cast<double>(logits.row(i).maxCoeff(&arg));
    double z = 0.0;
    for (Index j = 0; j < c; ++j) z += std::exp(static_cast<double>(logits(i, j)) - mx);
    const double logz = mx + std::log(z);
    total += logz - static_cast<double>(logits(i, t));
    for (Index j = 0; j < c; ++j) {
      r.grad(i, j) = static_cast<Scalar>(std::exp(static_cast<double>(logits(i, j)) - logz) / double(b));
    }
    r.grad(i, t) -= static_cast<Scalar>(1.0 / double(b));
    if (arg == t) ++r.correct;
  }
  r.loss = total / double(b);
  return r;
}

/// Adam with bias correction and optional decoupled weight decay.
template <typename Scalar>
struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
  long step = 0;
  std::vector<Matrix<Scalar>> m, v;
};

template <typename Scalar>
void adam_step(AdamState<Scalar>& st, const ParamList<Scalar>& params) {
  if (st.m.empty()) {
    for (auto* p : params) {
      st.m.push_back(Matrix<Scalar>::Zero(p->value.rows(), p->value.cols()));
      st.v.push_back(Matrix<Scalar>::Zero(p->value.rows(), p->value.cols()));
    }
  }
  if (st.m.size() != params.size()) {
    throw ShapeError("adam_step: state tracks " + std::to_string(st.m.size()) + " tensors, got " +
                     std::to_string(params.size()));
  }
  ++st.step;
  const double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
  const double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
  const auto b1 = static_cast<Scalar>(st.beta1), b2 = static_cast<Scalar>(st.beta2);
  const auto step_size = static_cast<Scalar>(st.lr / bc1);
  const auto inv_bc2 = static_cast<Scalar>(1.0 / bc2);
  const auto eps = static_cast<Scalar>(st.eps);
  const auto decay = static_cast<Scalar>(1.0 - st.lr * st.weight_decay);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = *params[i];
    auto& m = st.m[i];
    auto& v = st.v[i];
    if (p.grad.rows() != m.rows() || p.grad.cols() != m.cols() || p.value.rows() != m.rows() ||
        p.value.cols() != m.cols()) {
      throw ShapeError("adam_step: " + p.name + " is " + shape_str(p.value.rows(), p.value.cols()) +
                       " but its moments are " + shape_str(m.rows(), m.cols()));
    }
    m = b1 * m + (Scalar(1) - b1) * p.grad;
    v = b2 * v + (Scalar(1) - b2) * p.grad.cwiseProduct(p.grad);
    if (st.weight_decay != 0.0) p.value *= decay;
    p.value.array() -= step_size * m.array() / ((v.array() * inv_bc2).sqrt() + eps);
  }
}

}  // namespace nmn
