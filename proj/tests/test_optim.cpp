#include "doctest.h"

#include <cmath>

#include "support/gradcheck.hpp"
#include "nmn/optim.hpp"

using namespace nmn;

TEST_CASE("uniform logits give ln C") {
  const auto r = softmax_xent<double>(MatrixXd::Zero(3, 10), {0, 4, 9});
  CHECK(r.loss == doctest::Approx(std::log(10.0)).epsilon(1e-14));
}

TEST_CASE("cross-entropy is stable for large logits") {
  MatrixXd logits(1, 3);
  logits << 1000.0, 0.0, -1000.0;
  const auto r = softmax_xent(logits, {0});
  CHECK(r.loss == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(r.correct == 1);
  CHECK(all_finite(r.grad));
}

TEST_CASE("cross-entropy gradient matches finite differences") {
  Rng rng(3);
  MatrixXd logits = gaussian_fill(rng, 2, 3, 2.0);
  const std::vector<int> t{2, 0};
  const auto r = softmax_xent(logits, t);
  const MatrixXd num = testing::numeric_gradient(logits, [&] { return softmax_xent(logits, t).loss; });
  CHECK(testing::worst_relative_error(r.grad, num) < 1e-6);
}

TEST_CASE("cross-entropy errors") {
  CHECK_THROWS_AS(softmax_xent<double>(MatrixXd::Zero(2, 3), {0}), ShapeError);
  CHECK_THROWS_AS(softmax_xent<double>(MatrixXd::Zero(1, 3), {3}), std::out_of_range);
}

TEST_CASE("adam: zero gradient leaves parameters unchanged") {
  Param<double> p{"p", MatrixXd::Constant(2, 2, 0.5)};
  AdamState<double> st;
  adam_step<double>(st, {&p});
  CHECK(p.value == MatrixXd::Constant(2, 2, 0.5));
}

TEST_CASE("adam: first step moves each entry by about lr against its gradient sign") {
  Param<double> p{"p", MatrixXd::Zero(1, 3)};
  p.grad << 2.0, -0.01, 30.0;
  AdamState<double> st;
  st.lr = 0.01;
  adam_step<double>(st, {&p});
  CHECK(p.value(0, 0) == doctest::Approx(-0.01).epsilon(1e-6));
  CHECK(p.value(0, 1) == doctest::Approx(0.01).epsilon(1e-5));
  CHECK(p.value(0, 2) == doctest::Approx(-0.01).epsilon(1e-6));
}

TEST_CASE("adam: decoupled weight decay shrinks without gradient") {
  Param<double> p{"p", MatrixXd::Constant(1, 1, 2.0)};
  AdamState<double> st;
  st.lr = 0.1;
  st.weight_decay = 0.5;
  adam_step<double>(st, {&p});
  CHECK(p.value(0, 0) == doctest::Approx(1.9));
}

TEST_CASE("adam: minimizes a quadratic and is deterministic") {
  auto run = [] {
    Param<double> p{"p", MatrixXd::Constant(1, 2, 3.0)};
    AdamState<double> st;
    st.lr = 0.05;
    for (int i = 0; i < 2000; ++i) {
      p.grad = 2.0 * (p.value.array() - 1.0).matrix();
      adam_step<double>(st, {&p});
    }
    return p.value;
  };
  const MatrixXd a = run();
  CHECK((a.array() - 1.0).abs().maxCoeff() < 1e-3);
  CHECK(a == run());
}

TEST_CASE("adam: parameter list must keep its shape") {
  Param<double> p{"p", MatrixXd::Zero(1, 2)};
  Param<double> q{"q", MatrixXd::Zero(1, 2)};
  AdamState<double> st;
  adam_step<double>(st, {&p});
  CHECK_THROWS_AS(adam_step<double>(st, {&p, &q}), ShapeError);
  p.value.resize(2, 2);
  p.grad.resize(2, 2);
  CHECK_THROWS_AS(adam_step<double>(st, {&p}), ShapeError);
}
