#include "doctest.h"

#include "support/gradcheck.hpp"
#include "nmn/nmn.hpp"

using namespace nmn;
using nmn::testing::numeric_gradient;
using nmn::testing::worst_relative_error;

TEST_CASE("adaptive scale") {
  CHECK(adaptive_scale(1, 1.0) == doctest::Approx(1.4426950408889634).epsilon(1e-15));
  CHECK(adaptive_scale(7, 0.0) == 1.0);
  CHECK(adaptive_scale(10, 2.0) == doctest::Approx(std::pow(10.0 / std::log(11.0), 2.0)).epsilon(1e-15));
}

TEST_CASE("single unit with unit scale returns the raw self-similarity") {
  Rng rng(1);
  NmnDense<double> layer("nmn", 3, 1, false, KernelConfig{1.0}, rng);
  layer.alpha.value(0, 0) = 0.0;
  const MatrixXd x = layer.weight.value;
  const MatrixXd y = layer.forward(x);
  CHECK(y(0, 0) == doctest::Approx(std::pow(x.squaredNorm(), 2)).epsilon(1e-12));
}

TEST_CASE("forward equals s times the per-pair kernel") {
  Rng rng(2);
  NmnDense<double> layer("nmn", 5, 6, true, KernelConfig{0.05}, rng);
  layer.bias.value = gaussian_fill(rng, 1, 6, 0.3);
  layer.alpha.value(0, 0) = 1.3;
  const MatrixXd x = gaussian_fill(rng, 4, 5, 1.0);
  const MatrixXd y = layer.forward(x);
  const double s = layer.scale();
  for (Index i = 0; i < 4; ++i) {
    for (Index j = 0; j < 6; ++j) {
      const double want = s * yat_biased(VectorXd(layer.weight.value.row(j).transpose()),
                                         VectorXd(x.row(i).transpose()), layer.bias.value(0, j), layer.cfg);
      CHECK(std::abs(y(i, j) - want) <= 1e-10 * std::max(1.0, want));
    }
  }
}

TEST_CASE("shape errors") {
  Rng rng(3);
  NmnDense<double> layer("nmn", 5, 6, true, KernelConfig{}, rng);
  CHECK_THROWS_AS(layer.forward(MatrixXd::Zero(2, 4)), ShapeError);
  NmnDense<double>::Cache c;
  layer.forward(MatrixXd::Ones(2, 5), c);
  CHECK_THROWS_AS(layer.backward(c, MatrixXd::Zero(2, 5)), ShapeError);
}

TEST_CASE("zero upstream gives zero gradients") {
  Rng rng(4);
  NmnDense<double> layer("nmn", 3, 4, true, KernelConfig{0.1}, rng);
  NmnDense<double>::Cache c;
  layer.forward(gaussian_fill(rng, 2, 3, 1.0), c);
  const MatrixXd dx = layer.backward(c, MatrixXd::Zero(2, 4));
  CHECK(dx.isZero(0.0));
  CHECK(layer.weight.grad.isZero(0.0));
  CHECK(layer.bias.grad.isZero(0.0));
  CHECK(layer.alpha.grad(0, 0) == 0.0);
}

TEST_CASE("backward matches finite differences for all parameters and the input") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(50 + seed);
    NmnDense<double> layer("nmn", 4, 5, true, KernelConfig{0.1}, rng);
    layer.bias.value = gaussian_fill(rng, 1, 5, 0.5);
    layer.alpha.value(0, 0) = 0.7;
    MatrixXd x = gaussian_fill(rng, 3, 4, 1.0);
    const MatrixXd up = gaussian_fill(rng, 3, 5, 1.0);
    auto loss = [&] { return layer.forward(x).cwiseProduct(up).sum(); };

    NmnDense<double>::Cache c;
    layer.forward(x, c);
    const MatrixXd dx = layer.backward(c, up);
    CHECK(worst_relative_error(dx, numeric_gradient(x, loss)) < 1e-5);
    CHECK(worst_relative_error(layer.weight.grad, numeric_gradient(layer.weight.value, loss)) < 1e-5);
    CHECK(worst_relative_error(layer.bias.grad, numeric_gradient(layer.bias.value, loss)) < 1e-5);
    CHECK(worst_relative_error(layer.alpha.grad, numeric_gradient(layer.alpha.value, loss)) < 1e-5);
  }
}

TEST_CASE("float instantiation tracks the double path") {
  Rng a(9), b(9);
  NmnDense<double> ld("nmn", 6, 3, true, KernelConfig{0.1}, a);
  NmnDense<float> lf("nmn", 6, 3, true, KernelConfig{0.1}, b);
  Rng rx(10);
  const MatrixXd x = gaussian_fill(rx, 4, 6, 1.0);
  const MatrixXd yd = ld.forward(x);
  const MatrixXf yf = lf.forward(x.cast<float>());
  CHECK((yd - yf.cast<double>()).cwiseAbs().maxCoeff() < 1e-4 * std::max(1.0, yd.cwiseAbs().maxCoeff()));
}
