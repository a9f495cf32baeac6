#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

#include <Eigen/Core>
#include <Eigen/Eigenvalues>

namespace nmn {

/// Dense row-major matrix. Every use site computes X·Wᵀ, so row-major keeps
/// both operands contiguous along the reduction axis.
template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using MatrixXd = Matrix<double>;
using MatrixXf = Matrix<float>;
using VectorXd = Vector<double>;
using VectorXf = Vector<float>;

using Index = Eigen::Index;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

inline std::string shape_str(Index rows, Index cols) {
  return std::to_string(rows) + "x" + std::to_string(cols);
}

/// Seedable generator with platform-stable streams. The engine is the standard
/// mt19937_64 (whose raw output sequence is fixed by the C++ standard); the
/// uniform and normal transforms are implemented here because the standard
/// distributions are implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). Rejection sampling keeps it unbiased.
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("Rng::below: n must be positive");
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t r;
    do {
      r = engine_();
    } while (r >= limit);
    return r % n;
  }

  /// Standard normal via Box-Muller; the second variate is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * M_PI * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  double normal(double mean, double sigma) { return mean + sigma * normal(); }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// result = a · b_tᵀ, with the second operand supplied as n×d.
template <typename Scalar>
Matrix<Scalar> gemm(const Matrix<Scalar>& a, const Matrix<Scalar>& b_transposed) {
  if (a.cols() != b_transposed.cols()) {
    throw ShapeError("gemm: inner dimensions differ (" + shape_str(a.rows(), a.cols()) +
                     " vs " + shape_str(b_transposed.rows(), b_transposed.cols()) +
                     " transposed)");
  }
  Matrix<Scalar> out(a.rows(), b_transposed.rows());
  out.noalias() = a * b_transposed.transpose();
  return out;
}

template <typename Derived>
Vector<typename Derived::Scalar> row_sq_norms(const Eigen::MatrixBase<Derived>& m) {
  return m.rowwise().squaredNorm();
}

template <typename Scalar = double>
Matrix<Scalar> gaussian_fill(Rng& rng, Index rows, Index cols, double sigma) {
  if (!(sigma > 0.0)) throw DomainError("gaussian_fill: sigma must be positive");
  Matrix<Scalar> m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = static_cast<Scalar>(rng.normal(0.0, sigma));
  return m;
}

/// Smallest eigenvalue of a symmetric matrix.
template <typename Scalar>
Scalar sym_eig_min(const Matrix<Scalar>& m) {
  if (m.rows() != m.cols()) {
    throw ShapeError("sym_eig_min: matrix is not square (" + shape_str(m.rows(), m.cols()) + ")");
  }
  if (m.size() == 0) throw ShapeError("sym_eig_min: empty matrix");
  const Scalar scale = m.cwiseAbs().maxCoeff();
  const Scalar asym = (m - m.transpose()).cwiseAbs().maxCoeff();
  if (asym > Scalar(1e-12) * scale) {
    throw ShapeError("sym_eig_min: matrix is not symmetric (max |m - mᵀ| = " +
                     std::to_string(static_cast<double>(asym)) + ")");
  }
  using Dense = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  Eigen::SelfAdjointEigenSolver<Dense> solver(Dense(m), Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) throw std::runtime_error("sym_eig_min: solver did not converge");
  return solver.eigenvalues().minCoeff();
}

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& m) {
  return m.allFinite();
}

}  // namespace nmn
