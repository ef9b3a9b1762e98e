#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>

#include "bregctl/convex_function.hpp"
#include "bregctl/errors.hpp"
#include "bregctl/random.hpp"

namespace bregctl {

enum class NoiseFamily { Gaussian, Uniform, Rademacher, DegenerateZero };

inline std::string to_string(NoiseFamily f) {
  switch (f) {
    case NoiseFamily::Gaussian:
      return "gaussian";
    case NoiseFamily::Uniform:
      return "uniform";
    case NoiseFamily::Rademacher:
      return "rademacher";
    case NoiseFamily::DegenerateZero:
      return "degenerate-zero";
  }
  return "unknown";
}

/// Only families symmetric about the origin are representable.
inline NoiseFamily noise_family_from_string(const std::string& s) {
  if (s == "gaussian") return NoiseFamily::Gaussian;
  if (s == "uniform") return NoiseFamily::Uniform;
  if (s == "rademacher") return NoiseFamily::Rademacher;
  if (s == "degenerate-zero" || s == "zero" || s == "none") return NoiseFamily::DegenerateZero;
  throw ConfigError("unknown or asymmetric noise family '" + s +
                    "' (expected gaussian, uniform, rademacher, degenerate-zero)");
}

/// Zero-mean noise w = L z with LLᵀ = W and z a vector of independent,
/// unit-variance, symmetric draws.
class NoiseModel {
 public:
  NoiseModel() = default;
  NoiseModel(NoiseFamily family, Matrix covariance)
      : family_(family), W_(0.5 * (covariance + covariance.transpose())) {
    if (W_.rows() != W_.cols()) throw ConfigError("noise covariance must be square");
    Eigen::SelfAdjointEigenSolver<Matrix> es(W_);
    if (es.info() != Eigen::Success) throw LinearAlgebraError("noise covariance eigensolve failed");
    const double floor = -1e-12 * std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
    if ((es.eigenvalues().array() < floor).any())
      throw ConfigError("noise covariance must be positive semidefinite");
    L_ = es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
  }

  static NoiseModel zero(int n) { return {NoiseFamily::DegenerateZero, Matrix::Zero(n, n)}; }
  static NoiseModel gaussian(const Matrix& W) { return {NoiseFamily::Gaussian, W}; }

  NoiseFamily family() const { return family_; }
  const Matrix& covariance() const { return W_; }
  int dim() const { return static_cast<int>(W_.rows()); }

  /// Draw number `index` from stream `stream`. Rollouts use stream = step.
  Vector sample(const CounterRng& rng, std::uint64_t stream, std::uint64_t index = 0) const {
    const int n = dim();
    Vector z(n);
    for (int i = 0; i < n; ++i) {
      const std::uint64_t slot = index * static_cast<std::uint64_t>(n) + i;
      switch (family_) {
        case NoiseFamily::Gaussian:
          z(i) = rng.normal(stream, slot);
          break;
        case NoiseFamily::Uniform:
          z(i) = std::sqrt(3.0) * (2.0 * rng.uniform(stream, slot) - 1.0);
          break;
        case NoiseFamily::Rademacher:
          z(i) = rng.uniform(stream, slot) < 0.5 ? -1.0 : 1.0;
          break;
        case NoiseFamily::DegenerateZero:
          z(i) = 0.0;
          break;
      }
    }
    if (family_ == NoiseFamily::DegenerateZero) return z;
    return L_ * z;
  }

 private:
  NoiseFamily family_ = NoiseFamily::DegenerateZero;
  Matrix W_ = Matrix::Zero(1, 1);
  Matrix L_ = Matrix::Zero(1, 1);
};

/// x_{k+1} = A x_k + B u_k + w_k.
class LinearSystem {
 public:
  LinearSystem(Matrix A, Matrix B, NoiseModel noise) : A_(std::move(A)), B_(std::move(B)), noise_(std::move(noise)) {
    if (A_.rows() != A_.cols())
      throw ConfigError("A must be square, got " + std::to_string(A_.rows()) + "x" +
                        std::to_string(A_.cols()));
    if (B_.rows() != A_.rows())
      throw ConfigError("B must have " + std::to_string(A_.rows()) + " rows, got " +
                        std::to_string(B_.rows()));
    if (B_.cols() < 1) throw ConfigError("B must have at least one column");
    if (noise_.dim() != A_.rows())
      throw ConfigError("noise covariance must be " + std::to_string(A_.rows()) + "x" +
                        std::to_string(A_.rows()));
  }
  LinearSystem(Matrix A, Matrix B) : LinearSystem(A, B, NoiseModel::zero(static_cast<int>(A.rows()))) {}

  static LinearSystem scalar(double a, double b, NoiseModel noise = NoiseModel::zero(1)) {
    return {Matrix::Constant(1, 1, a), Matrix::Constant(1, 1, b), std::move(noise)};
  }

  const Matrix& A() const { return A_; }
  const Matrix& B() const { return B_; }
  const NoiseModel& noise() const { return noise_; }
  int n() const { return static_cast<int>(A_.rows()); }
  int m() const { return static_cast<int>(B_.cols()); }
  bool is_scalar() const { return n() == 1 && m() == 1; }

  bool A_invertible() const { return Eigen::FullPivLU<Matrix>(A_).isInvertible(); }
  bool B_full_rank() const {
    return Eigen::FullPivLU<Matrix>(B_).rank() == std::min(B_.rows(), B_.cols());
  }

  /// A⁻ᵀ; throws when A is singular.
  Matrix A_inverse_transpose() const {
    Eigen::FullPivLU<Matrix> lu(A_.transpose());
    if (!lu.isInvertible()) throw LinearAlgebraError("A is singular; the feedback law needs A invertible");
    return lu.inverse();
  }

  Vector step(const Vector& x, const Vector& u, const Vector& w) const { return A_ * x + B_ * u + w; }

  LinearSystem with_noise(NoiseModel noise) const { return {A_, B_, std::move(noise)}; }

 private:
  Matrix A_;
  Matrix B_;
  NoiseModel noise_;
};

}  // namespace bregctl
