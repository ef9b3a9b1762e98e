#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <optional>
#include <string>

#include "bregctl/conjugate.hpp"
#include "bregctl/convex_function.hpp"

namespace bregctl {

/// φ(x) = xᵀQx.
class Quadratic final : public ConvexFunction {
 public:
  explicit Quadratic(Matrix Q) : Q_(0.5 * (Q + Q.transpose())) {
    if (Q_.rows() != Q_.cols() || Q_.rows() == 0)
      throw DomainError("quadratic weight must be a non-empty square matrix");
    Eigen::LDLT<Matrix> ldlt(Q_);
    if (ldlt.info() == Eigen::Success && ldlt.isPositive() &&
        (ldlt.vectorD().array() > 0.0).all())
      Qinv_ = ldlt.solve(Matrix::Identity(Q_.rows(), Q_.rows()));
  }

  const Matrix& weight() const { return Q_; }
  bool invertible() const { return Qinv_.has_value(); }

  int dim() const override { return static_cast<int>(Q_.rows()); }
  std::string name() const override { return "quadratic"; }
  FunctionKind kind() const override { return FunctionKind::AnalyticClosedForm; }

  double value(const Vector& x) const override { return x.dot(Q_ * x); }
  Vector gradient(const Vector& x) const override { return 2.0 * Q_ * x; }
  std::optional<Matrix> hessian(const Vector&) const override { return Matrix(2.0 * Q_); }

  std::optional<double> conjugate_value(const Vector& xi) const override {
    if (!Qinv_) return std::nullopt;
    return 0.25 * xi.dot(*Qinv_ * xi);
  }
  std::optional<Vector> conjugate_gradient(const Vector& xi) const override {
    if (!Qinv_) return std::nullopt;
    return Vector(0.5 * (*Qinv_ * xi));
  }
  std::optional<Matrix> conjugate_hessian(const Vector&) const override {
    if (!Qinv_) return std::nullopt;
    return Matrix(0.5 * *Qinv_);
  }

  double value1(double x) const override { return Q_(0, 0) * x * x; }
  double gradient1(double x) const override { return 2.0 * Q_(0, 0) * x; }
  std::optional<double> hessian1(double) const override { return 2.0 * Q_(0, 0); }
  double nearest_subgradient1(double x, double) const override { return gradient1(x); }

 private:
  Matrix Q_;
  std::optional<Matrix> Qinv_;
};

/// ½‖x‖², the self-dual quadratic.
inline std::shared_ptr<Quadratic> half_squared_norm(int n) {
  return std::make_shared<Quadratic>(0.5 * Matrix::Identity(n, n));
}

/// φ(x) = Σ xᵢ ln xᵢ on the nonnegative orthant. Not even and not
/// nonnegative; it exists to exercise the Bregman identities (KL divergence).
class NegativeEntropy final : public ConvexFunction {
 public:
  explicit NegativeEntropy(int n) : n_(n) {}

  int dim() const override { return n_; }
  std::string name() const override { return "negative-entropy"; }
  FunctionKind kind() const override { return FunctionKind::AnalyticClosedForm; }

  double value(const Vector& x) const override {
    double s = 0.0;
    for (int i = 0; i < x.size(); ++i) s += value1(x(i));
    return s;
  }
  Vector gradient(const Vector& x) const override {
    Vector g(x.size());
    for (int i = 0; i < x.size(); ++i) g(i) = gradient1(x(i));
    return g;
  }
  std::optional<Matrix> hessian(const Vector& x) const override {
    if ((x.array() <= 0.0).any()) return std::nullopt;
    return Matrix(x.cwiseInverse().asDiagonal());
  }
  std::optional<double> conjugate_value(const Vector& xi) const override {
    return (xi.array() - 1.0).exp().sum();
  }
  std::optional<Vector> conjugate_gradient(const Vector& xi) const override {
    return Vector((xi.array() - 1.0).exp());
  }

  double value1(double x) const override {
    if (x < 0.0) throw DomainError("negative entropy: coordinate " + std::to_string(x) + " < 0");
    return x == 0.0 ? 0.0 : x * std::log(x);
  }
  double gradient1(double x) const override {
    if (x < 0.0) throw DomainError("negative entropy: coordinate " + std::to_string(x) + " < 0");
    return x == 0.0 ? -kInf : std::log(x) + 1.0;
  }
  std::optional<double> hessian1(double x) const override {
    if (x <= 0.0) return std::nullopt;
    return 1.0 / x;
  }
  double nearest_subgradient1(double x, double) const override { return gradient1(x); }
  Interval domain1() const override { return {0.0, kInf}; }
  std::optional<double> conjugate_value1(double xi) const override { return std::exp(xi - 1.0); }
  std::optional<double> conjugate_gradient1(double xi) const override {
    return std::exp(xi - 1.0);
  }
  std::optional<double> conjugate_hessian1(double xi) const override {
    return std::exp(xi - 1.0);
  }

 private:
  int n_;
};

/// Separable elastic net φ(x) = Σ |xᵢ| + ε xᵢ².
class ElasticNet final : public ConvexFunction {
 public:
  ElasticNet(int n, double eps) : n_(n), eps_(eps) {
    if (!(eps > 0.0)) throw DomainError("elastic net requires eps > 0");
  }
  double eps() const { return eps_; }

  int dim() const override { return n_; }
  std::string name() const override { return "elasticnet"; }
  FunctionKind kind() const override { return FunctionKind::PiecewiseClosedForm; }

  double value(const Vector& x) const override {
    return x.cwiseAbs().sum() + eps_ * x.squaredNorm();
  }
  Vector gradient(const Vector& x) const override {
    Vector g(x.size());
    for (int i = 0; i < x.size(); ++i) g(i) = gradient1(x(i));
    return g;
  }
  std::optional<Matrix> hessian(const Vector& x) const override {
    if ((x.array() == 0.0).any()) return std::nullopt;
    return Matrix(2.0 * eps_ * Matrix::Identity(x.size(), x.size()));
  }
  Vector nearest_subgradient(const Vector& x, const Vector& target) const override {
    Vector g(x.size());
    for (int i = 0; i < x.size(); ++i) g(i) = nearest_subgradient1(x(i), target(i));
    return g;
  }
  std::optional<double> conjugate_value(const Vector& xi) const override {
    double s = 0.0;
    for (int i = 0; i < xi.size(); ++i) s += *conjugate_value1(xi(i));
    return s;
  }
  std::optional<Vector> conjugate_gradient(const Vector& xi) const override {
    Vector g(xi.size());
    for (int i = 0; i < xi.size(); ++i) g(i) = *conjugate_gradient1(xi(i));
    return g;
  }
  std::optional<Matrix> conjugate_hessian(const Vector& xi) const override {
    Vector d(xi.size());
    for (int i = 0; i < xi.size(); ++i) {
      auto h = conjugate_hessian1(xi(i));
      if (!h) return std::nullopt;
      d(i) = *h;
    }
    return Matrix(d.asDiagonal());
  }

  double value1(double x) const override { return std::abs(x) + eps_ * x * x; }
  double gradient1(double x) const override { return sign(x) + 2.0 * eps_ * x; }
  std::optional<double> hessian1(double x) const override {
    if (x == 0.0) return std::nullopt;
    return 2.0 * eps_;
  }
  double nearest_subgradient1(double x, double target) const override {
    if (x != 0.0) return gradient1(x);
    return std::clamp(target, -1.0, 1.0);
  }
  std::optional<double> conjugate_value1(double xi) const override {
    double s = std::max(std::abs(xi) - 1.0, 0.0);
    return s * s / (4.0 * eps_);
  }
  std::optional<double> conjugate_gradient1(double xi) const override {
    return sign(xi) * std::max(std::abs(xi) - 1.0, 0.0) / (2.0 * eps_);
  }
  std::optional<double> conjugate_hessian1(double xi) const override {
    if (std::abs(xi) == 1.0) return std::nullopt;
    return std::abs(xi) > 1.0 ? 1.0 / (2.0 * eps_) : 0.0;
  }

 private:
  int n_;
  double eps_;
};

/// Budgeted control cost: u² on |u| ≤ t, +∞ outside.
class BangBangCost final : public ScalarConvexFunction {
 public:
  explicit BangBangCost(double t) : t_(t) {
    if (!(t > 0.0)) throw DomainError("bang-bang budget t must be positive");
  }
  double budget() const { return t_; }

  std::string name() const override { return "bangbang"; }
  FunctionKind kind() const override { return FunctionKind::PiecewiseClosedForm; }

  double value1(double u) const override { return std::abs(u) <= t_ ? u * u : kInf; }
  double gradient1(double u) const override {
    if (std::abs(u) > t_) throw DomainError("bang-bang cost: |u| exceeds the budget");
    return 2.0 * u;
  }
  std::optional<double> hessian1(double u) const override {
    if (std::abs(u) >= t_) return std::nullopt;
    return 2.0;
  }
  double nearest_subgradient1(double u, double target) const override {
    if (u >= t_) return std::max(target, 2.0 * t_);
    if (u <= -t_) return std::min(target, -2.0 * t_);
    return 2.0 * u;
  }
  Interval domain1() const override { return {-t_, t_}; }

  std::optional<double> conjugate_value1(double eta) const override {
    double a = std::abs(eta);
    return a <= 2.0 * t_ ? 0.25 * eta * eta : t_ * a - t_ * t_;
  }
  std::optional<double> conjugate_gradient1(double eta) const override {
    return std::clamp(0.5 * eta, -t_, t_);
  }
  std::optional<double> conjugate_hessian1(double eta) const override {
    double a = std::abs(eta);
    if (a == 2.0 * t_) return std::nullopt;
    return a < 2.0 * t_ ? 0.5 : 0.0;
  }

 private:
  double t_;
};

/// φ(u) = e^{|u|} − |u| − 1.
class ExponentialCost final : public ScalarConvexFunction {
 public:
  /// With `closed_form_dual` false the conjugate is left to the numeric
  /// machinery, which gives an independent route to compare against.
  explicit ExponentialCost(bool closed_form_dual = true) : closed_form_dual_(closed_form_dual) {}

  std::string name() const override { return "exponential"; }
  FunctionKind kind() const override { return FunctionKind::AnalyticClosedForm; }

  double value1(double u) const override {
    double a = std::abs(u);
    return std::expm1(a) - a;
  }
  double gradient1(double u) const override { return sign(u) * std::expm1(std::abs(u)); }
  std::optional<double> hessian1(double u) const override { return std::exp(std::abs(u)); }

  std::optional<double> conjugate_value1(double xi) const override {
    if (!closed_form_dual_) return std::nullopt;
    double a = std::abs(xi);
    return (1.0 + a) * std::log1p(a) - a;
  }
  std::optional<double> conjugate_gradient1(double xi) const override {
    if (!closed_form_dual_) return std::nullopt;
    return sign(xi) * std::log1p(std::abs(xi));
  }
  std::optional<double> conjugate_hessian1(double xi) const override {
    if (!closed_form_dual_) return std::nullopt;
    return 1.0 / (1.0 + std::abs(xi));
  }

 private:
  bool closed_form_dual_;
};

/// φ(x) = base(x) + xᵀMx (the p = q + xᵀMx construction).
class PlusQuadratic final : public ConvexFunction {
 public:
  PlusQuadratic(FunctionPtr base, Matrix M) : base_(std::move(base)), M_(0.5 * (M + M.transpose())) {
    if (M_.rows() != base_->dim() || M_.cols() != base_->dim())
      throw DomainError("quadratic term dimension does not match the base function");
    if (auto q = std::dynamic_pointer_cast<const Quadratic>(base_)) {
      combined_ = std::make_shared<Quadratic>(q->weight() + M_);
    } else if (auto en = std::dynamic_pointer_cast<const ElasticNet>(base_)) {
      const double c = M_(0, 0);
      const bool isotropic = (M_ - c * Matrix::Identity(M_.rows(), M_.cols())).norm() == 0.0;
      if (isotropic && en->eps() + c > 0.0) combined_ = std::make_shared<ElasticNet>(M_.rows(), en->eps() + c);
    }
  }
  const FunctionPtr& base() const { return base_; }
  const Matrix& weight() const { return M_; }

  int dim() const override { return base_->dim(); }
  std::string name() const override { return base_->name() + "+xMx"; }
  FunctionKind kind() const override { return base_->kind(); }

  double value(const Vector& x) const override { return base_->value(x) + x.dot(M_ * x); }
  Vector gradient(const Vector& x) const override { return base_->gradient(x) + 2.0 * M_ * x; }
  std::optional<Matrix> hessian(const Vector& x) const override {
    auto h = base_->hessian(x);
    if (!h) return std::nullopt;
    return Matrix(*h + 2.0 * M_);
  }
  Vector nearest_subgradient(const Vector& x, const Vector& target) const override {
    Vector lin = 2.0 * M_ * x;
    return base_->nearest_subgradient(x, target - lin) + lin;
  }
  std::optional<double> conjugate_value(const Vector& xi) const override {
    if (combined_) return combined_->conjugate_value(xi);
    return std::nullopt;
  }
  std::optional<Vector> conjugate_gradient(const Vector& xi) const override {
    if (combined_) return combined_->conjugate_gradient(xi);
    return std::nullopt;
  }
  std::optional<Matrix> conjugate_hessian(const Vector& xi) const override {
    if (combined_) return combined_->conjugate_hessian(xi);
    return std::nullopt;
  }

  double value1(double x) const override { return base_->value1(x) + M_(0, 0) * x * x; }
  double gradient1(double x) const override { return base_->gradient1(x) + 2.0 * M_(0, 0) * x; }
  std::optional<double> hessian1(double x) const override {
    auto h = base_->hessian1(x);
    if (!h) return std::nullopt;
    return *h + 2.0 * M_(0, 0);
  }
  double nearest_subgradient1(double x, double target) const override {
    double lin = 2.0 * M_(0, 0) * x;
    return base_->nearest_subgradient1(x, target - lin) + lin;
  }
  Interval domain1() const override { return base_->domain1(); }
  std::optional<double> conjugate_value1(double xi) const override {
    if (combined_) return combined_->conjugate_value1(xi);
    return std::nullopt;
  }
  std::optional<double> conjugate_gradient1(double xi) const override {
    if (combined_) return combined_->conjugate_gradient1(xi);
    return std::nullopt;
  }
  std::optional<double> conjugate_hessian1(double xi) const override {
    if (combined_) return combined_->conjugate_hessian1(xi);
    return std::nullopt;
  }

 private:
  FunctionPtr base_;
  Matrix M_;
  FunctionPtr combined_;
};

/// The convex function whose conjugate is `dual`: φ = dual*. Evaluating φ
/// requires a numeric supremum; φ* is `dual` itself, exactly.
class ConjugateOf final : public ConvexFunction {
 public:
  explicit ConjugateOf(FunctionPtr dual, std::string label = {})
      : dual_(std::move(dual)), label_(std::move(label)) {}
  const FunctionPtr& dual() const { return dual_; }

  int dim() const override { return dual_->dim(); }
  std::string name() const override { return label_.empty() ? "(" + dual_->name() + ")*" : label_; }
  FunctionKind kind() const override { return FunctionKind::NumericBiconjugate; }

  double value(const Vector& x) const override {
    try {
      return bregctl::dual_value(*dual_, x);
    } catch (const UnboundedDualError&) {
      return kInf;
    }
  }
  Vector gradient(const Vector& x) const override { return bregctl::dual_gradient(*dual_, x); }
  std::optional<Matrix> hessian(const Vector& x) const override {
    return bregctl::dual_hessian(*dual_, x);
  }
  std::optional<double> conjugate_value(const Vector& xi) const override {
    return dual_->value(xi);
  }
  std::optional<Vector> conjugate_gradient(const Vector& xi) const override {
    return dual_->gradient(xi);
  }
  std::optional<Matrix> conjugate_hessian(const Vector& xi) const override {
    return dual_->hessian(xi);
  }

  double value1(double x) const override {
    try {
      return bregctl::dual_value1(*dual_, x);
    } catch (const UnboundedDualError&) {
      return kInf;
    }
  }
  double gradient1(double x) const override { return bregctl::dual_gradient1(*dual_, x); }
  std::optional<double> hessian1(double x) const override {
    return bregctl::dual_hessian1(*dual_, x);
  }
  double nearest_subgradient1(double x, double) const override { return gradient1(x); }
  std::optional<double> conjugate_value1(double xi) const override { return dual_->value1(xi); }
  std::optional<double> conjugate_gradient1(double xi) const override {
    return dual_->gradient1(xi);
  }
  std::optional<double> conjugate_hessian1(double xi) const override {
    return dual_->hessian1(xi);
  }

 private:
  FunctionPtr dual_;
  std::string label_;
};

}  // namespace bregctl
