#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <utility>

#include "bregctl/errors.hpp"

namespace bregctl {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

enum class FunctionKind { AnalyticClosedForm, PiecewiseClosedForm, NumericBiconjugate };

inline std::string to_string(FunctionKind kind) {
  switch (kind) {
    case FunctionKind::AnalyticClosedForm:
      return "analytic-closed-form";
    case FunctionKind::PiecewiseClosedForm:
      return "piecewise-closed-form";
    case FunctionKind::NumericBiconjugate:
      return "numeric-biconjugate";
  }
  return "unknown";
}

/// Closed interval [lo, hi] (possibly unbounded) that contains the effective
/// domain of a scalar function. Open endpoints are reported as their limit.
struct Interval {
  double lo = -kInf;
  double hi = kInf;
  bool contains(double x) const { return x >= lo && x <= hi; }
};

/// A proper closed convex function φ: ℝⁿ → ℝ ∪ {+∞}.
///
/// Gradients at kinks return the minimum-norm element of the subdifferential;
/// `nearest_subgradient` exposes the full subdifferential through a projection.
/// Hessians are optional and absent wherever the function is only
/// distributionally twice differentiable (e.g. |x| at 0) or at a domain boundary.
///
/// Closed-form conjugates are optional. When a concrete function leaves them
/// empty, the routines in conjugate.hpp compute φ* numerically.
class ConvexFunction {
 public:
  virtual ~ConvexFunction() = default;

  virtual int dim() const = 0;
  virtual std::string name() const = 0;
  virtual FunctionKind kind() const = 0;

  virtual double value(const Vector& x) const = 0;
  virtual Vector gradient(const Vector& x) const = 0;
  virtual std::optional<Matrix> hessian(const Vector& x) const = 0;

  /// Element of ∂φ(x) closest to `target`.
  virtual Vector nearest_subgradient(const Vector& x, const Vector& /*target*/) const {
    return gradient(x);
  }

  virtual std::optional<double> conjugate_value(const Vector& /*xi*/) const { return std::nullopt; }
  virtual std::optional<Vector> conjugate_gradient(const Vector& /*xi*/) const {
    return std::nullopt;
  }
  virtual std::optional<Matrix> conjugate_hessian(const Vector& /*xi*/) const {
    return std::nullopt;
  }

  // Scalar fast paths. Functions of one variable override these; the defaults
  // route through the vector interface.
  virtual double value1(double x) const { return value(Vector::Constant(1, x)); }
  virtual double gradient1(double x) const { return gradient(Vector::Constant(1, x))(0); }
  virtual std::optional<double> hessian1(double x) const {
    auto h = hessian(Vector::Constant(1, x));
    if (!h) return std::nullopt;
    return (*h)(0, 0);
  }
  /// Closest point of ∂φ(x) to `target`, scalar version.
  virtual double nearest_subgradient1(double x, double target) const {
    return nearest_subgradient(Vector::Constant(1, x), Vector::Constant(1, target))(0);
  }
  /// Interval containing the effective domain (scalar functions only).
  virtual Interval domain1() const { return {}; }
  virtual std::optional<double> conjugate_value1(double xi) const {
    return conjugate_value(Vector::Constant(1, xi));
  }
  virtual std::optional<double> conjugate_gradient1(double xi) const {
    auto g = conjugate_gradient(Vector::Constant(1, xi));
    if (!g) return std::nullopt;
    return (*g)(0);
  }
  virtual std::optional<double> conjugate_hessian1(double xi) const {
    auto h = conjugate_hessian(Vector::Constant(1, xi));
    if (!h) return std::nullopt;
    return (*h)(0, 0);
  }
};

using FunctionPtr = std::shared_ptr<const ConvexFunction>;

/// Base for functions of one variable: implement the `*1` hooks, get the
/// vector interface for free.
class ScalarConvexFunction : public ConvexFunction {
 public:
  int dim() const final { return 1; }

  double value1(double x) const override = 0;
  double gradient1(double x) const override = 0;
  std::optional<double> hessian1(double x) const override = 0;

  double nearest_subgradient1(double x, double /*target*/) const override { return gradient1(x); }
  std::optional<double> conjugate_value1(double /*xi*/) const override { return std::nullopt; }
  std::optional<double> conjugate_gradient1(double /*xi*/) const override { return std::nullopt; }
  std::optional<double> conjugate_hessian1(double /*xi*/) const override { return std::nullopt; }

  double value(const Vector& x) const final { return value1(at(x)); }
  Vector gradient(const Vector& x) const final { return Vector::Constant(1, gradient1(at(x))); }
  std::optional<Matrix> hessian(const Vector& x) const final {
    auto h = hessian1(at(x));
    if (!h) return std::nullopt;
    return Matrix::Constant(1, 1, *h);
  }
  Vector nearest_subgradient(const Vector& x, const Vector& target) const final {
    return Vector::Constant(1, nearest_subgradient1(at(x), at(target)));
  }
  std::optional<double> conjugate_value(const Vector& xi) const final {
    return conjugate_value1(at(xi));
  }
  std::optional<Vector> conjugate_gradient(const Vector& xi) const final {
    auto g = conjugate_gradient1(at(xi));
    if (!g) return std::nullopt;
    return Vector::Constant(1, *g);
  }
  std::optional<Matrix> conjugate_hessian(const Vector& xi) const final {
    auto h = conjugate_hessian1(at(xi));
    if (!h) return std::nullopt;
    return Matrix::Constant(1, 1, *h);
  }

 private:
  static double at(const Vector& x) {
    if (x.size() != 1) throw DomainError("scalar function evaluated at a point of dimension " +
                                         std::to_string(x.size()));
    return x(0);
  }
};

inline double sign(double x) { return (x > 0.0) - (x < 0.0); }

}  // namespace bregctl
