#pragma once

#include <cmath>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "bregctl/catalog.hpp"
#include "bregctl/scalar_solvers.hpp"
#include "bregctl/synthesis.hpp"

namespace bregctl {

struct ScalarFamilyParams {
  double a = 0.0;
  double b = 0.0;
  double m = 0.0;
  double t = 0.0;    // bang-bang budget
  double eps = 0.0;  // elastic-net curvature
};

namespace detail {

inline void require_basic(const ScalarFamilyParams& p, const std::string& family) {
  if (!std::isfinite(p.a) || !std::isfinite(p.b) || !std::isfinite(p.m))
    throw FamilyInfeasibilityError(family + ": parameters must be finite");
  if (p.a == 0.0) throw FamilyInfeasibilityError(family + ": a != 0 violated (A must be invertible)");
  if (p.b == 0.0) throw FamilyInfeasibilityError(family + ": b != 0 violated");
  if (!(p.m > 0.0)) throw FamilyInfeasibilityError(family + ": m > 0 violated");
}

inline std::string fmt(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

}  // namespace detail

inline void validate_bangbang(const ScalarFamilyParams& p) {
  detail::require_basic(p, "bangbang");
  if (!(p.t > 0.0)) throw FamilyInfeasibilityError("bangbang: t > 0 violated");
  const double d = p.a * p.a - p.b * p.b * p.m;
  if (!(d > 0.0))
    throw FamilyInfeasibilityError("bangbang: a^2 - b^2 m > 0 violated (a^2 - b^2 m = " + detail::fmt(d) + ")");
}

inline void validate_elasticnet(const ScalarFamilyParams& p) {
  detail::require_basic(p, "elasticnet");
  if (!(p.eps > 0.0)) throw FamilyInfeasibilityError("elasticnet: eps > 0 violated");
  const double d = p.a * p.a * (p.eps + p.m) - p.m;
  if (!(d > 0.0))
    throw FamilyInfeasibilityError("elasticnet: a^2 (eps + m) - m > 0 violated (value " + detail::fmt(d) + ")");
}

inline void validate_exponential(const ScalarFamilyParams& p) {
  detail::require_basic(p, "exponential");
  // p* convex needs a²/(2m) ≥ b² at the origin; q = p − mx² convex needs a² ≤ 1.
  if (!(p.a * p.a > 2.0 * p.m * p.b * p.b))
    throw FamilyInfeasibilityError("exponential: a^2 > 2 m b^2 violated (the derived p* is not convex)");
  if (!(p.a * p.a <= 1.0))
    throw FamilyInfeasibilityError("exponential: a^2 <= 1 violated (the derived q is not convex)");
}

/// r(u) = mb²/a² u² for |u| ≤ a²/(2mb), and
/// mb²(ε+m)/D u² − bm/D |u| + a²/(4D) beyond, with D = a²(ε+m) − m.
class ElasticNetControlCost final : public ScalarConvexFunction {
 public:
  explicit ElasticNetControlCost(const ScalarFamilyParams& p) : p_(p) {
    validate_elasticnet(p);
    const double d = p.a * p.a * (p.eps + p.m) - p.m;
    inner_ = p.m * p.b * p.b / (p.a * p.a);
    outer2_ = p.m * p.b * p.b * (p.eps + p.m) / d;
    outer1_ = p.b * p.m / d;
    outer0_ = p.a * p.a / (4.0 * d);
    breakpoint_ = p.a * p.a / (2.0 * p.m * std::abs(p.b));
  }
  double breakpoint() const { return breakpoint_; }

  std::string name() const override { return "elasticnet-r"; }
  FunctionKind kind() const override { return FunctionKind::PiecewiseClosedForm; }

  double value1(double u) const override {
    const double au = std::abs(u);
    if (au <= breakpoint_) return inner_ * u * u;
    return outer2_ * u * u - outer1_ * au + outer0_;
  }
  double gradient1(double u) const override {
    if (std::abs(u) <= breakpoint_) return 2.0 * inner_ * u;
    return 2.0 * outer2_ * u - outer1_ * sign(u);
  }
  std::optional<double> hessian1(double u) const override {
    const double au = std::abs(u);
    if (au == breakpoint_) return std::nullopt;
    return au < breakpoint_ ? 2.0 * inner_ : 2.0 * outer2_;
  }

 private:
  ScalarFamilyParams p_;
  double inner_, outer2_, outer1_, outer0_, breakpoint_;
};

/// q(x) = m(1/(a²−b²m) − 1)x² for |x| ≤ a²t/(mb) − tb, and
/// m(1/a² − 1)x² + (2mbt/a²)|x| + t²(mb²/a² − 1) beyond.
class BangBangStateCost final : public ScalarConvexFunction {
 public:
  explicit BangBangStateCost(const ScalarFamilyParams& p) : p_(p) {
    validate_bangbang(p);
    const double a2 = p.a * p.a, b = std::abs(p.b);
    inner_ = p.m * (1.0 / (a2 - b * b * p.m) - 1.0);
    outer2_ = p.m * (1.0 / a2 - 1.0);
    outer1_ = 2.0 * p.m * b * p.t / a2;
    outer0_ = p.t * p.t * (p.m * b * b / a2 - 1.0);
    breakpoint_ = a2 * p.t / (p.m * b) - p.t * b;
  }
  double breakpoint() const { return breakpoint_; }

  std::string name() const override { return "bangbang-q"; }
  FunctionKind kind() const override { return FunctionKind::PiecewiseClosedForm; }

  double value1(double x) const override {
    const double ax = std::abs(x);
    if (ax <= breakpoint_) return inner_ * x * x;
    return outer2_ * x * x + outer1_ * ax + outer0_;
  }
  double gradient1(double x) const override {
    if (std::abs(x) <= breakpoint_) return 2.0 * inner_ * x;
    return 2.0 * outer2_ * x + outer1_ * sign(x);
  }
  std::optional<double> hessian1(double x) const override {
    const double ax = std::abs(x);
    if (ax == breakpoint_) return std::nullopt;
    return ax < breakpoint_ ? 2.0 * inner_ : 2.0 * outer2_;
  }

 private:
  ScalarFamilyParams p_;
  double inner_, outer2_, outer1_, outer0_, breakpoint_;
};

/// State cost matched to r(u) = e^{|u|} − |u| − 1:
/// q(x) = max_ξ [xξ − a²ξ²/(4m) + r*(bξ)] − mx², r*(η) = (1+|η|)ln(1+|η|) − |η|.
/// Values come from a cubic Hermite table on [0, table_max] (exact slopes at
/// the nodes); gradients, Hessians and values beyond the table are computed
/// directly.
class ExponentialStateCost final : public ScalarConvexFunction {
 public:
  explicit ExponentialStateCost(const ScalarFamilyParams& p, double table_max = 200.0, int nodes = 20001)
      : p_(p), h_(table_max / (nodes - 1)) {
    validate_exponential(p);
    xs_.resize(nodes);
    vals_.resize(nodes);
    slopes_.resize(nodes);
    for (int i = 0; i < nodes; ++i) {
      const double x = i * h_;
      const double xi = argmax(x);
      xs_[i] = x;
      vals_[i] = direct_value(x, xi);
      slopes_[i] = xi - 2.0 * p_.m * x;
    }
  }

  std::string name() const override { return "exponential-q"; }
  FunctionKind kind() const override { return FunctionKind::NumericBiconjugate; }

  double value1(double x) const override {
    const double ax = std::abs(x);
    const double pos = ax / h_;
    const auto i = static_cast<std::size_t>(pos);
    if (i + 1 >= xs_.size()) return direct_value(ax, argmax(ax));
    const double s = pos - static_cast<double>(i);
    const double s2 = s * s, s3 = s2 * s;
    return (2 * s3 - 3 * s2 + 1) * vals_[i] + (s3 - 2 * s2 + s) * h_ * slopes_[i] +
           (-2 * s3 + 3 * s2) * vals_[i + 1] + (s3 - s2) * h_ * slopes_[i + 1];
  }
  double gradient1(double x) const override {
    const double ax = std::abs(x);
    return sign(x) * (argmax(ax) - 2.0 * p_.m * ax);
  }
  std::optional<double> hessian1(double x) const override {
    const double xi = argmax(std::abs(x));
    return 1.0 / stationarity_slope(xi) - 2.0 * p_.m;
  }

  /// Direct (untabulated) evaluation.
  double exact_value(double x) const {
    const double ax = std::abs(x);
    return direct_value(ax, argmax(ax));
  }

 private:
  static double rstar(double eta) {
    const double a = std::abs(eta);
    return (1.0 + a) * std::log1p(a) - a;
  }
  // d/dξ of the objective is x − g(ξ) with g(ξ) = a²ξ/(2m) − b·sign(ξ)ln(1+|bξ|).
  double g(double xi) const {
    return p_.a * p_.a * xi / (2.0 * p_.m) - p_.b * sign(p_.b * xi) * std::log1p(std::abs(p_.b * xi));
  }
  double stationarity_slope(double xi) const {
    return p_.a * p_.a / (2.0 * p_.m) - p_.b * p_.b / (1.0 + std::abs(p_.b * xi));
  }
  double argmax(double x) const {
    if (x == 0.0) return 0.0;
    auto f = [&](double xi) { return g(xi) - x; };
    auto br = scalar::bracket_increasing(f, Interval{-kInf, kInf});
    if (!br) throw ConvergenceError("exponential q: stationarity root not bracketed", x);
    return scalar::bisect_increasing(f, br->lo, br->hi);
  }
  double direct_value(double x, double xi) const {
    return x * xi - p_.a * p_.a * xi * xi / (4.0 * p_.m) + rstar(p_.b * xi) - p_.m * x * x;
  }

  ScalarFamilyParams p_;
  double h_;
  std::vector<double> xs_, vals_, slopes_;
};

// ---------------------------------------------------------------------------
// Printed controllers

inline Controller bangbang_controller(const ScalarFamilyParams& p) {
  validate_bangbang(p);
  const double gain = p.b * p.m / p.a;
  const double threshold = std::abs(p.a * p.t / (p.b * p.m));
  const double a = p.a;
  return Controller("bangbang", 1, 1, [=](const Vector& x) {
    const double v = x(0);
    return Vector::Constant(1, std::abs(v) <= threshold ? -gain * v : -a * sign(v));
  });
}

inline Controller exponential_controller(const ScalarFamilyParams& p) {
  detail::require_basic(p, "exponential");
  const double k = 2.0 * p.b * p.m / p.a;
  return Controller("exponential", 1, 1, [=](const Vector& x) {
    const double v = x(0);
    return Vector::Constant(1, -sign(v) * std::log1p(std::abs(k * v)));
  });
}

inline Controller elasticnet_controller(const ScalarFamilyParams& p) {
  validate_elasticnet(p);
  const double a = p.a, b = p.b, m = p.m, eps = p.eps;
  return Controller("elasticnet", 1, 1, [=](const Vector& x) {
    const double v = x(0);
    const double s = 2.0 * m * v / a;
    double u = -(a / b) * v;
    if (std::abs(s) > 1.0) u += (std::abs(s) - 1.0) * sign(s) / (2.0 * b * (eps + m));
    return Vector::Constant(1, u);
  });
}

// ---------------------------------------------------------------------------
// Families

struct ClosedFormFamily {
  std::string name;
  ScalarFamilyParams params;
  DesignMode mode;
  FunctionPtr q;
  FunctionPtr r;
  Controller controller;
  GridSpec grid;
};

inline LinearSystem family_system(const ScalarFamilyParams& p, NoiseModel noise = NoiseModel::zero(1)) {
  return LinearSystem::scalar(p.a, p.b, std::move(noise));
}

inline ClosedFormFamily bangbang_family(const ScalarFamilyParams& p) {
  validate_bangbang(p);
  GridSpec grid;
  grid.scale = std::max(1.0, p.t / std::abs(p.b));
  return {"bangbang", p, DesignMode::ControlCostFirst, std::make_shared<BangBangStateCost>(p),
          std::make_shared<BangBangCost>(p.t), bangbang_controller(p), grid};
}

inline ClosedFormFamily exponential_family(const ScalarFamilyParams& p) {
  validate_exponential(p);
  return {"exponential", p, DesignMode::ControlCostFirst, std::make_shared<ExponentialStateCost>(p),
          std::make_shared<ExponentialCost>(), exponential_controller(p), GridSpec{}};
}

inline ClosedFormFamily elasticnet_family(const ScalarFamilyParams& p) {
  validate_elasticnet(p);
  return {"elasticnet", p, DesignMode::StateCostFirst, std::make_shared<ElasticNet>(1, p.eps),
          std::make_shared<ElasticNetControlCost>(p), elasticnet_controller(p), GridSpec{}};
}

inline const std::vector<std::string>& family_names() {
  static const std::vector<std::string> names{"bangbang", "exponential", "elasticnet"};
  return names;
}

inline ClosedFormFamily make_family(const std::string& name, const ScalarFamilyParams& p) {
  if (name == "bangbang") return bangbang_family(p);
  if (name == "exponential") return exponential_family(p);
  if (name == "elasticnet") return elasticnet_family(p);
  throw ConfigError("unknown family '" + name + "' (expected bangbang, exponential, elasticnet)");
}

inline std::map<std::string, double> family_param_map(const ClosedFormFamily& f) {
  std::map<std::string, double> out{{"a", f.params.a}, {"b", f.params.b}, {"m", f.params.m}};
  if (f.name == "bangbang") out["t"] = f.params.t;
  if (f.name == "elasticnet") out["eps"] = f.params.eps;
  return out;
}

/// Certificate built from the printed (q, r) pair at M = m. The feasibility
/// report is attached but not enforced: the printed pair may be consistent
/// even where the sufficient condition fails.
inline SynthesisCertificate family_certificate(const ClosedFormFamily& f, NoiseModel noise = NoiseModel::zero(1)) {
  SynthesisCertificate c{family_system(f.params, std::move(noise)),
                         Matrix::Constant(1, 1, f.params.m),
                         f.mode,
                         f.name,
                         family_param_map(f),
                         f.q,
                         f.r,
                         nullptr,
                         {},
                         f.grid,
                         {}};
  c.p = std::make_shared<PlusQuadratic>(f.q, c.M);
  c.feasibility = f.mode == DesignMode::StateCostFirst ? check_M_given_q(c.system, *f.q, c.M, f.grid)
                                                       : check_M_given_r(c.system, *f.r, c.M, f.grid);
  return c;
}

/// The fixed cost the family's design starts from.
inline FunctionPtr family_fixed_cost(const ClosedFormFamily& f) {
  return f.mode == DesignMode::StateCostFirst ? f.q : f.r;
}

}  // namespace bregctl
