#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "bregctl/bregman.hpp"
#include "bregctl/catalog.hpp"
#include "bregctl/conjugate.hpp"
#include "bregctl/grid.hpp"
#include "bregctl/linear_system.hpp"
#include "bregctl/lqr.hpp"

namespace bregctl {

enum class DesignMode { StateCostFirst, ControlCostFirst };

inline std::string to_string(DesignMode mode) {
  return mode == DesignMode::StateCostFirst ? "state-cost-first" : "control-cost-first";
}

inline DesignMode design_mode_from_string(const std::string& s) {
  if (s == "state-cost-first") return DesignMode::StateCostFirst;
  if (s == "control-cost-first") return DesignMode::ControlCostFirst;
  throw ConfigError("unknown design mode '" + s + "'");
}

enum class Objective { MaxMScalar, MinTrace, MaxMargin };

inline std::string to_string(Objective o) {
  switch (o) {
    case Objective::MaxMScalar:
      return "max-m-scalar";
    case Objective::MinTrace:
      return "min-trace";
    case Objective::MaxMargin:
      return "max-margin";
  }
  return "unknown";
}

inline Objective objective_from_string(const std::string& s) {
  if (s == "max-m-scalar") return Objective::MaxMScalar;
  if (s == "min-trace") return Objective::MinTrace;
  if (s == "max-margin") return Objective::MaxMargin;
  throw ConfigError("unknown objective '" + s + "' (expected max-m-scalar, min-trace, max-margin)");
}

struct Tolerances {
  double riccati = 1e-6;
  double kkt = 1e-6;
  double bellman = 1e-6;
  double margin_floor = 1e-8;
};

/// Slack below which a matrix inequality counts as violated. Conditions are
/// non-strict; this only absorbs rounding in the eigenvalue computation.
inline constexpr double kFeasibilitySlack = 1e-12;

struct Margin {
  std::string condition;
  double value = 0.0;  // smallest eigenvalue of (rhs − lhs) over the sample set
};

struct FeasibilityReport {
  std::string route;
  bool feasible = false;
  std::vector<Margin> margins;
  /// Direct check that the derived companion dual is convex and nonnegative on
  /// the grid, reported independently of the matrix condition.
  std::optional<bool> numeric_convexity_verdict;
  double numeric_convexity_worst = 0.0;
  int points_checked = 0;
  int points_skipped = 0;
  std::vector<std::string> notes;

  double min_margin() const {
    double m = kInf;
    for (const auto& g : margins) m = std::min(m, g.value);
    return m;
  }
};

// ---------------------------------------------------------------------------
// Linear-algebra helpers

inline Matrix pseudo_inverse(const Matrix& X) {
  return Eigen::CompleteOrthogonalDecomposition<Matrix>(X).pseudoInverse();
}

inline double min_eigenvalue(const Matrix& S) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (S + S.transpose()), Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0);
}

inline Matrix spd_inverse(const Matrix& M) {
  Eigen::LLT<Matrix> llt(0.5 * (M + M.transpose()));
  if (llt.info() != Eigen::Success) throw LinearAlgebraError("M must be symmetric positive definite");
  return llt.solve(Matrix::Identity(M.rows(), M.cols()));
}

inline bool is_stable(const Matrix& A) { return spectral_radius(A) < 1.0; }

// ---------------------------------------------------------------------------
// Companion duals

/// r̃*(η) = −p*((Bᵀ)†η) + ¼ηᵀB†AM⁻¹Aᵀ(Bᵀ)†η with p = q + xᵀMx.
/// Its biconjugate is the control cost matched to a state cost q.
class DerivedControlDual final : public ConvexFunction {
 public:
  DerivedControlDual(const LinearSystem& sys, FunctionPtr p, const Matrix& M)
      : p_(std::move(p)), bt_pinv_(pseudo_inverse(sys.B().transpose())) {
    Matrix AMA = sys.A() * spd_inverse(M) * sys.A().transpose();
    quad_ = 0.25 * bt_pinv_.transpose() * AMA * bt_pinv_;
    quad_ = 0.5 * (quad_ + quad_.transpose());
    scalar_ = sys.is_scalar();
    if (scalar_) {
      inv_b_ = bt_pinv_(0, 0);
      k_ = quad_(0, 0);
    }
  }

  int dim() const override { return static_cast<int>(quad_.rows()); }
  std::string name() const override { return "derived-control-dual"; }
  FunctionKind kind() const override { return FunctionKind::NumericBiconjugate; }

  double value(const Vector& eta) const override {
    if (scalar_) return value1(eta(0));
    return -bregctl::dual_value(*p_, bt_pinv_ * eta) + eta.dot(quad_ * eta);
  }
  Vector gradient(const Vector& eta) const override {
    if (scalar_) return Vector::Constant(1, gradient1(eta(0)));
    return -bt_pinv_.transpose() * bregctl::dual_gradient(*p_, bt_pinv_ * eta) + 2.0 * quad_ * eta;
  }
  std::optional<Matrix> hessian(const Vector& eta) const override {
    auto h = bregctl::dual_hessian(*p_, bt_pinv_ * eta);
    if (!h) return std::nullopt;
    return Matrix(-bt_pinv_.transpose() * *h * bt_pinv_ + 2.0 * quad_);
  }

  double value1(double eta) const override {
    return -bregctl::dual_value1(*p_, inv_b_ * eta) + k_ * eta * eta;
  }
  double gradient1(double eta) const override {
    return -inv_b_ * bregctl::dual_gradient1(*p_, inv_b_ * eta) + 2.0 * k_ * eta;
  }
  std::optional<double> hessian1(double eta) const override {
    auto h = bregctl::dual_hessian1(*p_, inv_b_ * eta);
    if (!h) return std::nullopt;
    return -inv_b_ * inv_b_ * *h + 2.0 * k_;
  }
  double nearest_subgradient1(double eta, double) const override { return gradient1(eta); }

 private:
  FunctionPtr p_;
  Matrix bt_pinv_;
  Matrix quad_;
  bool scalar_ = false;
  double inv_b_ = 0.0;
  double k_ = 0.0;
};

/// p*(ξ) = −r*(Bᵀξ) + ¼ξᵀAM⁻¹Aᵀξ. Its biconjugate is the Lyapunov function p
/// matched to a control cost r.
class DerivedStateDual final : public ConvexFunction {
 public:
  DerivedStateDual(const LinearSystem& sys, FunctionPtr r, const Matrix& M)
      : r_(std::move(r)), B_(sys.B()) {
    quad_ = 0.25 * sys.A() * spd_inverse(M) * sys.A().transpose();
    quad_ = 0.5 * (quad_ + quad_.transpose());
    scalar_ = sys.is_scalar();
    if (scalar_) {
      b_ = B_(0, 0);
      k_ = quad_(0, 0);
    }
  }

  int dim() const override { return static_cast<int>(quad_.rows()); }
  std::string name() const override { return "derived-state-dual"; }
  FunctionKind kind() const override { return FunctionKind::NumericBiconjugate; }

  double value(const Vector& xi) const override {
    if (scalar_) return value1(xi(0));
    return -bregctl::dual_value(*r_, B_.transpose() * xi) + xi.dot(quad_ * xi);
  }
  Vector gradient(const Vector& xi) const override {
    if (scalar_) return Vector::Constant(1, gradient1(xi(0)));
    return -B_ * bregctl::dual_gradient(*r_, B_.transpose() * xi) + 2.0 * quad_ * xi;
  }
  std::optional<Matrix> hessian(const Vector& xi) const override {
    auto h = bregctl::dual_hessian(*r_, B_.transpose() * xi);
    if (!h) return std::nullopt;
    return Matrix(-B_ * *h * B_.transpose() + 2.0 * quad_);
  }

  double value1(double xi) const override { return -bregctl::dual_value1(*r_, b_ * xi) + k_ * xi * xi; }
  double gradient1(double xi) const override {
    return -b_ * bregctl::dual_gradient1(*r_, b_ * xi) + 2.0 * k_ * xi;
  }
  std::optional<double> hessian1(double xi) const override {
    auto h = bregctl::dual_hessian1(*r_, b_ * xi);
    if (!h) return std::nullopt;
    return -b_ * b_ * *h + 2.0 * k_;
  }
  double nearest_subgradient1(double xi, double) const override { return gradient1(xi); }

 private:
  FunctionPtr r_;
  Matrix B_;
  Matrix quad_;
  bool scalar_ = false;
  double b_ = 0.0;
  double k_ = 0.0;
};

namespace detail {

struct ConvexityVerdict {
  bool convex = true;
  double worst = 0.0;  // most negative scaled second difference or value
};

/// Convexity (second differences) and nonnegativity of f on lines through the
/// origin: the symmetric log grid for scalars, 24 directions otherwise.
inline ConvexityVerdict numeric_convexity(const ConvexFunction& f, const GridSpec& grid,
                                          double tol = 1e-9) {
  ConvexityVerdict v;
  auto record = [&](double worst_sd, double worst_val) {
    v.worst = std::min({v.worst, worst_sd, worst_val});
  };
  if (f.dim() == 1) {
    const auto xs = symmetric_log_grid(grid);
    double worst_val = 0.0;
    for (double x : xs) {
      double val = f.value1(x);
      worst_val = std::min(worst_val, val / (1.0 + std::abs(val)));
    }
    record(worst_second_difference([&](double x) { return f.value1(x); }, xs), worst_val);
  } else {
    GridSpec line = grid;
    line.points_per_axis = 201;
    const auto ts = symmetric_log_grid(line);
    for (const Vector& d : unit_directions(f.dim(), 24, grid.seed + 7)) {
      double worst_val = 0.0;
      auto along = [&](double t) {
        double val = f.value(t * d);
        worst_val = std::min(worst_val, val / (1.0 + std::abs(val)));
        return val;
      };
      double sd = worst_second_difference(along, ts);
      record(sd, worst_val);
    }
  }
  v.convex = v.worst >= -tol;
  return v;
}

inline void require_even(const ConvexFunction& f, const GridSpec& grid, const std::string& what) {
  for (const Vector& x : spread_samples(f.dim(), 40, grid)) {
    const double a = f.value(x), b = f.value(-x);
    if (!(std::isfinite(a) || std::isfinite(b))) continue;
    if (std::abs(a - b) > 1e-8 * (1.0 + std::abs(a)))
      throw ConfigError(what + " must be even; f(x) != f(-x) at a sampled point");
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// State cost first

/// M − ½AᵀMA ⪯ ½Aᵀ∇²q(x)A over the grid, plus an independent numeric verdict
/// on the convexity of the derived r̃*. Points where ∇²q is only
/// distributional (kinks) are skipped and counted.
inline FeasibilityReport check_M_given_q(const LinearSystem& sys, const ConvexFunction& q, const Matrix& M,
                                         const GridSpec& grid, bool numeric_verdict = true) {
  if (sys.m() < sys.n())
    throw UnsupportedConfigurationError(
        "state-cost-first design needs a fully or over-actuated system (m >= n); got m=" +
        std::to_string(sys.m()) + " < n=" + std::to_string(sys.n()));
  if (q.dim() != sys.n()) throw ConfigError("state cost dimension does not match the system");
  const Matrix& A = sys.A();
  const Matrix lhs = M - 0.5 * A.transpose() * M * A;
  FeasibilityReport rep;
  rep.route = "rConvex";
  double worst = kInf;
  for (const Vector& x : sample_points(sys.n(), grid)) {
    auto H = q.hessian(x);
    if (!H) {
      ++rep.points_skipped;
      continue;
    }
    ++rep.points_checked;
    worst = std::min(worst, min_eigenvalue(0.5 * A.transpose() * *H * A - lhs));
  }
  if (rep.points_checked == 0) throw ConfigError("no grid point has a defined Hessian of q");
  rep.margins.push_back({"M - A'MA/2 <= A' hess(q) A/2", worst});
  rep.feasible = worst >= -kFeasibilitySlack;
  if (numeric_verdict) {
    auto p = std::make_shared<PlusQuadratic>(std::shared_ptr<const ConvexFunction>(&q, [](auto*) {}), M);
    DerivedControlDual dual(sys, p, M);
    auto v = detail::numeric_convexity(dual, grid);
    rep.numeric_convexity_verdict = v.convex;
    rep.numeric_convexity_worst = v.worst;
  }
  return rep;
}

struct DerivationOptions {
  GridSpec grid{};
  /// Recognize quadratic inputs and return exact quadratic companions.
  bool use_catalog = true;
};

/// r := (r̃*)** for the state cost q and matrix M.
inline FunctionPtr derive_r_from_q(const LinearSystem& sys, FunctionPtr q, const Matrix& M,
                                   const DerivationOptions& opts = {}) {
  if (sys.m() < sys.n())
    throw UnsupportedConfigurationError("state-cost-first design needs m >= n");
  if (!sys.B_full_rank()) throw LinearAlgebraError("B must have full rank");
  detail::require_even(*q, opts.grid, "state cost q");
  if (auto quad = std::dynamic_pointer_cast<const Quadratic>(q); quad && opts.use_catalog) {
    const Matrix bt_pinv = pseudo_inverse(sys.B().transpose());
    const Matrix P = quad->weight() + M;
    const Matrix S = bt_pinv.transpose() *
                     (sys.A() * spd_inverse(M) * sys.A().transpose() - spd_inverse(P)) * bt_pinv;
    const double lam = min_eigenvalue(S);
    if (!(lam > 0.0))
      throw InfeasibleDerivationError("derived quadratic control cost is not positive definite", lam);
    return std::make_shared<Quadratic>(spd_inverse(S));
  }
  auto p = std::make_shared<PlusQuadratic>(q, M);
  auto dual = std::make_shared<DerivedControlDual>(sys, p, M);
  auto verdict = detail::numeric_convexity(*dual, opts.grid);
  if (!verdict.convex)
    throw InfeasibleDerivationError("derived r~* is not convex and nonnegative on the grid", verdict.worst);
  return std::make_shared<ConjugateOf>(dual, "r(derived from " + q->name() + ")");
}

// ---------------------------------------------------------------------------
// Control cost first

enum class ControlRoute { Auto, StableA, QuadraticBounds };

struct ControlCheckOptions {
  ControlRoute route = ControlRoute::Auto;
  /// ξᵀLξ ≤ r*(Bᵀξ) ≤ ξᵀUξ. Estimated on the grid when absent and r* is
  /// strongly convex there.
  std::optional<Matrix> L;
  std::optional<Matrix> U;
};

struct QuadraticBounds {
  Matrix L;
  Matrix U;
};

/// Isotropic bounds l·I ⪯ r*(Bᵀξ)/|ξ|² ⪯ u·I estimated on the grid. Returns
/// nullopt unless r*(Bᵀ·) has curvature bounded away from zero on the grid.
inline std::optional<QuadraticBounds> estimate_quadratic_bounds(const LinearSystem& sys, const ConvexFunction& r,
                                                                const GridSpec& grid) {
  const Matrix& B = sys.B();
  double lo = kInf, hi = 0.0, curvature = kInf;
  for (const Vector& xi : sample_points(sys.n(), grid)) {
    const double n2 = xi.squaredNorm();
    if (n2 == 0.0) continue;
    const Vector eta = B.transpose() * xi;
    auto h = dual_hessian(r, eta);
    if (!h) continue;
    curvature = std::min(curvature, min_eigenvalue(B * *h * B.transpose()));
    const double ratio = dual_value(r, eta) / n2;
    lo = std::min(lo, ratio);
    hi = std::max(hi, ratio);
  }
  if (!(curvature > 1e-12) || !(lo > 0.0)) return std::nullopt;
  const int n = sys.n();
  return QuadraticBounds{lo * Matrix::Identity(n, n), hi * Matrix::Identity(n, n)};
}

/// Stable A: ½(AM⁻¹Aᵀ − M⁻¹) ⪯ B∇²r*(Bᵀξ)Bᵀ ⪯ ½AM⁻¹Aᵀ over the grid.
/// Any A with quadratic bounds: U ⪯ ¼AM⁻¹Aᵀ ⪯ L + M⁻¹.
inline FeasibilityReport check_M_given_r(const LinearSystem& sys, const ConvexFunction& r, const Matrix& M,
                                         const GridSpec& grid, const ControlCheckOptions& opts = {}) {
  if (r.dim() != sys.m()) throw ConfigError("control cost dimension does not match the system");
  const Matrix& A = sys.A();
  const Matrix& B = sys.B();
  const Matrix Minv = spd_inverse(M);
  const Matrix AMA = A * Minv * A.transpose();
  const bool stable = is_stable(A);

  ControlRoute route = opts.route;
  if (route == ControlRoute::Auto) route = stable ? ControlRoute::StableA : ControlRoute::QuadraticBounds;
  if (route == ControlRoute::StableA && !stable)
    throw InsufficientHypothesesError(
        "the curvature-sandwich condition requires a stable A (spectral radius " +
        std::to_string(spectral_radius(A)) + " >= 1)");

  FeasibilityReport rep;
  if (route == ControlRoute::StableA) {
    rep.route = "pqConvex";
    const Matrix lower = 0.5 * (AMA - Minv);
    const Matrix upper = 0.5 * AMA;
    double worst_lo = kInf, worst_hi = kInf;
    for (const Vector& xi : sample_points(sys.n(), grid)) {
      auto h = dual_hessian(r, B.transpose() * xi);
      if (!h) {
        ++rep.points_skipped;
        continue;
      }
      ++rep.points_checked;
      const Matrix mid = B * *h * B.transpose();
      worst_lo = std::min(worst_lo, min_eigenvalue(mid - lower));
      worst_hi = std::min(worst_hi, min_eigenvalue(upper - mid));
    }
    if (rep.points_checked == 0) throw ConfigError("no grid point has a defined Hessian of r*");
    rep.margins.push_back({"(AM^-1A' - M^-1)/2 <= B hess(r*) B'", worst_lo});
    rep.margins.push_back({"B hess(r*) B' <= AM^-1A'/2", worst_hi});
  } else {
    rep.route = "cvxopt";
    std::optional<QuadraticBounds> bounds;
    if (opts.L && opts.U)
      bounds = QuadraticBounds{*opts.L, *opts.U};
    else
      bounds = estimate_quadratic_bounds(sys, r, grid);
    if (!bounds)
      throw InsufficientHypothesesError(
          "A is not stable and r* admits no strongly convex quadratic bounds on the grid; "
          "neither feasibility route applies");
    rep.notes.push_back("L and U identified with the lower and upper quadratic bounds on r*(B'xi)");
    rep.margins.push_back({"U <= AM^-1A'/4", min_eigenvalue(0.25 * AMA - bounds->U)});
    rep.margins.push_back({"AM^-1A'/4 <= L + M^-1", min_eigenvalue(bounds->L + Minv - 0.25 * AMA)});
    rep.points_checked = 1;
  }
  rep.feasible = rep.min_margin() >= -kFeasibilitySlack;
  return rep;
}

struct DerivedStateCost {
  FunctionPtr q;
  FunctionPtr p;
};

/// p := (p*)** with p*(ξ) = −r*(Bᵀξ) + ¼ξᵀAM⁻¹Aᵀξ, and q := p − xᵀMx.
inline DerivedStateCost derive_q_from_r(const LinearSystem& sys, FunctionPtr r, const Matrix& M,
                                        const DerivationOptions& opts = {}) {
  detail::require_even(*r, opts.grid, "control cost r");
  if (auto quad = std::dynamic_pointer_cast<const Quadratic>(r); quad && opts.use_catalog && quad->invertible()) {
    const Matrix S = sys.A() * spd_inverse(M) * sys.A().transpose() -
                     sys.B() * spd_inverse(quad->weight()) * sys.B().transpose();
    const double lam = min_eigenvalue(S);
    if (!(lam > 0.0))
      throw InfeasibleDerivationError("derived Lyapunov weight is not positive definite", lam);
    const Matrix P = spd_inverse(S);
    const Matrix Q = P - M;
    const double lq = min_eigenvalue(Q);
    if (lq < -kFeasibilitySlack)
      throw InfeasibleDerivationError("derived quadratic state cost is not positive semidefinite", lq);
    return {std::make_shared<Quadratic>(Q), std::make_shared<Quadratic>(P)};
  }
  auto dual = std::make_shared<DerivedStateDual>(sys, r, M);
  auto verdict = detail::numeric_convexity(*dual, opts.grid);
  if (!verdict.convex)
    throw InfeasibleDerivationError("derived p* is not convex and nonnegative on the grid", verdict.worst);
  auto p = std::make_shared<ConjugateOf>(dual, "p(derived from " + r->name() + ")");
  auto q = std::make_shared<PlusQuadratic>(p, -M);
  // q must be convex and nonnegative: second differences along grid lines.
  auto qv = detail::numeric_convexity(*q, opts.grid);
  if (!qv.convex)
    throw InfeasibleDerivationError("derived q is not convex and nonnegative on the grid", qv.worst);
  return {q, p};
}

// ---------------------------------------------------------------------------
// Controller

/// A state-feedback law x ↦ u.
class Controller {
 public:
  using Law = std::function<Vector(const Vector&)>;

  Controller(std::string label, int n, int m, Law law, std::optional<Matrix> M = std::nullopt)
      : label_(std::move(label)), n_(n), m_(m), law_(std::move(law)), M_(std::move(M)) {}

  const std::string& label() const { return label_; }
  int n() const { return n_; }
  int m() const { return m_; }
  const std::optional<Matrix>& M() const { return M_; }

  Vector feedback(const Vector& x) const {
    if (x.size() != n_) throw DomainError("controller: state dimension mismatch");
    return law_(x);
  }
  double feedback1(double x) const { return feedback(Vector::Constant(1, x))(0); }

 private:
  std::string label_;
  int n_;
  int m_;
  Law law_;
  std::optional<Matrix> M_;
};

/// u = ∇r*(−2BᵀA⁻ᵀMx).
inline Controller build_controller(const LinearSystem& sys, FunctionPtr r, const Matrix& M) {
  if (r->dim() != sys.m()) throw ConfigError("control cost dimension does not match the system");
  const Matrix gain = -2.0 * sys.B().transpose() * sys.A_inverse_transpose() * M;
  return Controller("bregman", sys.n(), sys.m(),
                    [r, gain](const Vector& x) { return dual_gradient(*r, gain * x); }, M);
}

/// u = −Fx.
inline Controller linear_controller(std::string label, const Matrix& F) {
  return Controller(std::move(label), static_cast<int>(F.cols()), static_cast<int>(F.rows()),
                    [F](const Vector& x) { return Vector(-F * x); });
}

// ---------------------------------------------------------------------------
// Optimality residuals

struct KktResidual {
  Vector stationarity;  // ∇r(u) + Bᵀ∇p(Ax + Bu)
  Vector costate;       // Aᵀ∇p(Ax + Bu) − 2Mx
  double max_norm() const { return std::max(stationarity.norm(), costate.norm()); }
};

/// At kinks the subgradient of p closest to satisfying the costate equation
/// is used, and then the subgradient of r closest to −Bᵀ∇p.
inline KktResidual kkt_residual(const LinearSystem& sys, const ConvexFunction& r, const ConvexFunction& p,
                                const Matrix& M, const Vector& x, const Vector& u) {
  const Vector ax = sys.A() * x;
  Vector y = ax + sys.B() * u;
  // Coordinates that cancel up to rounding sit on the kink at 0.
  const double snap = 1e-12 * (1.0 + ax.lpNorm<Eigen::Infinity>());
  for (Eigen::Index i = 0; i < y.size(); ++i)
    if (std::abs(y(i)) <= snap) y(i) = 0.0;
  const Vector target = 2.0 * M * x;
  Vector g;
  if (sys.A_invertible())
    g = p.nearest_subgradient(y, sys.A_inverse_transpose() * target);
  else
    g = p.gradient(y);
  const Vector btg = sys.B().transpose() * g;
  KktResidual res;
  res.stationarity = r.nearest_subgradient(u, -btg) + btg;
  res.costate = sys.A().transpose() * g - target;
  return res;
}

/// min_u r(u) + p(Ax + Bu), solved without reference to the feedback law.
inline double bellman_min_value(const LinearSystem& sys, const ConvexFunction& r, const ConvexFunction& p,
                                const Vector& x) {
  const Vector ax = sys.A() * x;
  if (sys.is_scalar()) {
    const double b = sys.B()(0, 0), a_x = ax(0);
    auto f = [&](double u) {
      double v = r.value1(u) + p.value1(a_x + b * u);
      return std::isfinite(v) ? v : kInf;
    };
    Interval dom = r.domain1();
    // Bracket the minimizer of the convex f by expanding from the origin.
    const double step0 = 1.0 + std::abs(a_x / b);
    double lo = std::max(dom.lo, -step0), hi = std::min(dom.hi, step0);
    for (int i = 0; i < 200 && f(lo) < f(0.5 * (lo + hi)) && lo > dom.lo; ++i)
      lo = std::max(dom.lo, lo - 2.0 * (hi - lo));
    for (int i = 0; i < 200 && f(hi) < f(0.5 * (lo + hi)) && hi < dom.hi; ++i)
      hi = std::min(dom.hi, hi + 2.0 * (hi - lo));
    auto [u, neg] = scalar::golden_section_max([&](double v) { return -f(v); }, lo, hi, 1e-14, 400);
    double best = -neg;
    for (double edge : {lo, hi}) best = std::min(best, f(edge));
    return best;
  }
  DualSolverOptions opts;
  opts.tol = 1e-10 * (1.0 + x.norm());
  if (sys.n() == sys.m()) {
    // Over the next state v = Ax + Bu, so kinks of p sit on coordinate zeros.
    Eigen::FullPivLU<Matrix> lu(sys.B());
    if (lu.isInvertible()) {
      const Matrix Binv = lu.inverse();
      auto G = [&](const Vector& v) { return r.value(Binv * (v - ax)) + p.value(v); };
      auto T = [&](const Vector& v) {
        const Vector c = Binv.transpose() * r.gradient(Binv * (v - ax));
        return Vector(p.nearest_subgradient(v, -c) + c);
      };
      auto HG = [&](const Vector& v) -> std::optional<Matrix> {
        auto hr = r.hessian(Binv * (v - ax));
        auto hp = p.hessian(v);
        if (!hr || !hp) return std::nullopt;
        return Matrix(Binv.transpose() * *hr * Binv + *hp);
      };
      return minimize_convex(G, T, HG, ax, opts, "bellman inner minimization").value;
    }
  }
  auto F = [&](const Vector& u) { return r.value(u) + p.value(ax + sys.B() * u); };
  auto S = [&](const Vector& u) {
    const Vector btg = sys.B().transpose() * p.gradient(ax + sys.B() * u);
    return Vector(r.nearest_subgradient(u, -btg) + btg);
  };
  auto H = [&](const Vector& u) -> std::optional<Matrix> {
    auto hr = r.hessian(u);
    auto hp = p.hessian(ax + sys.B() * u);
    if (!hr || !hp) return std::nullopt;
    return Matrix(*hr + sys.B().transpose() * *hp * sys.B());
  };
  return minimize_convex(F, S, H, Vector::Zero(sys.m()), opts, "bellman inner minimization").value;
}

// ---------------------------------------------------------------------------
// Certificate

/// A validated (M, q, r, p) with p = q + xᵀMx and the Riccati-like identity.
struct SynthesisCertificate {
  LinearSystem system = LinearSystem::scalar(1.0, 1.0);
  Matrix M;
  DesignMode mode = DesignMode::StateCostFirst;
  std::string family;                    // "elasticnet", "bangbang", "exponential", "quadratic", "custom"
  std::map<std::string, double> params;  // family parameters (m, t, eps, ...)
  FunctionPtr q;
  FunctionPtr r;
  FunctionPtr p;
  FeasibilityReport feasibility;
  GridSpec grid;
  Tolerances tolerances;
};

struct CertificateCheck {
  double min_eig_M = 0.0;
  double max_pqm_residual = 0.0;
  double max_riccati_residual = 0.0;  // relative to 1 + ¼ξᵀAM⁻¹Aᵀξ
  bool ok = false;
};

/// Relative residual of p*(ξ) + r*(Bᵀξ) = ¼ξᵀAM⁻¹Aᵀξ. Both conjugates are
/// computed numerically from the primal functions, independent of any closed
/// form used to build them.
inline double riccati_identity_residual(const LinearSystem& sys, const ConvexFunction& p, const ConvexFunction& r,
                                        const Matrix& M, const Vector& xi) {
  const double rhs = 0.25 * xi.dot(sys.A() * spd_inverse(M) * sys.A().transpose() * xi);
  const double lhs = numeric_dual_value(p, xi) + numeric_dual_value(r, sys.B().transpose() * xi);
  return std::abs(lhs - rhs) / (1.0 + std::abs(rhs));
}

inline double max_riccati_residual(const SynthesisCertificate& c, int samples = 200) {
  double worst = 0.0;
  for (const Vector& xi : spread_samples(c.system.n(), samples, c.grid))
    worst = std::max(worst, riccati_identity_residual(c.system, *c.p, *c.r, c.M, xi));
  return worst;
}

inline CertificateCheck validate_certificate(const SynthesisCertificate& c, int samples = 200) {
  CertificateCheck chk;
  chk.min_eig_M = min_eigenvalue(c.M);
  for (const Vector& x : spread_samples(c.system.n(), samples, c.grid)) {
    const double res = c.p->value(x) - c.q->value(x) - x.dot(c.M * x);
    chk.max_pqm_residual = std::max(chk.max_pqm_residual, std::abs(res) / (1.0 + std::abs(c.p->value(x))));
  }
  detail::require_even(*c.r, c.grid, "control cost r");
  chk.max_riccati_residual = max_riccati_residual(c, samples);
  chk.ok = chk.min_eig_M > 0.0 && chk.max_pqm_residual <= c.tolerances.riccati &&
           chk.max_riccati_residual <= c.tolerances.riccati;
  return chk;
}

inline Controller certificate_controller(const SynthesisCertificate& c) {
  return build_controller(c.system, c.r, c.M);
}

/// max over x of |min_u[r(u) + p(Ax+Bu)] − xᵀMx| / (1 + xᵀMx).
inline double bellman_fixed_point_check(const SynthesisCertificate& c, const std::vector<Vector>& xs) {
  double worst = 0.0;
  for (const Vector& x : xs) {
    const double target = x.dot(c.M * x);
    const double v = bellman_min_value(c.system, *c.r, *c.p, x);
    worst = std::max(worst, std::abs(v - target) / (1.0 + std::abs(target)));
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Search for M

struct SearchOptions {
  GridSpec grid{};
  Tolerances tolerances{};
  double m_lo = 1e-6;
  double m_hi = 1e3;
  int scan_points = 121;
  double rel_tol = 1e-6;
  int max_evaluations = 4000;
  ControlCheckOptions control{};
  /// Coarser grid used inside the matrix search loop; the final certificate
  /// is re-checked on `grid`.
  GridSpec search_grid{.points_per_axis = 201, .directions = 60, .radii = 8};
};

namespace detail {

inline FeasibilityReport check_mode(const LinearSystem& sys, const ConvexFunction& cost, DesignMode mode,
                                    const Matrix& M, const GridSpec& grid, const ControlCheckOptions& control) {
  if (mode == DesignMode::StateCostFirst) return check_M_given_q(sys, cost, M, grid, false);
  return check_M_given_r(sys, cost, M, grid, control);
}

inline std::vector<double> margin_values(const FeasibilityReport& r) {
  std::vector<double> out;
  for (const auto& m : r.margins) out.push_back(m.value);
  return out;
}

}  // namespace detail

/// Completes a certificate for a fixed M: derives the companion cost, runs the
/// full feasibility check, and re-validates the certificate invariants.
inline SynthesisCertificate certify(const LinearSystem& sys, FunctionPtr fixed_cost, DesignMode mode, const Matrix& M,
                                    const GridSpec& grid, const Tolerances& tol, const ControlCheckOptions& control = {},
                                    std::string family = "custom", std::map<std::string, double> params = {}) {
  SynthesisCertificate c{sys, M, mode, std::move(family), std::move(params), nullptr, nullptr, nullptr, {}, grid, tol};
  DerivationOptions dopts{grid, true};
  if (mode == DesignMode::StateCostFirst) {
    c.feasibility = check_M_given_q(sys, *fixed_cost, M, grid, true);
    c.q = fixed_cost;
    c.r = derive_r_from_q(sys, fixed_cost, M, dopts);
    c.p = std::make_shared<PlusQuadratic>(fixed_cost, M);
  } else {
    c.feasibility = check_M_given_r(sys, *fixed_cost, M, grid, control);
    c.r = fixed_cost;
    auto derived = derive_q_from_r(sys, fixed_cost, M, dopts);
    c.q = derived.q;
    c.p = derived.p;
  }
  return c;
}

/// Searches for M satisfying the feasibility condition of `mode` and returns a
/// validated certificate. Scalar systems bisect on m; matrix systems run a
/// coordinate search over M = diag(e^d) + vvᵀ on the eigenvalue margins.
inline SynthesisCertificate search_M(const LinearSystem& sys, FunctionPtr fixed_cost, DesignMode mode,
                                     Objective objective, const SearchOptions& opts = {},
                                     std::string family = "custom", std::map<std::string, double> params = {}) {
  const int n = sys.n();
  auto check = [&](const Matrix& M, const GridSpec& g) {
    return detail::check_mode(sys, *fixed_cost, mode, M, g, opts.control);
  };
  std::vector<double> best_margins;
  double best_seen = -kInf;
  auto remember = [&](const FeasibilityReport& r) {
    if (r.min_margin() > best_seen) {
      best_seen = r.min_margin();
      best_margins = detail::margin_values(r);
    }
  };

  Matrix M_star;
  if (sys.is_scalar()) {
    auto eval = [&](double m) {
      auto r = check(Matrix::Constant(1, 1, m), opts.grid);
      remember(r);
      return r;
    };
    const auto scan = logspace(opts.m_lo, opts.m_hi, opts.scan_points);
    std::vector<bool> ok(scan.size());
    std::vector<double> margin(scan.size());
    for (std::size_t i = 0; i < scan.size(); ++i) {
      auto r = eval(scan[i]);
      ok[i] = r.feasible;
      margin[i] = r.min_margin();
    }
    auto first = std::find(ok.begin(), ok.end(), true);
    if (first == ok.end())
      throw InfeasibleSynthesisError("no feasible m in [" + std::to_string(opts.m_lo) + ", " +
                                         std::to_string(opts.m_hi) + "]",
                                     best_margins);
    const std::size_t i_first = static_cast<std::size_t>(first - ok.begin());
    std::size_t i_last = i_first;
    while (i_last + 1 < ok.size() && ok[i_last + 1]) ++i_last;

    auto bisect = [&](double feasible, double infeasible) {
      for (int it = 0; it < 200 && std::abs(infeasible - feasible) > opts.rel_tol * feasible; ++it) {
        const double mid = std::sqrt(feasible * infeasible);
        if (eval(mid).feasible)
          feasible = mid;
        else
          infeasible = mid;
      }
      return feasible;
    };

    double m_star = 0.0;
    switch (objective) {
      case Objective::MaxMScalar:
        m_star = i_last + 1 < scan.size() ? bisect(scan[i_last], scan[i_last + 1]) : scan[i_last];
        break;
      case Objective::MinTrace:
        m_star = i_first > 0 ? bisect(scan[i_first], scan[i_first - 1]) : scan[i_first];
        break;
      case Objective::MaxMargin: {
        std::size_t i_best = i_first;
        for (std::size_t i = i_first; i <= i_last; ++i)
          if (margin[i] > margin[i_best]) i_best = i;
        const double lo = std::log(scan[i_best > i_first ? i_best - 1 : i_first]);
        const double hi = std::log(scan[i_best < i_last ? i_best + 1 : i_last]);
        auto [lm, val] = scalar::golden_section_max(
            [&](double l) { return eval(std::exp(l)).min_margin(); }, lo, hi, 1e-8, 100);
        (void)val;
        m_star = std::exp(lm);
        if (!eval(m_star).feasible) m_star = scan[i_best];
        break;
      }
    }
    M_star = Matrix::Constant(1, 1, m_star);
  } else {
    if (objective == Objective::MaxMScalar)
      throw ConfigError("objective max-m-scalar applies to scalar systems; use max-margin or min-trace");
    // θ = (d₁..dₙ, v₁..vₙ), M = diag(exp d) + v vᵀ.
    auto build = [&](const Vector& th) {
      Matrix M = Matrix(th.head(n).array().exp().matrix().asDiagonal());
      M += th.tail(n) * th.tail(n).transpose();
      return M;
    };
    int evals = 0;
    const double d_lo = std::log(opts.m_lo), d_hi = std::log(opts.m_hi);
    auto in_box = [&](const Vector& th) {
      return (th.head(n).array() >= d_lo).all() && (th.head(n).array() <= d_hi).all();
    };
    auto score = [&](const Vector& th) {
      if (!in_box(th)) return -kInf;
      ++evals;
      auto r = check(build(th), opts.search_grid);
      remember(r);
      return r.min_margin();
    };
    Vector theta = Vector::Zero(2 * n);
    double best = -kInf;
    for (double s : logspace(opts.m_lo, opts.m_hi, 61)) {
      Vector th = Vector::Zero(2 * n);
      th.head(n).setConstant(std::log(s));
      double sc = score(th);
      if (sc > best) {
        best = sc;
        theta = th;
      }
    }
    const double floor = opts.tolerances.margin_floor;
    double step = 0.5;
    while (step > 1e-6 && evals < opts.max_evaluations) {
      if (objective != Objective::MaxMargin && best >= floor) break;
      bool improved = false;
      for (int k = 0; k < 2 * n && evals < opts.max_evaluations; ++k) {
        for (double dir : {1.0, -1.0}) {
          Vector th = theta;
          th(k) += dir * step;
          const double sc = score(th);
          if (sc > best + 1e-15) {
            best = sc;
            theta = th;
            improved = true;
            break;
          }
        }
      }
      if (!improved) step *= 0.5;
    }
    if (best < floor)
      throw InfeasibleSynthesisError("no M with all margins >= margin_floor found within the budget", best_margins);
    if (objective == Objective::MinTrace) {
      // Shrink while feasible.
      double s = 0.5;
      while (s > 1e-6 && evals < opts.max_evaluations) {
        bool moved = false;
        for (int k = 0; k < n; ++k) {
          Vector th = theta;
          th(k) -= s;
          if (score(th) >= floor) {
            theta = th;
            moved = true;
          }
        }
        if (!moved) s *= 0.5;
      }
    }
    M_star = build(theta);
  }

  SynthesisCertificate c = certify(sys, fixed_cost, mode, M_star, opts.grid, opts.tolerances, opts.control,
                                   std::move(family), std::move(params));
  if (!c.feasibility.feasible)
    throw InfeasibleSynthesisError("selected M fails the full-grid feasibility check",
                                   detail::margin_values(c.feasibility));
  const auto chk = validate_certificate(c);
  if (!chk.ok)
    throw InfeasibleDerivationError("certificate invariants fail (Riccati residual " +
                                        std::to_string(chk.max_riccati_residual) + ")",
                                    chk.max_riccati_residual);
  return c;
}

}  // namespace bregctl
