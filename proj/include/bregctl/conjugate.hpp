#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "bregctl/convex_function.hpp"
#include "bregctl/scalar_solvers.hpp"

namespace bregctl {

/// Stationarity tolerance for numeric conjugation.
inline constexpr double kTolDual = 1e-9;

struct DualSolverOptions {
  double tol = kTolDual;
  int max_iter = 5000;
};

namespace detail {

inline double dual_argmax1(const ConvexFunction& phi, double xi, bool for_value) {
  auto g = [&](double u) { return phi.gradient1(u) - xi; };
  // A zero subgradient at the origin is the minimum-norm answer for ξ = 0.
  Interval dom = phi.domain1();
  if (dom.contains(0.0) && phi.nearest_subgradient1(0.0, xi) == xi) return 0.0;
  auto br = scalar::bracket_increasing(g, dom);
  if (!br) {
    if (for_value)
      throw UnboundedDualError(phi.name() + ": conjugate is +inf at xi=" + std::to_string(xi));
    throw OutOfRangeError(phi.name() + ": xi=" + std::to_string(xi) +
                          " lies outside the range of the gradient");
  }
  if (br->saturated_lo || br->saturated_hi || br->lo == br->hi) return br->lo;
  return scalar::bisect_increasing(g, br->lo, br->hi);
}

}  // namespace detail

/// ∇φ*(ξ) for scalar φ by inverting φ'(u) = ξ with bracketing bisection.
/// At a kink the kink location is returned; past a closed domain bound the
/// boundary point is returned (the subdifferential there is a half-line).
inline double numeric_dual_gradient1(const ConvexFunction& phi, double xi) {
  return detail::dual_argmax1(phi, xi, false);
}

/// φ*(ξ) for scalar φ: golden-section maximization of uξ − φ(u) on the
/// stationarity bracket, polished by the bisection root.
inline double numeric_dual_value1(const ConvexFunction& phi, double xi) {
  double u_root = detail::dual_argmax1(phi, xi, true);
  auto h = [&](double u) { return u * xi - phi.value1(u); };
  double best = h(u_root);
  // Golden section on a small bracket around the root guards against a
  // misplaced root when φ' is only piecewise available.
  double width = 1e-6 * (1.0 + std::abs(u_root));
  Interval dom = phi.domain1();
  double lo = std::max(dom.lo, u_root - width), hi = std::min(dom.hi, u_root + width);
  if (hi > lo) {
    auto [x, hx] = scalar::golden_section_max(h, lo, hi);
    (void)x;
    if (std::isfinite(hx) && hx > best) best = hx;
  }
  return best;
}

struct MinimizeResult {
  Vector x;
  double value = 0.0;
  double residual = 0.0;  // norm of the steepest-descent subgradient at x
  int iterations = 0;
};

/// Minimizes a convex F by steepest descent along the minimum-norm
/// subgradient, Newton-scaled where a positive definite Hessian is available,
/// with Armijo backtracking. `subgradient(x)` must return the minimum-norm
/// element of ∂F(x) (or the gradient where F is smooth).
///
/// Kinks on coordinate hyperplanes (ℓ1 terms) are handled by also trying the
/// step with sign-crossing coordinates set to zero, and by leaving coordinates
/// that sit at zero with a zero subgradient out of the Newton solve.
template <typename F, typename S, typename H>
MinimizeResult minimize_convex(const F& objective, const S& subgradient, const H& hessian, Vector x,
                               const DualSolverOptions& opts, const std::string& what) {
  double f = objective(x);
  if (!std::isfinite(f)) throw DomainError(what + ": starting point outside the domain");
  const Eigen::Index n = x.size();
  double residual = kInf;
  for (int it = 0; it < opts.max_iter; ++it) {
    Vector s = subgradient(x);
    residual = s.norm();
    if (residual <= opts.tol) return {x, f, residual, it};

    std::vector<Eigen::Index> free;
    Vector probe = x;
    const double delta = 1e-12 * (1.0 + x.lpNorm<Eigen::Infinity>());
    for (Eigen::Index i = 0; i < n; ++i) {
      if (x(i) == 0.0 && std::abs(s(i)) <= 1e-3 * opts.tol) {
        s(i) = 0.0;
        probe(i) = delta;  // only for a Hessian off the kink; the row is dropped
        continue;
      }
      free.push_back(i);
      if (x(i) == 0.0) probe(i) = -delta * (s(i) > 0.0 ? 1.0 : -1.0);
    }
    Vector dir = -s;
    std::optional<Matrix> h = hessian(x);
    if (!h) h = hessian(probe);
    if (h && !free.empty()) {
      const auto k = static_cast<Eigen::Index>(free.size());
      Matrix hf(k, k);
      Vector sf(k);
      for (Eigen::Index a = 0; a < k; ++a) {
        sf(a) = s(free[a]);
        for (Eigen::Index b = 0; b < k; ++b) hf(a, b) = (*h)(free[a], free[b]);
      }
      Eigen::LDLT<Matrix> ldlt(hf);
      if (ldlt.info() == Eigen::Success && (ldlt.vectorD().array() > 0.0).all()) {
        Vector newton = -ldlt.solve(sf);
        if (newton.allFinite() && newton.dot(sf) < 0.0) {
          dir.setZero();
          for (Eigen::Index a = 0; a < k; ++a) dir(free[a]) = newton(a);
        }
      }
    }

    double step = 1.0;
    bool accepted = false;
    for (int k = 0; k < 80; ++k) {
      Vector cand = x + step * dir;
      Vector proj = cand;
      for (Eigen::Index i = 0; i < n; ++i) {
        const double side = x(i) != 0.0 ? x(i) : -s(i);
        if (proj(i) * side < 0.0) proj(i) = 0.0;
      }
      double best_f = kInf;
      Vector* best = nullptr;
      for (Vector* c : {&cand, &proj}) {
        const double fc = objective(*c);
        if (std::isfinite(fc) && fc <= f + 1e-4 * s.dot(*c - x) && fc < best_f) {
          best_f = fc;
          best = c;
        }
      }
      if (best) {
        x = std::move(*best);
        f = best_f;
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      // No Armijo step: the iterate sits at a kink or at machine precision.
      if (residual <= std::sqrt(opts.tol)) return {x, f, residual, it};
      break;
    }
    if (x.norm() > scalar::kBracketLimit) throw UnboundedDualError(what + ": iterates diverge");
  }
  throw ConvergenceError(what + " did not converge", residual);
}

/// ∇φ*(ξ) for general φ: the minimizer of φ(u) − ξᵀu.
inline Vector numeric_dual_gradient(const ConvexFunction& phi, const Vector& xi,
                                    const DualSolverOptions& opts = {}) {
  if (phi.dim() == 1) return Vector::Constant(1, numeric_dual_gradient1(phi, xi(0)));
  if (xi.size() != phi.dim()) throw DomainError("dual point dimension mismatch");
  DualSolverOptions scaled = opts;
  scaled.tol = opts.tol * (1.0 + xi.norm());
  auto result = minimize_convex([&](const Vector& v) { return phi.value(v) - xi.dot(v); },
                                [&](const Vector& v) { return Vector(phi.nearest_subgradient(v, xi) - xi); },
                                [&](const Vector& v) { return phi.hessian(v); },
                                Vector::Zero(phi.dim()), scaled, phi.name() + " gradient inversion");
  return result.x;
}

inline double numeric_dual_value(const ConvexFunction& phi, const Vector& xi,
                                 const DualSolverOptions& opts = {}) {
  if (phi.dim() == 1) return numeric_dual_value1(phi, xi(0));
  Vector u = numeric_dual_gradient(phi, xi, opts);
  return xi.dot(u) - phi.value(u);
}

/// φ*(ξ): closed form when the function provides one, otherwise numeric.
inline double dual_value(const ConvexFunction& phi, const Vector& xi) {
  if (auto v = phi.conjugate_value(xi)) return *v;
  return numeric_dual_value(phi, xi);
}

inline double dual_value1(const ConvexFunction& phi, double xi) {
  if (auto v = phi.conjugate_value1(xi)) return *v;
  return numeric_dual_value1(phi, xi);
}

/// ∇φ*(ξ) = (∇φ)⁻¹(ξ): closed form when available, otherwise numeric inversion.
inline Vector dual_gradient(const ConvexFunction& phi, const Vector& xi) {
  if (auto g = phi.conjugate_gradient(xi)) return *g;
  return numeric_dual_gradient(phi, xi);
}

inline double dual_gradient1(const ConvexFunction& phi, double xi) {
  if (auto g = phi.conjugate_gradient1(xi)) return *g;
  return numeric_dual_gradient1(phi, xi);
}

/// ∇²φ*(ξ): closed form when available, otherwise [∇²φ(∇φ*(ξ))]⁻¹.
inline std::optional<Matrix> dual_hessian(const ConvexFunction& phi, const Vector& xi) {
  if (auto h = phi.conjugate_hessian(xi)) return h;
  Vector u = dual_gradient(phi, xi);
  auto h = phi.hessian(u);
  if (!h) return std::nullopt;
  Eigen::FullPivLU<Matrix> lu(*h);
  if (!lu.isInvertible()) return std::nullopt;
  return lu.inverse();
}

inline std::optional<double> dual_hessian1(const ConvexFunction& phi, double xi) {
  if (auto h = phi.conjugate_hessian1(xi)) return h;
  auto h = phi.hessian1(dual_gradient1(phi, xi));
  if (!h || *h <= 0.0) return std::nullopt;
  return 1.0 / *h;
}

}  // namespace bregctl
