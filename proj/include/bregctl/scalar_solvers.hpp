#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>

#include "bregctl/convex_function.hpp"

namespace bregctl::scalar {

inline constexpr int kMaxBisection = 400;
inline constexpr double kBracketLimit = 1e15;

/// Bracket [lo, hi] with g(lo) ≤ 0 ≤ g(hi) for a nondecreasing g, restricted to
/// `domain`. Returns nullopt when the domain is exhausted in one direction; the
/// flags tell which end failed. Boundary hits on a closed finite domain are
/// reported through `saturated_lo` / `saturated_hi` rather than as failures.
struct Bracket {
  double lo = 0.0;
  double hi = 0.0;
  bool saturated_lo = false;  // g(domain.lo) > 0: root lies at the left boundary
  bool saturated_hi = false;  // g(domain.hi) < 0: root lies at the right boundary
};

template <typename G>
std::optional<Bracket> bracket_increasing(const G& g, Interval domain, double start = 0.0,
                                          double initial_step = 1.0) {
  Bracket b;
  double c = std::clamp(start, domain.lo, domain.hi);
  if (!std::isfinite(c)) c = 0.0;
  auto inside = [&](double x) { return x > domain.lo && x < domain.hi; };
  if (!inside(c) && !(c == domain.lo && c == domain.hi)) {
    if (std::isfinite(domain.lo) && std::isfinite(domain.hi))
      c = 0.5 * (domain.lo + domain.hi);
    else if (std::isfinite(domain.lo))
      c = domain.lo + std::max(1.0, std::abs(domain.lo));
    else if (std::isfinite(domain.hi))
      c = domain.hi - std::max(1.0, std::abs(domain.hi));
  }

  double gc = g(c);
  if (gc == 0.0) return Bracket{c, c};

  if (gc < 0.0) {
    b.lo = c;
    double step = initial_step;
    double x = c;
    while (true) {
      double next = x + step;
      if (next >= domain.hi) {
        if (!std::isfinite(domain.hi)) return std::nullopt;
        if (g(domain.hi) < 0.0) {
          b.lo = b.hi = domain.hi;
          b.saturated_hi = true;
          return b;
        }
        b.hi = domain.hi;
        return b;
      }
      if (std::abs(next) > kBracketLimit) return std::nullopt;
      if (g(next) >= 0.0) {
        b.hi = next;
        return b;
      }
      b.lo = next;
      x = next;
      step *= 2.0;
    }
  }

  b.hi = c;
  double step = initial_step;
  double x = c;
  while (true) {
    double next = x - step;
    if (next <= domain.lo) {
      if (!std::isfinite(domain.lo)) return std::nullopt;
      if (g(domain.lo) > 0.0) {
        b.lo = b.hi = domain.lo;
        b.saturated_lo = true;
        return b;
      }
      b.lo = domain.lo;
      return b;
    }
    if (std::abs(next) > kBracketLimit) return std::nullopt;
    if (g(next) <= 0.0) {
      b.lo = next;
      return b;
    }
    b.hi = next;
    x = next;
    step *= 2.0;
  }
}

/// Bisection on a nondecreasing g over a valid bracket. Converges to adjacent
/// doubles; at a jump of g across zero it converges to the jump location.
template <typename G>
double bisect_increasing(const G& g, double lo, double hi) {
  for (int i = 0; i < kMaxBisection; ++i) {
    double mid = lo + 0.5 * (hi - lo);
    if (mid <= lo || mid >= hi) break;
    double gm = g(mid);
    if (gm < 0.0)
      lo = mid;
    else if (gm > 0.0)
      hi = mid;
    else
      return mid;
  }
  // Prefer the endpoint with the smaller residual magnitude.
  return std::abs(g(lo)) <= std::abs(g(hi)) ? lo : hi;
}

/// Golden-section maximization of a unimodal h on [lo, hi].
template <typename H>
std::pair<double, double> golden_section_max(const H& h, double lo, double hi,
                                             double x_tol = 1e-12, int max_iter = 300) {
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi;
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  double hc = h(c), hd = h(d);
  for (int i = 0; i < max_iter && (b - a) > x_tol * (1.0 + std::abs(a) + std::abs(b)); ++i) {
    if (hc >= hd) {
      b = d;
      d = c;
      hd = hc;
      c = b - inv_phi * (b - a);
      hc = h(c);
    } else {
      a = c;
      c = d;
      hc = hd;
      d = a + inv_phi * (b - a);
      hd = h(d);
    }
  }
  double best_x = a, best_h = h(a);
  for (double x : {c, d, b}) {
    double hx = h(x);
    if (hx > best_h) {
      best_h = hx;
      best_x = x;
    }
  }
  return {best_x, best_h};
}

}  // namespace bregctl::scalar
