#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <future>
#include <span>
#include <vector>

#include "bregctl/convex_function.hpp"
#include "bregctl/linear_system.hpp"
#include "bregctl/random.hpp"

namespace bregctl {

/// D_φ(x, y) = φ(x) − φ(y) − ∇φ(y)ᵀ(x − y).
inline double eval_bregman(const ConvexFunction& phi, const Vector& x, const Vector& y) {
  if (x.size() != phi.dim() || y.size() != phi.dim())
    throw DomainError("bregman divergence: point dimension does not match " + phi.name());
  const double fx = phi.value(x);
  const double fy = phi.value(y);
  if (!std::isfinite(fx) || !std::isfinite(fy))
    throw DomainError("bregman divergence: point outside the domain of " + phi.name());
  const Vector gy = phi.gradient(y);
  if (!gy.allFinite()) throw DomainError("bregman divergence: " + phi.name() + " is not differentiable at y");
  return fx - fy - gy.dot(x - y);
}

inline double eval_bregman1(const ConvexFunction& phi, double x, double y) {
  const double fx = phi.value1(x);
  const double fy = phi.value1(y);
  if (!std::isfinite(fx) || !std::isfinite(fy))
    throw DomainError("bregman divergence: point outside the domain of " + phi.name());
  const double gy = phi.gradient1(y);
  if (!std::isfinite(gy)) throw DomainError("bregman divergence: " + phi.name() + " is not differentiable at y");
  return fx - fy - gy * (x - y);
}

struct ExpectationReport {
  double lhs = 0.0;       // E[D_q(z, −w)]
  double rhs = 0.0;       // q(z) + constant
  double constant = 0.0;  // E[D_q(0, −w)], the noise floor
  double residual = 0.0;  // |lhs − rhs|
  double std_error = 0.0; // standard error of the paired difference
  std::uint64_t seed = 0;
  std::int64_t samples = 0;
  bool within(double sigmas = 4.0) const { return residual <= sigmas * std_error; }
};

/// Monte-Carlo check of E[D_q(z, −w)] = q(z) + E[D_q(0, −w)] for symmetric w.
/// Samples are split into fixed shards, each drawn from its own stream, and
/// partial sums are merged in shard order so the result depends only on seed.
inline ExpectationReport expectation_decomposition_check(const ConvexFunction& q, const NoiseModel& noise,
                                                         const Vector& z, std::int64_t samples,
                                                         std::uint64_t seed, int shards = 8) {
  if (samples < 1000) throw ConfigError("expectation check needs at least 1000 samples");
  if (z.size() != q.dim() || noise.dim() != q.dim())
    throw DomainError("expectation check: dimension mismatch");
  struct Partial {
    double sum_lhs = 0, sum_const = 0, sum_diff = 0, sum_diff_sq = 0;
  };
  const CounterRng rng(seed);
  const double qz = q.value(z);
  const Vector zero = Vector::Zero(q.dim());
  auto run_shard = [&](int shard) {
    Partial p;
    const std::int64_t begin = samples * shard / shards;
    const std::int64_t end = samples * (shard + 1) / shards;
    for (std::int64_t i = begin; i < end; ++i) {
      Vector w = noise.sample(rng, static_cast<std::uint64_t>(shard), static_cast<std::uint64_t>(i - begin));
      Vector minus_w = -w;
      double lhs = eval_bregman(q, z, minus_w);
      double c = eval_bregman(q, zero, minus_w);
      double d = lhs - qz - c;
      p.sum_lhs += lhs;
      p.sum_const += c;
      p.sum_diff += d;
      p.sum_diff_sq += d * d;
    }
    return p;
  };
  std::vector<std::future<Partial>> futures;
  futures.reserve(shards);
  for (int s = 0; s < shards; ++s) futures.push_back(std::async(std::launch::async, run_shard, s));
  Partial total;
  for (auto& f : futures) {
    Partial p = f.get();
    total.sum_lhs += p.sum_lhs;
    total.sum_const += p.sum_const;
    total.sum_diff += p.sum_diff;
    total.sum_diff_sq += p.sum_diff_sq;
  }
  const double n = static_cast<double>(samples);
  ExpectationReport r;
  r.seed = seed;
  r.samples = samples;
  r.lhs = total.sum_lhs / n;
  r.constant = total.sum_const / n;
  r.rhs = qz + r.constant;
  const double mean_diff = total.sum_diff / n;
  const double var = std::max(0.0, total.sum_diff_sq / n - mean_diff * mean_diff) * n / (n - 1.0);
  r.std_error = std::sqrt(var / n);
  r.residual = std::abs(r.lhs - r.rhs);
  return r;
}

/// Most negative change of slope of f over a sorted grid: 0 for a function
/// that is convex on the grid, negative where convexity is violated. Scaled by
/// the local step so it is comparable to a second derivative.
template <typename F>
double worst_second_difference(const F& f, std::span<const double> grid) {
  double worst = kInf;
  if (grid.size() < 3) return 0.0;
  std::vector<double> v(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) v[i] = f(grid[i]);
  for (std::size_t i = 1; i + 1 < grid.size(); ++i) {
    const double hl = grid[i] - grid[i - 1], hr = grid[i + 1] - grid[i];
    const double sl = (v[i] - v[i - 1]) / hl, sr = (v[i + 1] - v[i]) / hr;
    const double scale = 1.0 + std::abs(sl) + std::abs(sr);
    worst = std::min(worst, (sr - sl) / scale);
  }
  return worst;
}

struct Assumption1Report {
  double value_at_zero = 0.0;
  double gradient_at_zero = 0.0;  // norm
  double worst_evenness = 0.0;    // max |φ(x) − φ(−x)| relative
  double worst_negativity = 0.0;  // max(−φ(x), 0)
  double worst_convexity = 0.0;   // most negative scaled second difference
  bool ok(double tol = 1e-9) const {
    return std::abs(value_at_zero) <= tol && gradient_at_zero <= tol && worst_evenness <= tol &&
           worst_negativity <= tol && worst_convexity >= -tol;
  }
};

/// Checks φ(0) = 0, ∇φ(0) = 0, evenness, nonnegativity on the supplied points,
/// and convexity by second differences along the line through each point.
inline Assumption1Report check_assumption1(const ConvexFunction& phi, std::span<const Vector> points) {
  Assumption1Report r;
  const Vector zero = Vector::Zero(phi.dim());
  r.value_at_zero = phi.value(zero);
  r.gradient_at_zero = phi.nearest_subgradient(zero, zero).norm();
  std::vector<double> ts(41);
  for (int i = 0; i < 41; ++i) ts[i] = -1.0 + 0.05 * i;
  for (const Vector& x : points) {
    const double fx = phi.value(x), fm = phi.value(-x);
    if (!std::isfinite(fx) && !std::isfinite(fm)) continue;
    r.worst_evenness = std::max(r.worst_evenness, std::abs(fx - fm) / (1.0 + std::abs(fx)));
    r.worst_negativity = std::max(r.worst_negativity, -fx);
    auto along = [&](double t) {
      double v = phi.value(t * x);
      return std::isfinite(v) ? v : 1e300;
    };
    if (std::isfinite(fx)) r.worst_convexity = std::min(r.worst_convexity, worst_second_difference(along, ts));
  }
  return r;
}

}  // namespace bregctl
