#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "bregctl/convex_function.hpp"
#include "bregctl/random.hpp"

namespace bregctl {

/// Sample sets on which the universally quantified conditions are checked.
///
/// Scalars use a symmetric log-spaced grid with `points_per_axis` points
/// (including 0) whose magnitudes run from scale·10^-decades_below to
/// scale·10^decades_above. Higher dimensions use `directions` unit vectors
/// times `radii` log-spaced radii over the same magnitude range.
struct GridSpec {
  int points_per_axis = 2001;
  double scale = 1.0;
  double decades_below = 4.0;
  double decades_above = 2.0;
  int directions = 500;
  int radii = 20;
  std::uint64_t seed = 20240601;

  double min_magnitude() const { return scale * std::pow(10.0, -decades_below); }
  double max_magnitude() const { return scale * std::pow(10.0, decades_above); }
};

inline std::vector<double> logspace(double lo, double hi, int count) {
  std::vector<double> out(count);
  if (count == 1) {
    out[0] = lo;
    return out;
  }
  const double a = std::log10(lo), b = std::log10(hi);
  for (int i = 0; i < count; ++i) out[i] = std::pow(10.0, a + (b - a) * i / (count - 1));
  return out;
}

inline std::vector<double> linspace(double lo, double hi, int count) {
  std::vector<double> out(count);
  for (int i = 0; i < count; ++i) out[i] = count == 1 ? lo : lo + (hi - lo) * i / (count - 1);
  return out;
}

/// Sorted symmetric grid: −max … −min, 0, min … max.
inline std::vector<double> symmetric_log_grid(const GridSpec& spec) {
  const int half = std::max(1, (spec.points_per_axis - 1) / 2);
  auto pos = logspace(spec.min_magnitude(), spec.max_magnitude(), half);
  std::vector<double> out;
  out.reserve(2 * half + 1);
  for (auto it = pos.rbegin(); it != pos.rend(); ++it) out.push_back(-*it);
  out.push_back(0.0);
  out.insert(out.end(), pos.begin(), pos.end());
  return out;
}

inline std::vector<Vector> unit_directions(int n, int count, std::uint64_t seed) {
  const CounterRng rng(seed);
  std::vector<Vector> dirs;
  dirs.reserve(count);
  for (int k = 0; k < count; ++k) {
    Vector d(n);
    for (int i = 0; i < n; ++i) d(i) = rng.normal(static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(i));
    const double norm = d.norm();
    dirs.push_back(norm > 0.0 ? Vector(d / norm) : Vector(Vector::Unit(n, 0)));
  }
  return dirs;
}

/// Points in ℝⁿ for condition checks. For n = 1 this is the symmetric log grid.
inline std::vector<Vector> sample_points(int n, const GridSpec& spec) {
  std::vector<Vector> pts;
  if (n == 1) {
    for (double x : symmetric_log_grid(spec)) pts.push_back(Vector::Constant(1, x));
    return pts;
  }
  const auto radii = logspace(spec.min_magnitude(), spec.max_magnitude(), spec.radii);
  for (const Vector& d : unit_directions(n, spec.directions, spec.seed))
    for (double r : radii) pts.push_back(r * d);
  return pts;
}

/// `count` points (count/2 magnitudes, both signs for scalars; random
/// directions otherwise) spread log-uniformly over the grid's magnitude range.
inline std::vector<Vector> spread_samples(int n, int count, const GridSpec& spec) {
  std::vector<Vector> pts;
  if (n == 1) {
    for (double r : logspace(spec.min_magnitude(), spec.max_magnitude(), count / 2)) {
      pts.push_back(Vector::Constant(1, r));
      pts.push_back(Vector::Constant(1, -r));
    }
    return pts;
  }
  const auto dirs = unit_directions(n, count, spec.seed + 1);
  const auto radii = logspace(spec.min_magnitude(), spec.max_magnitude(), count);
  for (int k = 0; k < count; ++k) pts.push_back(radii[k] * dirs[k]);
  return pts;
}

}  // namespace bregctl
