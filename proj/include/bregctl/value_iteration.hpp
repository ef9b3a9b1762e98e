#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "bregctl/bregman.hpp"
#include "bregctl/linear_system.hpp"
#include "bregctl/scalar_solvers.hpp"

namespace bregctl {

struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;  // sum to 1
};

/// Gauss–Hermite rule for w ~ N(0, variance) via the Golub–Welsch eigenproblem.
inline QuadratureRule gauss_hermite(int count, double variance) {
  if (count < 1) throw ConfigError("quadrature needs at least one node");
  Matrix J = Matrix::Zero(count, count);
  for (int k = 1; k < count; ++k) J(k, k - 1) = J(k - 1, k) = std::sqrt(k / 2.0);
  Eigen::SelfAdjointEigenSolver<Matrix> es(J);
  QuadratureRule rule;
  const double scale = std::sqrt(2.0 * variance);
  for (int i = 0; i < count; ++i) {
    rule.nodes.push_back(scale * es.eigenvalues()(i));
    const double v0 = es.eigenvectors()(0, i);
    rule.weights.push_back(v0 * v0);
  }
  return rule;
}

struct ValueIterationOptions {
  double state_max = 5.0;
  int state_points = 2001;
  /// Inputs searched on [−input_max, input_max]; 0 picks 2·max(1, |a/b|)·state_max.
  double input_max = 0.0;
  int input_points = 81;
  int quadrature_nodes = 21;
  int max_sweeps = 2000;
  double tol = 1e-7;
  /// Golden-section refinement of the best grid input.
  bool refine = true;
};

struct ValueIterationResult {
  std::vector<double> states;
  std::vector<double> values;
  std::vector<double> policy;
  int sweeps = 0;
  double last_delta = 0.0;
  bool converged = false;
  double average_cost = 0.0;  // h(0) at the fixed point

  double step() const { return states.size() > 1 ? states[1] - states[0] : 0.0; }
};

namespace detail {

/// Catmull–Rom interpolation on a uniform grid (exact for quadratics), with
/// the quadratic through the origin beyond the ends.
class UniformInterpolant {
 public:
  UniformInterpolant(double lo, double h, const std::vector<double>& v) : lo_(lo), h_(h), v_(v) {}

  double operator()(double x) const {
    const int n = static_cast<int>(v_.size());
    const double hi = lo_ + h_ * (n - 1);
    if (x < lo_) return v_.front() * (x / lo_) * (x / lo_);
    if (x > hi) return v_.back() * (x / hi) * (x / hi);
    double pos = (x - lo_) / h_;
    int i = std::min(static_cast<int>(pos), n - 2);
    const double s = pos - i;
    const double p1 = v_[i], p2 = v_[i + 1];
    const double p0 = i > 0 ? v_[i - 1] : 2 * p1 - p2 + (i + 2 < n ? (v_[i + 2] - 2 * p2 + p1) : 0.0);
    const double p3 = i + 2 < n ? v_[i + 2] : 2 * p2 - p1 + (i > 0 ? (p2 - 2 * p1 + v_[i - 1]) : 0.0);
    return p1 + 0.5 * s * (p2 - p0 + s * (2 * p0 - 5 * p1 + 4 * p2 - p3 + s * (3 * (p1 - p2) + p3 - p0)));
  }

 private:
  double lo_, h_;
  const std::vector<double>& v_;
};

}  // namespace detail

/// Relative value iteration for the average-cost problem on a scalar system.
/// Stage cost r(u) + E_w D_q(ax + bu, −w); the table is shifted so V(0) = 0
/// after every sweep.
inline ValueIterationResult value_iteration_oracle(const LinearSystem& sys, const ConvexFunction& q,
                                                   const ConvexFunction& r, const ValueIterationOptions& opt = {}) {
  if (!sys.is_scalar()) throw UnsupportedConfigurationError("value iteration oracle supports scalar systems only");
  if (opt.state_points < 5 || opt.state_points % 2 == 0)
    throw ConfigError("state grid needs an odd number (>= 5) of points so that 0 is a node");
  const auto family = sys.noise().family();
  QuadratureRule rule;
  if (family == NoiseFamily::DegenerateZero || sys.noise().covariance()(0, 0) == 0.0)
    rule = {{0.0}, {1.0}};
  else if (family == NoiseFamily::Gaussian)
    rule = gauss_hermite(opt.quadrature_nodes, sys.noise().covariance()(0, 0));
  else
    throw ConfigError("value iteration oracle needs Gaussian or zero noise");

  const double a = sys.A()(0, 0), b = sys.B()(0, 0);
  const int N = opt.state_points;
  const double h = 2.0 * opt.state_max / (N - 1);
  const double lo = -opt.state_max;
  const int mid = (N - 1) / 2;
  const double umax = opt.input_max > 0.0 ? opt.input_max : 2.0 * std::max(1.0, std::abs(a / b)) * opt.state_max;
  const Interval udom = r.domain1();
  const double ulo = std::max(-umax, udom.lo), uhi = std::min(umax, udom.hi);

  ValueIterationResult res;
  res.states.resize(N);
  for (int i = 0; i < N; ++i) res.states[i] = lo + h * i;
  res.states[mid] = 0.0;
  std::vector<double> V(N, 0.0), next(N), policy(N, 0.0);

  // E_w D_q(y, −w) by quadrature.
  auto stage_state = [&](double y) {
    double s = 0.0;
    for (std::size_t j = 0; j < rule.nodes.size(); ++j) {
      const double w = rule.nodes[j];
      s += rule.weights[j] * (q.value1(y) - q.value1(-w) - q.gradient1(-w) * (y + w));
    }
    return s;
  };
  auto expected_next = [&](const detail::UniformInterpolant& Vf, double y) {
    double s = 0.0;
    for (std::size_t j = 0; j < rule.nodes.size(); ++j) s += rule.weights[j] * Vf(y + rule.nodes[j]);
    return s;
  };

  for (int sweep = 1; sweep <= opt.max_sweeps; ++sweep) {
    detail::UniformInterpolant Vf(lo, h, V);
    for (int i = 0; i < N; ++i) {
      const double x = res.states[i];
      auto objective = [&](double u) {
        const double ru = r.value1(u);
        if (!std::isfinite(ru)) return kInf;
        const double y = a * x + b * u;
        return ru + stage_state(y) + expected_next(Vf, y);
      };
      int best_j = 0;
      double best = kInf, best_u = 0.0;
      const double du = (uhi - ulo) / (opt.input_points - 1);
      for (int j = 0; j < opt.input_points; ++j) {
        const double u = ulo + du * j;
        const double v = objective(u);
        if (v < best) {
          best = v;
          best_u = u;
          best_j = j;
        }
      }
      if (opt.refine) {
        const double l = std::max(ulo, ulo + du * (best_j - 1)), rr = std::min(uhi, ulo + du * (best_j + 1));
        auto [u, neg] = scalar::golden_section_max([&](double v) { return -objective(v); }, l, rr, 1e-12, 200);
        if (-neg < best) {
          best = -neg;
          best_u = u;
        }
      }
      next[i] = best;
      policy[i] = best_u;
    }
    const double shift = next[mid];
    double delta = 0.0;
    for (int i = 0; i < N; ++i) {
      const double v = next[i] - shift;
      delta = std::max(delta, std::abs(v - V[i]));
      V[i] = v;
    }
    res.sweeps = sweep;
    res.last_delta = delta;
    res.average_cost = shift;
    if (delta <= opt.tol) {
      res.converged = true;
      break;
    }
  }
  res.values = V;
  res.policy = policy;
  return res;
}

}  // namespace bregctl
