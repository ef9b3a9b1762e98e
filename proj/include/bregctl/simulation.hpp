#pragma once

#include <cstdint>
#include <iomanip>
#include <limits>
#include <locale>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "bregctl/bregman.hpp"
#include "bregctl/linear_system.hpp"
#include "bregctl/random.hpp"
#include "bregctl/synthesis.hpp"

namespace bregctl {

/// x_{k+1} = Ax_k + Bu_k + w_k for k = 0..N−1.
struct Trajectory {
  std::vector<Vector> states;  // x_0..x_N
  std::vector<Vector> inputs;  // u_0..u_{N−1}
  std::vector<Vector> noises;  // w_0..w_{N−1}
  std::uint64_t seed = 0;
  std::string rng_algorithm{CounterRng::kAlgorithm};

  int horizon() const { return static_cast<int>(inputs.size()); }
};

/// Noise for step k is draw 0 of stream k.
inline Trajectory rollout(const LinearSystem& sys, const Controller& ctl, const Vector& x0, int horizon,
                          std::uint64_t seed) {
  if (horizon < 1) throw ConfigError("horizon must be >= 1, got " + std::to_string(horizon));
  if (x0.size() != sys.n()) throw ConfigError("x0 has length " + std::to_string(x0.size()) + ", expected " +
                                              std::to_string(sys.n()));
  const CounterRng rng(seed);
  Trajectory tr;
  tr.seed = seed;
  tr.states.reserve(horizon + 1);
  tr.inputs.reserve(horizon);
  tr.noises.reserve(horizon);
  tr.states.push_back(x0);
  for (int k = 0; k < horizon; ++k) {
    const Vector& x = tr.states.back();
    Vector u;
    try {
      u = ctl.feedback(x);
    } catch (const std::exception& e) {
      throw Error("controller failed at step " + std::to_string(k) + ": " + e.what());
    }
    Vector w = sys.noise().sample(rng, static_cast<std::uint64_t>(k));
    Vector next = sys.step(x, u, w);
    tr.inputs.push_back(std::move(u));
    tr.noises.push_back(std::move(w));
    tr.states.push_back(std::move(next));
  }
  return tr;
}

/// Largest |x_{k+1} − (Ax_k + Bu_k + w_k)| over the trajectory.
inline double dynamics_defect(const LinearSystem& sys, const Trajectory& tr) {
  double worst = 0.0;
  for (int k = 0; k < tr.horizon(); ++k)
    worst = std::max(worst, (tr.states[k + 1] - sys.step(tr.states[k], tr.inputs[k], tr.noises[k]))
                                .lpNorm<Eigen::Infinity>());
  return worst;
}

struct CostReport {
  /// Entry k is D_q(Ax_k + Bu_k, −w_k), the state term charged at x_{k+1}.
  std::vector<double> per_step_state_cost;
  /// Entry k is D_r(u_k, 0).
  std::vector<double> per_step_control_cost;
  /// q(x_{k+1}), for comparison with the state term.
  std::vector<double> per_step_plain_state_cost;
  /// p(x_k) for k = 0..N when p is supplied.
  std::vector<double> lyapunov_values;
  double average_cost = 0.0;
  /// Sample mean of D_q(0, −w_k) over the recorded noises.
  double noise_floor_estimate = 0.0;
};

inline void require_well_formed(const Trajectory& tr) {
  if (tr.inputs.empty()) throw MalformedTrajectoryError("trajectory has no steps");
  if (tr.states.size() != tr.inputs.size() + 1)
    throw MalformedTrajectoryError("trajectory needs N+1 states for N inputs");
  if (tr.noises.size() != tr.inputs.size())
    throw MalformedTrajectoryError("trajectory is missing its noise record (" + std::to_string(tr.noises.size()) +
                                   " noises for " + std::to_string(tr.inputs.size()) + " steps)");
}

inline CostReport evaluate_cost(const Trajectory& tr, const ConvexFunction& q, const ConvexFunction& r,
                                const ConvexFunction* p = nullptr) {
  require_well_formed(tr);
  const int N = tr.horizon();
  CostReport rep;
  rep.per_step_state_cost.reserve(N);
  rep.per_step_control_cost.reserve(N);
  rep.per_step_plain_state_cost.reserve(N);
  const Vector zero_u = Vector::Zero(tr.inputs[0].size());
  const Vector zero_x = Vector::Zero(tr.states[0].size());
  double total = 0.0, floor = 0.0;
  for (int k = 0; k < N; ++k) {
    const Vector& w = tr.noises[k];
    const Vector y = tr.states[k + 1] - w;  // Ax_k + Bu_k
    const double sc = eval_bregman(q, y, -w);
    const double cc = eval_bregman(r, tr.inputs[k], zero_u);
    rep.per_step_state_cost.push_back(sc);
    rep.per_step_control_cost.push_back(cc);
    rep.per_step_plain_state_cost.push_back(q.value(tr.states[k + 1]));
    total += sc + cc;
    floor += eval_bregman(q, zero_x, -w);
  }
  rep.average_cost = total / N;
  rep.noise_floor_estimate = floor / N;
  if (p)
    for (const Vector& x : tr.states) rep.lyapunov_values.push_back(p->value(x));
  return rep;
}

struct LyapunovReport {
  /// p(Ax_k + Bu_k) − p(x_k) + r(u_k) + q(x_k) for each step.
  std::vector<double> residuals;
  double max_abs_residual = 0.0;
  /// max |residual| / (1 + p(x_k)).
  double max_relative_residual = 0.0;
  bool noiseless = true;
  /// For noiseless rollouts: p(x_{k+1}) < p(x_k) at every step with x_k ≠ 0.
  bool strictly_decreasing = true;
  int first_non_decrease = -1;
};

inline LyapunovReport lyapunov_monitor(const LinearSystem& sys, const Trajectory& tr, const ConvexFunction& p,
                                       const ConvexFunction& q, const ConvexFunction& r) {
  require_well_formed(tr);
  LyapunovReport rep;
  for (const Vector& w : tr.noises)
    if (!w.isZero(0.0)) rep.noiseless = false;
  for (int k = 0; k < tr.horizon(); ++k) {
    const Vector& x = tr.states[k];
    const Vector& u = tr.inputs[k];
    const double px = p.value(x);
    const double res = p.value(sys.A() * x + sys.B() * u) - px + r.value(u) + q.value(x);
    rep.residuals.push_back(res);
    rep.max_abs_residual = std::max(rep.max_abs_residual, std::abs(res));
    rep.max_relative_residual = std::max(rep.max_relative_residual, std::abs(res) / (1.0 + std::abs(px)));
    // Below the smallest normal double, rounding decides the order.
    const bool resolvable = px >= std::numeric_limits<double>::min();
    if (rep.noiseless && !x.isZero(0.0) && resolvable && !(p.value(tr.states[k + 1]) < px) && rep.strictly_decreasing) {
      rep.strictly_decreasing = false;
      rep.first_non_decrease = k;
    }
  }
  if (!rep.noiseless) rep.strictly_decreasing = false;
  return rep;
}

/// Columns k, x0.., u0.., w0.., state_cost, control_cost, lyapunov; one row
/// per step k = 0..N−1. Values are written with 17 significant digits.
inline void write_trajectory_csv(std::ostream& os, const Trajectory& tr, const CostReport& cost) {
  require_well_formed(tr);
  const auto n = tr.states[0].size(), m = tr.inputs[0].size();
  os << "k";
  for (Eigen::Index i = 0; i < n; ++i) os << ",x" << i;
  for (Eigen::Index i = 0; i < m; ++i) os << ",u" << i;
  for (Eigen::Index i = 0; i < n; ++i) os << ",w" << i;
  os << ",state_cost,control_cost,lyapunov\n";
  std::ostringstream line;
  line.imbue(std::locale::classic());
  line << std::setprecision(17);
  for (int k = 0; k < tr.horizon(); ++k) {
    line.str("");
    line << k;
    for (Eigen::Index i = 0; i < n; ++i) line << ',' << tr.states[k](i);
    for (Eigen::Index i = 0; i < m; ++i) line << ',' << tr.inputs[k](i);
    for (Eigen::Index i = 0; i < n; ++i) line << ',' << tr.noises[k](i);
    line << ',' << cost.per_step_state_cost[k] << ',' << cost.per_step_control_cost[k] << ',';
    if (static_cast<std::size_t>(k) < cost.lyapunov_values.size())
      line << cost.lyapunov_values[k];
    else
      line << "nan";
    line << '\n';
    os << line.str();
  }
}

}  // namespace bregctl
