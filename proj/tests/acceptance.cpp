// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "bregctl/catalog.hpp"
#include "bregctl/cli.hpp"
#include "bregctl/families.hpp"
#include "bregctl/lqr.hpp"
#include "bregctl/random.hpp"
#include "bregctl/simulation.hpp"
#include "bregctl/synthesis.hpp"
#include "bregctl/value_iteration.hpp"

using namespace bregctl;
namespace fs = std::filesystem;

namespace {

Matrix m1(double v) { return Matrix::Constant(1, 1, v); }
Vector v1(double v) { return Vector::Constant(1, v); }

struct Draws {
  CounterRng rng;
  std::uint64_t stream = 0;
  explicit Draws(std::uint64_t seed) : rng(seed) {}
  Vector normal(int n) {
    Vector v(n);
    for (int i = 0; i < n; ++i) v(i) = rng.normal(stream, i);
    ++stream;
    return v;
  }
  Vector positive(int n) {
    Vector v(n);
    for (int i = 0; i < n; ++i) v(i) = 0.05 + 3.0 * rng.uniform(stream, i);
    ++stream;
    return v;
  }
  Matrix spd(int n) {
    Matrix G(n, n);
    for (int i = 0; i < n; ++i) G.col(i) = normal(n);
    return G * G.transpose() + 0.5 * Matrix::Identity(n, n);
  }
};

struct Verdict {
  bool pass = true;
  std::ostringstream detail;
  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

int failures = 0;

void report(int id, const std::string& title, const std::function<void(Verdict&)>& body) {
  Verdict v;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    body(v);
  } catch (const std::exception& e) {
    v.pass = false;
    v.detail << " [exception: " << e.what() << "]";
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!v.pass) ++failures;
  std::printf("%s %2d %s (%.2fs)%s\n", v.pass ? "PASS" : "FAIL", id, title.c_str(), secs, v.detail.str().c_str());
  std::fflush(stdout);
}

double rel(double err, double scale) { return std::abs(err) / (1.0 + std::abs(scale)); }

// Printed elastic-net control cost and law.
double elasticnet_r_printed(double a, double b, double eps, double m, double u) {
  const double d = a * a * (eps + m) - m;
  const double au = std::abs(u);
  if (au <= a * a / (2.0 * m * b)) return m * b * b / (a * a) * u * u;
  return m * b * b * (eps + m) / d * u * u - b * m / d * au + a * a / (4.0 * d);
}

double elasticnet_u_printed(double a, double b, double eps, double m, double x) {
  const double s = 2.0 * m * x / a;
  double u = -(a / b) * x;
  if (std::abs(s) > 1.0) u += (std::abs(s) - 1.0) * (s > 0 ? 1.0 : -1.0) / (2.0 * b * (eps + m));
  return u;
}

// Printed bang-bang state cost.
double bangbang_q_printed(double a, double b, double m, double t, double x) {
  const double ax = std::abs(x);
  if (ax <= a * a * t / (m * b) - t * b) return m * (1.0 / (a * a - b * b * m) - 1.0) * x * x;
  return m * (1.0 / (a * a) - 1.0) * x * x + 2.0 * m * b * t / (a * a) * ax + t * t * (m * b * b / (a * a) - 1.0);
}

// Positive root of K² − a²K − 1 = 0 (b = Q = R = 1).
double scalar_dare_root(double a) { return 0.5 * (a * a + std::sqrt(a * a * a * a + 4.0)); }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

int main() {
  report(1, "Bregman identities", [](Verdict& v) {
    const auto t0 = std::chrono::steady_clock::now();
    Draws s(1);
    NegativeEntropy ent(3);
    double worst_neg = 0.0, worst_cos = 0.0, worst_sq = 0.0;
    for (int k = 0; k < 1000; ++k) {
      const Quadratic quad(s.spd(3));
      // Non-negativity.
      {
        const Vector x = s.normal(3), y = s.normal(3);
        const Vector px = s.positive(3), py = s.positive(3);
        for (double d : {eval_bregman(quad, x, y), eval_bregman(ent, px, py)}) worst_neg = std::max(worst_neg, -d);
      }
      // Law of cosines.
      auto cosines = [&](const ConvexFunction& f, const Vector& x, const Vector& y, const Vector& z) {
        const double lhs = eval_bregman(f, x, y);
        const double rhs = eval_bregman(f, x, z) + eval_bregman(f, z, y) - (f.gradient(y) - f.gradient(z)).dot(x - z);
        worst_cos = std::max(worst_cos, rel(lhs - rhs, lhs));
      };
      cosines(quad, s.normal(3), s.normal(3), s.normal(3));
      cosines(ent, s.positive(3), s.positive(3), s.positive(3));
      // Completion of squares, quadratic pair: x* from the linear system.
      {
        const Matrix W1 = s.spd(3), W2 = 2.0 * s.spd(3);
        const Quadratic f1(W1), f2(W2), sum(Matrix(W1 + W2));
        const Vector x = s.normal(3), y = s.normal(3), z = s.normal(3);
        const Vector xs = (W1 + W2).ldlt().solve(W1 * y + W2 * z);
        const double lhs = eval_bregman(f1, x, y) + eval_bregman(f2, x, z);
        const double rhs = eval_bregman(sum, x, xs) + eval_bregman(f1, xs, y) + eval_bregman(f2, xs, z);
        worst_sq = std::max(worst_sq, rel(lhs - rhs, lhs));
      }
      // Completion of squares, entropy pair f1 = φ, f2 = cφ: log x* = (log y + c log z)/(1 + c).
      {
        const double c = 2.0;
        const Vector x = s.positive(3), y = s.positive(3), z = s.positive(3);
        const Vector xs = ((y.array().log() + c * z.array().log()) / (1.0 + c)).exp().matrix();
        const double lhs = eval_bregman(ent, x, y) + c * eval_bregman(ent, x, z);
        const double rhs = (1.0 + c) * eval_bregman(ent, x, xs) + eval_bregman(ent, xs, y) + c * eval_bregman(ent, xs, z);
        worst_sq = std::max(worst_sq, rel(lhs - rhs, lhs));
      }
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    v.detail << " nonneg=" << worst_neg << " cosines=" << worst_cos << " squares=" << worst_sq;
    v.require(worst_neg <= 1e-9, "non-negativity");
    v.require(worst_cos <= 1e-9, "law of cosines");
    v.require(worst_sq <= 1e-9, "completion of squares");
    v.require(secs < 5.0, "runtime < 5 s");
  });

  report(2, "Expectation decomposition", [](Verdict& v) {
    const auto t0 = std::chrono::steady_clock::now();
    const Quadratic q(m1(1.0));
    const NoiseModel noise = NoiseModel::gaussian(m1(1.0));
    for (double z : {0.0, 1.0, 2.0}) {
      const auto rep = expectation_decomposition_check(q, noise, v1(z), 1000000, 2024);
      v.detail << " z=" << z << ":" << rep.residual / std::max(rep.std_error, 1e-300) << "se";
      v.require(rep.residual <= 4.0 * rep.std_error || rep.residual == 0.0, "within 4 standard errors at z=" + std::to_string(z));
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    v.require(secs < 10.0, "runtime < 10 s");
  });

  report(3, "DARE baseline", [](Verdict& v) {
    const auto sys = LinearSystem::scalar(1.2, 1.0);
    const double K = solve_dare(sys, m1(1), m1(1))(0, 0);
    v.detail << " K=" << K << " oracle=" << scalar_dare_root(1.2);
    v.require(std::abs(K - scalar_dare_root(1.2)) <= 1e-4, "K vs scalar root");
    v.require(std::abs(K - 1.95216) <= 1e-4, "K vs 1.95216");
    const CounterRng rng(99);
    double worst = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
      const int n = 1 + trial % 4, m = 1 + (trial / 4) % 4;
      Matrix A(n, n), B(n, m);
      std::uint64_t idx = 0;
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) A(i, j) = rng.normal(trial, idx++);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) B(i, j) = rng.normal(trial, idx++);
      const LinearSystem s(A, B);
      const Matrix Q = Matrix::Identity(n, n), R = Matrix::Identity(m, m);
      const Matrix Ks = solve_dare(s, Q, R);
      worst = std::max(worst, dare_residual(s, Q, R, Ks) / (1.0 + Ks.norm()));
    }
    v.detail << " worst residual=" << worst;
    v.require(worst <= 1e-10, "residual <= 1e-10 on 50 systems");
  });

  report(4, "Elastic-net reproduction", [](Verdict& v) {
    const double a = 1.2, b = 1.0, eps = 0.01, m = 0.01;
    const auto sys = LinearSystem::scalar(a, b);
    const auto r = derive_r_from_q(sys, std::make_shared<ElasticNet>(1, eps), m1(m));
    const auto ctl = build_controller(sys, r, m1(m));
    const auto f = elasticnet_family({.a = a, .b = b, .m = m, .eps = eps});
    double wr = 0.0, wu = 0.0;
    for (int i = 0; i <= 2000; ++i) {
      const double x = -10.0 + 0.01 * i;
      wr = std::max(wr, std::abs(r->value1(x) - elasticnet_r_printed(a, b, eps, m, x)));
      wu = std::max(wu, std::abs(ctl.feedback1(x) - elasticnet_u_printed(a, b, eps, m, x)));
      wu = std::max(wu, std::abs(f.controller.feedback1(x) - elasticnet_u_printed(a, b, eps, m, x)));
    }
    const auto tr = rollout(sys, f.controller, v1(1.0), 5, 0);
    v.detail << " r err=" << wr << " u err=" << wu << " x1=" << tr.states[1](0);
    v.require(wr <= 1e-6, "derived r vs printed r");
    v.require(wu <= 1e-6, "controller vs printed law");
    v.require(tr.states[1](0) == 0.0, "dead-beat x1 = 0");
  });

  report(5, "Bang-bang reproduction", [](Verdict& v) {
    const double a = 0.9, b = 0.1, m = 0.7, t = 4.0;
    const auto sys = LinearSystem::scalar(a, b);
    const auto d = derive_q_from_r(sys, std::make_shared<BangBangCost>(t), m1(m));
    double wq = 0.0;
    for (int i = 0; i <= 1200; ++i) {
      const double x = -60.0 + 0.1 * i;
      wq = std::max(wq, std::abs(d.q->value1(x) - bangbang_q_printed(a, b, m, t, x)));
    }
    const auto f = bangbang_family({.a = a, .b = b, .m = m, .t = t});
    const auto noisy = family_system(f.params, NoiseModel::gaussian(m1(1.0)));
    double umax = 0.0;
    int steps = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const auto tr = rollout(noisy, f.controller, v1(10.0), 300, seed);
      for (const Vector& u : tr.inputs) {
        umax = std::max(umax, std::abs(u(0)));
        ++steps;
      }
    }
    v.detail << " q err=" << wq << " max|u|=" << umax << " over " << steps << " steps";
    v.require(wq <= 1e-6, "derived q vs printed q");
    v.require(umax <= 0.9, "|u| <= 0.9");
  });

  report(6, "Exponential reproduction", [](Verdict& v) {
    const double a = 0.99, b = 1.0, m = 0.3;
    const auto f = exponential_family({.a = a, .b = b, .m = m});
    const ExponentialCost numeric(false);
    double w = 0.0;
    for (int i = 0; i <= 2000; ++i) {
      const double x = -10.0 + 0.01 * i;
      w = std::max(w, std::abs(f.controller.feedback1(x) - numeric_dual_gradient1(numeric, -2.0 * b * m * x / a)));
    }
    const double u1 = f.controller.feedback1(1.0);
    const double oracle = -std::log1p(2.0 * m / a);
    v.detail << " composition err=" << w << " u(1)=" << u1 << " oracle=" << oracle;
    v.require(w <= 1e-8, "closed form vs dual gradient");
    v.require(std::abs(u1 - oracle) <= 1e-5, "u(1)");
  });

  report(7, "Certificate consistency", [](Verdict& v) {
    const std::vector<ClosedFormFamily> families{
        bangbang_family({.a = 0.9, .b = 0.1, .m = 0.7, .t = 4.0}), exponential_family({.a = 0.99, .b = 1.0, .m = 0.3}),
        elasticnet_family({.a = 1.2, .b = 1.0, .m = 0.01, .eps = 0.01}),
        elasticnet_family({.a = 1.2, .b = 1.0, .m = 0.07, .eps = 0.01})};
    for (const auto& f : families) {
      const auto c = family_certificate(f);
      const auto ctl = certificate_controller(c);
      const double ric = max_riccati_residual(c, 200);
      double kkt = 0.0;
      for (const Vector& x : spread_samples(1, 200, c.grid)) {
        const auto res = kkt_residual(c.system, *c.r, *c.p, c.M, x, ctl.feedback(x));
        kkt = std::max(kkt, res.max_norm() / (1.0 + (2.0 * c.M * x).norm()));
      }
      const double bell = bellman_fixed_point_check(c, spread_samples(1, 200, c.grid));
      double lyap = 0.0;
      bool decreasing = true;
      for (double x0 : {c.grid.scale, -c.grid.scale, 1.0, -0.3}) {
        const auto tr = rollout(c.system, ctl, v1(x0), 100, 0);
        const auto lm = lyapunov_monitor(c.system, tr, *c.p, *c.q, *c.r);
        lyap = std::max(lyap, lm.max_relative_residual);
        decreasing = decreasing && lm.strictly_decreasing;
      }
      const std::string tag = f.name + "(m=" + std::to_string(f.params.m).substr(0, 4) + ")";
      v.detail << " " << tag << ": ric=" << ric << " kkt=" << kkt << " bell=" << bell << " lyap=" << lyap;
      v.require(ric <= 1e-6, tag + " riccati");
      v.require(kkt <= 1e-6, tag + " kkt");
      v.require(bell <= 1e-6, tag + " bellman");
      v.require(lyap <= 1e-6, tag + " lyapunov");
      v.require(decreasing, tag + " strict decrease");
    }
  });

  report(8, "Value-iteration oracle", [](Verdict& v) {
    const auto t0 = std::chrono::steady_clock::now();
    ValueIterationOptions opt;
    opt.state_points = 2001;
    opt.quadrature_nodes = 21;
    opt.state_max = 5.0;
    const auto f = elasticnet_family({.a = 1.2, .b = 1.0, .m = 0.01, .eps = 0.01});
    const auto en = value_iteration_oracle(family_system(f.params, NoiseModel::gaussian(m1(1.0))), *f.q, *f.r, opt);
    double worst_en = 0.0;
    bool en_ok = en.converged;
    for (std::size_t i = 0; i < en.states.size(); ++i) {
      const double u = f.controller.feedback1(en.states[i]);
      const double dev = std::abs(en.policy[i] - u);
      worst_en = std::max(worst_en, dev);
      en_ok = en_ok && dev <= std::max(0.02 * std::abs(u), 2.0 * en.step());
    }
    const auto sys = LinearSystem::scalar(1.2, 1.0, NoiseModel::gaussian(m1(1.0)));
    const Quadratic q(m1(1.0)), r(m1(1.0));
    const auto lq = value_iteration_oracle(sys, q, r, opt);
    const double F = lqr_gain(sys, solve_dare(sys, m1(1), m1(1)), m1(1))(0, 0);
    double worst_gain = 0.0;
    for (std::size_t i = 0; i < lq.states.size(); ++i)
      if (lq.states[i] != 0.0) worst_gain = std::max(worst_gain, std::abs(-lq.policy[i] / lq.states[i] - F) / F);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    v.detail << " elastic-net max dev=" << worst_en << " lqr gain rel dev=" << worst_gain;
    v.require(en_ok, "elastic-net policy within max(2%, 2h)");
    v.require(lq.converged && worst_gain <= 0.02, "LQR gain within 2%");
    v.require(secs < 60.0, "runtime < 60 s");
  });

  report(9, "Quadratic specialization", [](Verdict& v) {
    Matrix A(2, 2), B(2, 2);
    A << 1.1, 0.3, 0.0, 0.8;
    B << 1.0, 0.2, 0.0, 0.7;
    const LinearSystem sys(A, B);
    const Matrix M = 0.2 * Matrix::Identity(2, 2);
    const auto c = certify(sys, std::make_shared<Quadratic>(Matrix::Identity(2, 2)), DesignMode::StateCostFirst, M,
                           GridSpec{}, Tolerances{});
    const auto rq = std::dynamic_pointer_cast<const Quadratic>(c.r);
    v.require(c.feasibility.feasible, "M feasible");
    v.require(static_cast<bool>(rq), "derived r is quadratic");
    if (!rq) return;
    const Matrix gain = -rq->weight().inverse() * B.transpose() * A.transpose().inverse() * M;
    const auto ctl = certificate_controller(c);
    double worst = 0.0;
    Draws s(9);
    for (int k = 0; k < 100; ++k) {
      const Vector x = 3.0 * s.normal(2);
      worst = std::max(worst, (ctl.feedback(x) - gain * x).norm() / (1.0 + x.norm()));
    }
    const double rho = spectral_radius(A + B * gain);
    v.detail << " gain err=" << worst << " spectral radius=" << rho;
    v.require(worst <= 1e-10, "feedback equals -R^-1 B' A^-T M x");
    v.require(rho < 1.0, "closed loop stable");
  });

  report(10, "Determinism", [](Verdict& v) {
    const fs::path base = fs::temp_directory_path() / "bregctl_acceptance";
    fs::remove_all(base);
    RunConfig cfg = load_run_config(std::string(BREGCTL_CONFIGS) + "/bangbang.json");
    std::ostringstream sink;
    for (const char* run : {"a", "b"}) {
      cfg.out_dir = (base / run).string();
      v.require(cmd_simulate(cfg, sink) == kExitOk, std::string("simulate run ") + run);
    }
    int files = 0;
    for (std::uint64_t seed : cfg.seeds) {
      const std::string name = "trajectory_seed" + std::to_string(seed) + ".csv";
      const std::string a = slurp(base / "a" / name), b = slurp(base / "b" / name);
      v.require(!a.empty() && a == b, name + " identical");
      ++files;
    }
    v.detail << " " << files << " CSVs compared";
  });

  std::printf("%d of 10 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
