#include <gtest/gtest.h>

#include <cmath>

#include "bregctl/families.hpp"
#include "bregctl/simulation.hpp"

using namespace bregctl;

namespace {

Matrix m1(double v) { return Matrix::Constant(1, 1, v); }

ScalarFamilyParams bangbang_paper() { return {.a = 0.9, .b = 0.1, .m = 0.7, .t = 4.0}; }
ScalarFamilyParams exponential_paper() { return {.a = 0.99, .b = 1.0, .m = 0.3}; }
ScalarFamilyParams elasticnet_paper(double m = 0.01) { return {.a = 1.2, .b = 1.0, .m = m, .eps = 0.01}; }

std::vector<ClosedFormFamily> paper_families() {
  return {bangbang_family(bangbang_paper()), exponential_family(exponential_paper()),
          elasticnet_family(elasticnet_paper(0.01)), elasticnet_family(elasticnet_paper(0.07))};
}

// Jump of f across x0: f just above minus f just below.
template <typename F>
double jump(const F& f, double x0) {
  const double d = 1e-13 * std::abs(x0);
  return f(x0 + d) - f(x0 - d);
}

std::string throws_message(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const FamilyInfeasibilityError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(BangBang, PrintedControllerExamples) {
  const auto f = bangbang_family(bangbang_paper());
  EXPECT_NEAR(f.controller.feedback1(10.0), -(0.1 * 0.7 / 0.9) * 10.0, 1e-15);
  EXPECT_NEAR(f.controller.feedback1(10.0), -0.7778, 1e-4);
  EXPECT_DOUBLE_EQ(f.controller.feedback1(100.0), -0.9);
  EXPECT_DOUBLE_EQ(f.controller.feedback1(-100.0), 0.9);
  EXPECT_EQ(f.controller.feedback1(0.0), 0.0);
}

TEST(BangBang, ControlCostHasClosedDomain) {
  const auto f = bangbang_family(bangbang_paper());
  EXPECT_DOUBLE_EQ(f.r->value1(4.0), 16.0);
  EXPECT_DOUBLE_EQ(f.r->value1(3.0), 9.0);
  EXPECT_TRUE(std::isinf(f.r->value1(4.0001)));
}

TEST(BangBang, Validation) {
  auto p = bangbang_paper();
  p.m = 81.0;  // a² − b²m = 0
  const auto msg = throws_message([&] { bangbang_family(p); });
  EXPECT_NE(msg.find("a^2 - b^2 m > 0"), std::string::npos) << msg;
  p = bangbang_paper();
  p.t = 0.0;
  EXPECT_THROW(bangbang_family(p), FamilyInfeasibilityError);
}

TEST(Exponential, PrintedControllerExamples) {
  const auto f = exponential_family(exponential_paper());
  // ln(1 + 0.60606) = 0.473784; the tabulated ≈ −0.47386 rounds differently.
  EXPECT_NEAR(f.controller.feedback1(1.0), -std::log1p(2.0 * 0.3 / 0.99), 1e-15);
  EXPECT_NEAR(f.controller.feedback1(1.0), -0.47386, 1e-4);
  EXPECT_EQ(f.controller.feedback1(0.0), 0.0);
}

TEST(Exponential, ControllerMatchesDualGradient) {
  const auto f = exponential_family(exponential_paper());
  ExponentialCost numeric(false);
  for (int i = 0; i <= 2000; ++i) {
    const double x = -10.0 + 0.01 * i;
    const double xi = -2.0 * 1.0 * 0.3 * x / 0.99;
    EXPECT_NEAR(f.controller.feedback1(x), numeric_dual_gradient1(numeric, xi), 1e-8) << "x=" << x;
    EXPECT_NEAR(f.controller.feedback1(x), dual_gradient1(*f.r, xi), 1e-12) << "x=" << x;
  }
}

TEST(Exponential, TabulatedStateCostMatchesDirectEvaluation) {
  const ExponentialStateCost q(exponential_paper());
  for (int i = 0; i <= 4000; ++i) {
    const double x = -200.0 + 0.1 * i + 0.0137;
    EXPECT_NEAR(q.value1(x), q.exact_value(x), 1e-8 * (1.0 + std::abs(q.exact_value(x)))) << "x=" << x;
  }
  EXPECT_EQ(q.value1(0.0), 0.0);
  EXPECT_NEAR(q.value1(350.0), q.exact_value(350.0), 1e-12 * q.exact_value(350.0));
}

TEST(Exponential, Validation) {
  auto p = exponential_paper();
  p.a = 1.2;
  EXPECT_NE(throws_message([&] { exponential_family(p); }).find("a^2 <= 1"), std::string::npos);
  p = exponential_paper();
  p.m = 0.6;
  EXPECT_NE(throws_message([&] { exponential_family(p); }).find("a^2 > 2 m b^2"), std::string::npos);
}

TEST(ElasticNet, PrintedControllerExamples) {
  const auto small = elasticnet_family(elasticnet_paper(0.01));
  EXPECT_DOUBLE_EQ(small.controller.feedback1(1.0), -1.2);
  EXPECT_EQ(small.controller.feedback1(0.0), 0.0);
  const auto mid = elasticnet_family(elasticnet_paper(0.07));
  const double expected = -12.0 + (2.0 * 0.07 * 10.0 / 1.2 - 1.0) / (2.0 * 0.08);
  EXPECT_NEAR(mid.controller.feedback1(10.0), expected, 1e-12);
  EXPECT_NEAR(mid.controller.feedback1(10.0), -10.9583, 1e-4);
  EXPECT_NEAR(mid.controller.feedback1(-10.0), -expected, 1e-12);
}

TEST(ElasticNet, Validation) {
  ScalarFamilyParams p{.a = 0.5, .b = 1.0, .m = 0.01, .eps = 0.01};
  const auto msg = throws_message([&] { elasticnet_family(p); });
  EXPECT_NE(msg.find("a^2 (eps + m) - m > 0"), std::string::npos) << msg;
  p.b = 0.0;
  EXPECT_THROW(elasticnet_family(p), FamilyInfeasibilityError);
}

TEST(Families, PrintedControllerMatchesDualGradientLaw) {
  for (const auto& f : {exponential_family(exponential_paper()), elasticnet_family(elasticnet_paper(0.01)),
                        elasticnet_family(elasticnet_paper(0.07))}) {
    const auto ctl = build_controller(family_system(f.params), f.r, m1(f.params.m));
    // Spans both branches: the elastic-net breakpoint is at a/(2m) ≤ 60.
    for (int i = 0; i < 2001; ++i) {
      const double x = -200.0 + 0.2 * i;
      EXPECT_NEAR(f.controller.feedback1(x), ctl.feedback1(x), 1e-6 * (1.0 + std::abs(x))) << f.name << " x=" << x;
    }
  }
}

TEST(Families, BangBangPrintedSaturationDiffersFromDualGradient) {
  const auto p = bangbang_paper();
  const auto f = bangbang_family(p);
  const auto ctl = build_controller(family_system(p), f.r, m1(p.m));
  const double threshold = p.a * p.t / (p.b * p.m);
  for (int i = 0; i < 2001; ++i) {
    const double x = -200.0 + 0.2 * i;
    if (std::abs(x) <= threshold) {
      EXPECT_NEAR(f.controller.feedback1(x), ctl.feedback1(x), 1e-9) << x;
    } else {
      // Printed law saturates at a, the dual-gradient law at the budget t.
      EXPECT_DOUBLE_EQ(f.controller.feedback1(x), -p.a * sign(x));
      EXPECT_DOUBLE_EQ(ctl.feedback1(x), -p.t * sign(x));
    }
  }
}

TEST(Families, BranchContinuity) {
  const auto bb = bangbang_paper();
  const BangBangStateCost q(bb);
  EXPECT_LE(std::abs(jump([&](double x) { return q.value1(x); }, q.breakpoint())), 1e-9);
  EXPECT_LE(std::abs(jump([&](double x) { return q.value1(x); }, -q.breakpoint())), 1e-9);
  const auto bf = bangbang_family(bb);
  const auto dual_law = build_controller(family_system(bb), bf.r, m1(bb.m));
  const double threshold = bb.a * bb.t / (bb.b * bb.m);
  EXPECT_LE(std::abs(jump([&](double x) { return dual_law.feedback1(x); }, threshold)), 1e-9);
  // The printed law jumps from −t to −a at the threshold.
  EXPECT_NEAR(jump([&](double x) { return bf.controller.feedback1(x); }, threshold), bb.t - bb.a, 1e-9);

  for (double m : {0.01, 0.07}) {
    const auto p = elasticnet_paper(m);
    const ElasticNetControlCost r(p);
    EXPECT_LE(std::abs(jump([&](double u) { return r.value1(u); }, r.breakpoint())), 1e-9 * r.breakpoint());
    const auto f = elasticnet_family(p);
    EXPECT_LE(std::abs(jump([&](double x) { return f.controller.feedback1(x); }, p.a / (2.0 * p.m))), 1e-9);
  }
}

TEST(Families, RiccatiIdentityAtPaperParameters) {
  for (const auto& f : paper_families()) {
    const auto c = family_certificate(f);
    EXPECT_LE(max_riccati_residual(c, 200), 1e-6) << f.name << " m=" << f.params.m;
    EXPECT_TRUE(validate_certificate(c, 200).ok) << f.name;
  }
}

TEST(Families, NoiselessConvergenceFromTen) {
  for (const auto& f : paper_families()) {
    const auto tr = rollout(family_system(f.params), f.controller, Vector::Constant(1, 10.0), 200, 0);
    EXPECT_LT(std::abs(tr.states.back()(0)), 1e-3) << f.name << " m=" << f.params.m;
  }
}

TEST(Families, ElasticNetDeadBeat) {
  const auto f = elasticnet_family(elasticnet_paper(0.01));
  const auto tr = rollout(family_system(f.params), f.controller, Vector::Constant(1, 1.0), 3, 0);
  EXPECT_EQ(tr.states[1](0), 0.0);
}

TEST(Families, LookupByName) {
  EXPECT_EQ(make_family("bangbang", bangbang_paper()).name, "bangbang");
  EXPECT_EQ(make_family("exponential", exponential_paper()).mode, DesignMode::ControlCostFirst);
  EXPECT_EQ(make_family("elasticnet", elasticnet_paper()).mode, DesignMode::StateCostFirst);
  EXPECT_THROW(make_family("safety", bangbang_paper()), ConfigError);
  EXPECT_EQ(family_names().size(), 3u);
}
