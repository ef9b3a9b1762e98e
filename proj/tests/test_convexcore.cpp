#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "bregctl/bregman.hpp"
#include "bregctl/catalog.hpp"
#include "bregctl/conjugate.hpp"
#include "bregctl/grid.hpp"
#include "bregctl/random.hpp"

using namespace bregctl;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector x(v.size());
  int i = 0;
  for (double d : v) x(i++) = d;
  return x;
}

// sqrt(1 + x²) − 1 grows linearly, so its conjugate is +inf for |ξ| > 1.
class Pseudohuber final : public ScalarConvexFunction {
 public:
  std::string name() const override { return "pseudohuber"; }
  FunctionKind kind() const override { return FunctionKind::AnalyticClosedForm; }
  double value1(double x) const override { return std::sqrt(1.0 + x * x) - 1.0; }
  double gradient1(double x) const override { return x / std::sqrt(1.0 + x * x); }
  std::optional<double> hessian1(double x) const override { return std::pow(1.0 + x * x, -1.5); }
};

class Quartic final : public ScalarConvexFunction {
 public:
  std::string name() const override { return "quartic"; }
  FunctionKind kind() const override { return FunctionKind::AnalyticClosedForm; }
  double value1(double x) const override { return x * x * x * x; }
  double gradient1(double x) const override { return 4.0 * x * x * x; }
  std::optional<double> hessian1(double x) const override { return 12.0 * x * x; }
};

// Random points with a fixed seed.
struct Sampler {
  CounterRng rng{20240601};
  std::uint64_t stream = 0;
  Vector normal(int n, double scale = 1.0) {
    Vector v(n);
    for (int i = 0; i < n; ++i) v(i) = scale * rng.normal(stream, i);
    ++stream;
    return v;
  }
  Vector positive(int n) {
    Vector v(n);
    for (int i = 0; i < n; ++i) v(i) = 0.05 + 3.0 * rng.uniform(stream, i);
    ++stream;
    return v;
  }
};

Matrix random_spd(Sampler& s, int n) {
  Matrix G(n, n);
  for (int i = 0; i < n; ++i) G.col(i) = s.normal(n);
  return G * G.transpose() + 0.5 * Matrix::Identity(n, n);
}

}  // namespace

TEST(Bregman, SquaredEuclideanExample) {
  auto phi = half_squared_norm(2);
  EXPECT_DOUBLE_EQ(eval_bregman(*phi, vec({1, 0}), vec({0, 1})), 1.0);
}

TEST(Bregman, NegativeEntropyExamples) {
  NegativeEntropy phi(2);
  EXPECT_DOUBLE_EQ(eval_bregman(phi, vec({1, 1}), vec({1, 1})), 0.0);
  EXPECT_NEAR(eval_bregman(phi, vec({2, 1}), vec({1, 1})), 2.0 * std::log(2.0) - 1.0, 1e-15);
  EXPECT_NEAR(eval_bregman(phi, vec({2, 1}), vec({1, 1})), 0.386294, 1e-6);
}

TEST(Bregman, NegativeEntropyDomainError) {
  NegativeEntropy phi(2);
  EXPECT_THROW(eval_bregman(phi, vec({-1, 1}), vec({1, 1})), DomainError);
  EXPECT_THROW(eval_bregman(phi, vec({1, 1}), vec({0, 1})), DomainError);
}

TEST(Bregman, KullbackLeiblerForm) {
  // Oracle: Σ x log(x/y) − x + y.
  NegativeEntropy phi(3);
  Sampler s;
  for (int k = 0; k < 100; ++k) {
    Vector x = s.positive(3), y = s.positive(3);
    double kl = 0.0;
    for (int i = 0; i < 3; ++i) kl += x(i) * std::log(x(i) / y(i)) - x(i) + y(i);
    EXPECT_NEAR(eval_bregman(phi, x, y), kl, 1e-12 * (1.0 + kl));
  }
}

TEST(Bregman, NonNegativityAndIdentityOfIndiscernibles) {
  Sampler s;
  NegativeEntropy ent(3);
  auto quad = std::make_shared<Quadratic>(random_spd(s, 3));
  for (int k = 0; k < 1000; ++k) {
    Vector x = s.normal(3), y = s.normal(3);
    EXPECT_GE(eval_bregman(*quad, x, y), -1e-12);
    EXPECT_GT(eval_bregman(*quad, x, y), 0.0);
    EXPECT_EQ(eval_bregman(*quad, x, x), 0.0);
    Vector px = s.positive(3), py = s.positive(3);
    EXPECT_GE(eval_bregman(ent, px, py), -1e-12);
    EXPECT_GT(eval_bregman(ent, px, py), 0.0);
    EXPECT_EQ(eval_bregman(ent, px, px), 0.0);
  }
}

TEST(Bregman, LawOfCosines) {
  Sampler s;
  NegativeEntropy ent(3);
  auto quad = std::make_shared<Quadratic>(random_spd(s, 3));
  auto check = [](const ConvexFunction& f, const Vector& x, const Vector& y, const Vector& z) {
    const double lhs = eval_bregman(f, x, y);
    const double rhs = eval_bregman(f, x, z) + eval_bregman(f, z, y) - (f.gradient(y) - f.gradient(z)).dot(x - z);
    EXPECT_NEAR(lhs, rhs, 1e-9 * (1.0 + std::abs(lhs)));
  };
  for (int k = 0; k < 1000; ++k) {
    check(*quad, s.normal(3), s.normal(3), s.normal(3));
    check(ent, s.positive(3), s.positive(3), s.positive(3));
  }
}

TEST(Bregman, CompletionOfSquares) {
  Sampler s;
  for (int k = 0; k < 1000; ++k) {
    auto f1 = std::make_shared<Quadratic>(random_spd(s, 3));
    auto f2 = std::make_shared<Quadratic>(2.0 * random_spd(s, 3));
    const PlusQuadratic sum(f1, f2->weight());
    const Vector x = s.normal(3), y = s.normal(3), z = s.normal(3);
    // x* inverts the gradient of the sum.
    const Vector xstar = numeric_dual_gradient(sum, f1->gradient(y) + f2->gradient(z));
    const double lhs = eval_bregman(*f1, x, y) + eval_bregman(*f2, x, z);
    const double rhs = eval_bregman(sum, x, xstar) + eval_bregman(*f1, xstar, y) + eval_bregman(*f2, xstar, z);
    EXPECT_NEAR(lhs, rhs, 1e-9 * (1.0 + std::abs(lhs)));
  }
}

TEST(Dual, QuadraticSelfDual) {
  auto phi = half_squared_norm(2);
  EXPECT_DOUBLE_EQ(dual_value(*phi, vec({3, 4})), 12.5);
  EXPECT_NEAR(numeric_dual_value(*phi, vec({3, 4})), 12.5, 1e-9);
  const Vector xi = vec({-0.3, 7.0});
  EXPECT_TRUE(dual_gradient(*phi, xi).isApprox(xi, 1e-15));
  EXPECT_LT((numeric_dual_gradient(*phi, xi) - xi).norm(), 1e-9);
}

TEST(Dual, ZeroAtOrigin) {
  ExponentialCost numeric(false);
  ElasticNet en(1, 0.01);
  BangBangCost bb(4.0);
  for (const ConvexFunction* f : std::vector<const ConvexFunction*>{&numeric, &en, &bb}) {
    EXPECT_EQ(numeric_dual_value1(*f, 0.0), 0.0) << f->name();
    EXPECT_EQ(numeric_dual_gradient1(*f, 0.0), 0.0) << f->name();
  }
}

TEST(Dual, ExponentialNumericRoute) {
  ExponentialCost numeric(false);
  // Analytic oracle: (1+|ξ|)ln(1+|ξ|) − |ξ|.
  EXPECT_NEAR(dual_value1(numeric, 1.0), 2.0 * std::log(2.0) - 1.0, 1e-9);
  EXPECT_NEAR(dual_value1(numeric, 1.0), 0.386294, 1e-6);
  EXPECT_NEAR(dual_gradient1(numeric, std::numbers::e - 1.0), 1.0, 1e-9);
  ExponentialCost closed;
  for (double xi : {-30.0, -2.5, -0.1, 0.3, 1.0, 7.0, 100.0}) {
    EXPECT_NEAR(dual_value1(numeric, xi), *closed.conjugate_value1(xi), 1e-9 * (1.0 + std::abs(xi)));
    EXPECT_NEAR(dual_gradient1(numeric, xi), *closed.conjugate_gradient1(xi), 1e-9);
  }
}

TEST(Dual, UnboundedAndOutOfRange) {
  Pseudohuber f;
  EXPECT_THROW(dual_value1(f, 2.0), UnboundedDualError);
  EXPECT_THROW(dual_gradient1(f, -2.0), OutOfRangeError);
  EXPECT_NEAR(dual_gradient1(f, 0.6), 0.6 / std::sqrt(1.0 - 0.36), 1e-9);
}

TEST(Dual, BangBangSaturatesAtBudget) {
  BangBangCost bb(4.0);
  EXPECT_EQ(numeric_dual_gradient1(bb, 100.0), 4.0);
  EXPECT_EQ(numeric_dual_gradient1(bb, -100.0), -4.0);
  EXPECT_NEAR(numeric_dual_gradient1(bb, 3.0), 1.5, 1e-9);
  EXPECT_NEAR(numeric_dual_value1(bb, 100.0), 4.0 * 100.0 - 16.0, 1e-9);
}

TEST(Dual, ElasticNetMinimumNormAtKink) {
  ElasticNet en(1, 0.01);
  for (double xi : {-1.0, -0.5, 0.0, 0.25, 1.0}) EXPECT_EQ(numeric_dual_gradient1(en, xi), 0.0);
  // Soft threshold: (|ξ| − 1)/(2ε).
  EXPECT_NEAR(numeric_dual_gradient1(en, 3.0), 100.0, 1e-8);
  EXPECT_NEAR(numeric_dual_gradient1(en, -1.5), -25.0, 1e-8);
}

TEST(Dual, FenchelYoungAndInversion) {
  Sampler s;
  ExponentialCost ex(false);
  ElasticNet en(1, 0.05);
  Pseudohuber ph;
  auto quad = std::make_shared<Quadratic>(random_spd(s, 3));
  for (int k = 0; k < 200; ++k) {
    const double x = 3.0 * s.normal(1)(0);
    for (const ConvexFunction* f : std::vector<const ConvexFunction*>{&ex, &en, &ph}) {
      if (x == 0.0) continue;
      const double g = f->gradient1(x);
      EXPECT_NEAR(numeric_dual_value1(*f, g), x * g - f->value1(x), 1e-9 * (1.0 + std::abs(x * g))) << f->name();
      EXPECT_NEAR(f->gradient1(numeric_dual_gradient1(*f, g)), g, 1e-9 * (1.0 + std::abs(g))) << f->name();
    }
    const Vector xv = s.normal(3);
    const Vector gv = quad->gradient(xv);
    EXPECT_NEAR(numeric_dual_value(*quad, gv), xv.dot(gv) - quad->value(xv), 1e-8 * (1.0 + std::abs(xv.dot(gv))));
    EXPECT_LT((quad->gradient(numeric_dual_gradient(*quad, gv)) - gv).norm(), 1e-8 * (1.0 + gv.norm()));
  }
}

TEST(Dual, Biconjugation) {
  // φ** = φ: conjugate of the exact conjugate, computed numerically.
  for (FunctionPtr f : std::vector<FunctionPtr>{std::make_shared<ExponentialCost>(), std::make_shared<ElasticNet>(1, 0.02),
                                                std::make_shared<BangBangCost>(2.0)}) {
    // ConjugateOf(f) is f*; its conjugate is taken by numeric maximization.
    const ConjugateOf fstar(f);
    for (double x : {-1.9, -0.7, -0.01, 0.0, 0.3, 1.5}) {
      const double got = numeric_dual_value1(fstar, x);
      EXPECT_NEAR(got, f->value1(x), 1e-9 * (1.0 + std::abs(f->value1(x)))) << f->name() << " x=" << x;
    }
  }
}

TEST(Dual, HessianInverseIdentity) {
  ExponentialCost ex;
  Sampler s;
  for (int k = 0; k < 100; ++k) {
    const double xi = 5.0 * s.normal(1)(0);
    const double u = dual_gradient1(ex, xi);
    EXPECT_NEAR(*ex.hessian1(u) * *dual_hessian1(ex, xi), 1.0, 1e-6);
  }
  auto quad = std::make_shared<Quadratic>(random_spd(s, 3));
  const Vector xi = s.normal(3);
  const Matrix prod = *quad->hessian(dual_gradient(*quad, xi)) * *dual_hessian(*quad, xi);
  EXPECT_LT((prod - Matrix::Identity(3, 3)).norm(), 1e-6);
}

TEST(Expectation, QuadraticGaussian) {
  auto q = std::make_shared<Quadratic>(Matrix::Constant(1, 1, 1.0));
  const auto noise = NoiseModel::gaussian(Matrix::Constant(1, 1, 1.0));
  const auto rep = expectation_decomposition_check(*q, noise, vec({2.0}), 1000000, 7);
  // E[(z + w)²] = z² + 1.
  EXPECT_NEAR(rep.lhs, 5.0, 0.02);
  EXPECT_NEAR(rep.rhs, 5.0, 0.02);
  EXPECT_NEAR(rep.constant, 1.0, 0.01);
  EXPECT_TRUE(rep.within(4.0)) << rep.residual << " vs " << rep.std_error;
  EXPECT_EQ(rep.seed, 7u);
}

TEST(Expectation, ZeroPointGivesConstant) {
  ElasticNet q(1, 0.01);
  const auto rep = expectation_decomposition_check(q, NoiseModel::gaussian(Matrix::Constant(1, 1, 1.0)), vec({0.0}),
                                                   10000, 3);
  EXPECT_DOUBLE_EQ(rep.lhs, rep.constant);
  EXPECT_TRUE(rep.within(4.0));
}

TEST(Expectation, QuarticUniform) {
  Quartic q;
  // w ~ U(−1, 1) has variance 1/3. Oracle: E[1 + 4w³ + 3w⁴] = 1 + 3/5.
  const auto noise = NoiseModel(NoiseFamily::Uniform, Matrix::Constant(1, 1, 1.0 / 3.0));
  const auto rep = expectation_decomposition_check(q, noise, vec({1.0}), 1000000, 11);
  EXPECT_NEAR(rep.lhs, 1.6, 0.005);
  EXPECT_NEAR(rep.constant, 0.6, 0.005);
  EXPECT_TRUE(rep.within(4.0)) << rep.residual << " vs " << rep.std_error;
}

TEST(Expectation, RejectsTooFewSamples) {
  auto q = half_squared_norm(1);
  EXPECT_THROW(expectation_decomposition_check(*q, NoiseModel::gaussian(Matrix::Identity(1, 1)), vec({1.0}), 999, 1),
               ConfigError);
}

TEST(Expectation, ShardedResultDependsOnlyOnSeed) {
  auto q = half_squared_norm(2);
  const auto noise = NoiseModel::gaussian(Matrix::Identity(2, 2));
  const auto a = expectation_decomposition_check(*q, noise, vec({1.0, -1.0}), 20000, 5);
  const auto b = expectation_decomposition_check(*q, noise, vec({1.0, -1.0}), 20000, 5);
  EXPECT_EQ(a.lhs, b.lhs);
  EXPECT_EQ(a.std_error, b.std_error);
}

TEST(Assumption1, CatalogFunctions) {
  GridSpec g;
  const auto pts = spread_samples(1, 200, g);
  for (FunctionPtr f : std::vector<FunctionPtr>{std::make_shared<ExponentialCost>(), std::make_shared<ElasticNet>(1, 0.01),
                                                half_squared_norm(1)}) {
    EXPECT_TRUE(check_assumption1(*f, pts).ok()) << f->name();
  }
}

TEST(Random, PhiloxKnownAnswer) {
  // Random123 known-answer vector: zero counter, zero key.
  const CounterRng rng(0);
  const auto block = rng.block(0, 0);
  EXPECT_EQ(block[0], 0x6627e8d5u);
  EXPECT_EQ(block[1], 0xe169c58du);
  EXPECT_EQ(block[2], 0xbc57ac4cu);
  EXPECT_EQ(block[3], 0x9b00dbd8u);
}

TEST(Random, NormalMoments) {
  const CounterRng rng(42);
  double s = 0, s2 = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal(3, i);
    s += z;
    s2 += z * z;
  }
  EXPECT_NEAR(s / n, 0.0, 0.01);
  EXPECT_NEAR(s2 / n, 1.0, 0.01);
}

TEST(Noise, RejectsAsymmetricFamily) {
  EXPECT_THROW(noise_family_from_string("exponential"), ConfigError);
  EXPECT_EQ(noise_family_from_string("rademacher"), NoiseFamily::Rademacher);
}
