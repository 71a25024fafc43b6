#include <cmath>

#include <gtest/gtest.h>

#include "lindyn/integrators.hpp"
#include "lindyn/network.hpp"

using namespace lindyn;

namespace {

ScalingPoint manual_point(Index d, Index w, double sigma2) {
  ScalingPoint p;
  p.d = d;
  p.w = w;
  p.sigma2 = sigma2;
  p.sigma2w = sigma2 * static_cast<double>(w);
  p.gamma_w = 1.0;
  p.gamma_sigma2 = 0.0;
  return p;
}

}  // namespace

TEST(InitNetwork, ZeroVarianceGivesZeroWeights) {
  const FactorNetwork s = init_network(manual_point(5, 7, 0.0), 3);
  EXPECT_EQ(s.w1.norm(), 0.0);
  EXPECT_EQ(s.w2.norm(), 0.0);
  EXPECT_EQ(s.w1.rows(), 7);
  EXPECT_EQ(s.w2.cols(), 7);
}

TEST(InitNetwork, GramInitMatchesFactorsForAnyBlockSize) {
  const ScalingPoint p = scaling_point_for_width(6, 23, -0.5, 50.0, 1.0);
  const FactorNetwork f = init_network(p, 8);
  const GramNetwork ref = to_gram(f);
  for (Index block : {1, 5, 23, 100}) {
    const GramNetwork g = init_gram(p, 8, block);
    EXPECT_LE((g.product - ref.product).norm(), 1e-13);
    EXPECT_LE((g.c1 - ref.c1).norm(), 1e-13);
    EXPECT_LE((g.c2 - ref.c2).norm(), 1e-13);
    EXPECT_EQ(g.width, 23);
  }
}

TEST(Product, Examples) {
  FactorNetwork s{Matrix::Zero(4, 3), Matrix::Ones(3, 4), 0};
  EXPECT_EQ(product(s).norm(), 0.0);
  FactorNetwork i{Matrix::Identity(3, 3), Matrix::Identity(3, 3), 0};
  EXPECT_TRUE(product(i).isIdentity());
}

TEST(GdStep, StationaryAndZeroStep) {
  const Task t = make_task(4, 1, 2);
  // W2 = I (d x w with w = d), W1 = A* + E makes G = 0.
  FactorNetwork s{t.observed, Matrix::Identity(4, 4), 0};
  const FactorNetwork n = gd_step(s, t, 0.7);
  EXPECT_LE((n.w1 - s.w1).norm(), 1e-14);
  EXPECT_LE((n.w2 - s.w2).norm(), 1e-14);
  const FactorNetwork r = init_network(scaling_point_for_width(4, 6, 0.0, 50.0, 1.0), 1);
  const FactorNetwork z = gd_step(r, t, 0.0);
  EXPECT_TRUE(z.w1 == r.w1 && z.w2 == r.w2);
  EXPECT_EQ(z.step, 1u);
}

TEST(GdStep, GramRecursionTracksFactorGd) {
  const Task t = make_task(6, 2, 4);
  const ScalingPoint p = scaling_point_for_width(6, 15, -0.5, 50.0, t.a_star_op());
  FactorNetwork f = init_network(p, 9);
  GramNetwork g = to_gram(f);
  for (int k = 0; k < 100; ++k) {
    f = gd_step(f, t, 0.3);
    g = gd_step(g, t, 0.3);
  }
  const GramNetwork ref = to_gram(f);
  EXPECT_LE((g.product - ref.product).norm() / ref.product.norm(), 1e-11);
  EXPECT_LE((g.c1 - ref.c1).norm() / ref.c1.norm(), 1e-11);
  EXPECT_LE((g.c2 - ref.c2).norm() / ref.c2.norm(), 1e-11);
  EXPECT_EQ(g.step, 100u);
}

TEST(GdStep, DivergesWithHugeRate) {
  const Task t = make_task(4, 1, 2);
  FactorNetwork s = init_network(scaling_point_for_width(4, 4, 0.0, 50.0, 1.0), 1);
  EXPECT_THROW(
      {
        for (int k = 0; k < 2000; ++k) s = gd_step(s, t, 1e3);
      },
      Error);
}

TEST(Conservation, PerStepIncrementExact) {
  const Task t = make_task(4, 2, 1);
  FactorNetwork s = init_network(scaling_point_for_width(4, 4, 0.0, 50.0, 1.0), 1);
  for (int k = 0; k < 10; ++k) {
    const Matrix predicted = conserved_increment(s, t, 0.2);
    const FactorNetwork n = gd_step(s, t, 0.2);
    EXPECT_LE((conserved_quantity(n) - conserved_quantity(s) - predicted).cwiseAbs().maxCoeff(), 1e-12);
    s = n;
  }
  EXPECT_EQ(invariant_drift(s, s), 0.0);
}

TEST(ScStep, ScalarHandExample) {
  Matrix b(1, 1);
  b << 2.0;
  const Task t = task_from_matrices(b, Matrix::Zero(1, 1), 1);
  const ScalingPoint p = manual_point(1, 1, 0.0);
  const ProductMatrix out = sc_step({Matrix::Constant(1, 1, 1.0), Mode::SelfConsistent, 0}, t, p, 0.25);
  EXPECT_NEAR(out.a(0, 0), 2.0, 1e-15);
}

TEST(ScStep, AtZeroEqualsLazy) {
  const Task t = make_task(5, 2, 3);
  const ScalingPoint p = manual_point(5, 10, 0.07);
  const ProductMatrix sc = sc_step({Matrix::Zero(5, 5), Mode::SelfConsistent, 0}, t, p, 0.4);
  const ProductMatrix lz = lazy_step({Matrix::Zero(5, 5), Mode::Lazy, 0}, t, p, 0.4);
  EXPECT_LE((sc.a - lz.a).cwiseAbs().maxCoeff(), 1e-13);
}

TEST(ScStep, BalancedPreservesDiagonalStructure) {
  Matrix target = Matrix::Zero(4, 4);
  target.diagonal() << 4.0, 3.0, 2.0, 1.0;
  const Task t = task_from_matrices(target, Matrix::Zero(4, 4), 4);
  const ScalingPoint p = manual_point(4, 4, 0.5);
  ProductMatrix pm{0.1 * Matrix::Identity(4, 4), Mode::Balanced, 0};
  for (int k = 0; k < 20; ++k) pm = sc_step(pm, t, p, 0.5);
  Matrix off = pm.a;
  off.diagonal().setZero();
  EXPECT_LE(off.cwiseAbs().maxCoeff(), 1e-14);
  // Decoupled scalar recursion a <- a - eta * 2 a * (2/d^2)(a - b).
  for (Index i = 0; i < 4; ++i) {
    double a = 0.1;
    for (int k = 0; k < 20; ++k) a -= 0.5 * 2.0 * a * (2.0 / 16.0) * (a - target(i, i));
    EXPECT_NEAR(pm.a(i, i), a, 1e-13);
  }
}

TEST(ScStep, BalancedIgnoresShift) {
  const Task t = make_task(5, 2, 1);
  const Matrix a0 = 0.1 * t.a_star;
  const ProductMatrix x = sc_step({a0, Mode::Balanced, 0}, t, manual_point(5, 5, 3.0), 0.1);
  const ProductMatrix y = sc_step({a0, Mode::SelfConsistent, 0}, t, manual_point(5, 5, 0.0), 0.1);
  EXPECT_TRUE(x.a == y.a);
}

TEST(ScStep, ModeMismatch) {
  const Task t = make_task(3, 1, 1);
  try {
    sc_step({Matrix::Zero(3, 3), Mode::Lazy, 0}, t, manual_point(3, 3, 0.1), 0.1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ModeMismatch);
  }
}

TEST(LazyStep, HandExampleAndFixedPoint) {
  const Task t = task_from_matrices(Matrix::Identity(2, 2), Matrix::Zero(2, 2), 2);
  ScalingPoint p = manual_point(2, 1, 0.5);
  const ProductMatrix out = lazy_step({Matrix::Zero(2, 2), Mode::Lazy, 0}, t, p, 1.0);
  EXPECT_LE((out.a - 0.5 * Matrix::Identity(2, 2)).cwiseAbs().maxCoeff(), 1e-15);
  const ProductMatrix fixed = lazy_step({t.observed, Mode::Lazy, 0}, t, p, 1.0);
  EXPECT_LE((fixed.a - t.observed).norm(), 1e-15);
}

TEST(LazyClosedForm, MatchesIteration) {
  const Task t = make_task(8, 2, 5);
  const ScalingPoint p = scaling_point(8, 2.0, -0.5);
  const Matrix a0 = init_gram(p, 2).product;
  ProductMatrix pm{a0, Mode::Lazy, 0};
  for (std::size_t k = 0; k < 150; ++k) pm = lazy_step(pm, t, p, p.eta);
  const LazyClosedForm cf = lazy_closed_form(a0, t, p, p.eta, 150);
  EXPECT_LE((cf.value - pm.a).norm() / pm.a.norm(), 1e-12);
  EXPECT_TRUE(cf.stable);
  EXPECT_TRUE(lazy_closed_form(a0, t, p, p.eta, 0).value == a0);
}

TEST(LazyClosedForm, GeometricLimit) {
  const Task t = make_task(6, 2, 5);
  const ScalingPoint p = scaling_point(6, 2.0, -0.5);
  const double rho = lazy_contraction(p, p.eta);
  ASSERT_GT(rho, 0.0);
  ASSERT_LT(rho, 1.0);
  const auto steps = static_cast<std::size_t>(std::ceil(std::log(1e-12) / std::log(rho)));
  const LazyClosedForm cf = lazy_closed_form(Matrix::Zero(6, 6), t, p, p.eta, steps);
  EXPECT_LE((cf.value - t.observed).norm() / t.observed.norm(), 1e-10);
}

TEST(Modes, ParseRoundTrip) {
  for (Mode m : {Mode::Gd, Mode::SelfConsistent, Mode::Lazy, Mode::Balanced})
    EXPECT_EQ(parse_mode(to_string(m)), m);
  EXPECT_EQ(parse_mode("sc"), Mode::SelfConsistent);
  EXPECT_THROW(parse_mode("adam"), Error);
}
