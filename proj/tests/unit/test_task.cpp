#include <cmath>
#include <filesystem>
#include <vector>

#include <gtest/gtest.h>

#include "lindyn/task.hpp"

using namespace lindyn;

TEST(MakeTask, RankOneTarget) {
  const Task t = make_task(3, 1, 17);
  const Vector s = singular_values(t.a_star);
  EXPECT_LE(s(1), 1e-9 * s(0));
  EXPECT_EQ(t.target_svals.size(), 1u);
  EXPECT_NEAR(t.target_svals[0], s(0), 1e-12);
}

TEST(MakeTask, BitIdenticalForSameSeed) {
  const Task a = make_task(12, 3, 5);
  const Task b = make_task(12, 3, 5);
  EXPECT_TRUE(a.a_star == b.a_star);
  EXPECT_TRUE(a.noise == b.noise);
  const Task c = make_task(12, 3, 6);
  EXPECT_FALSE(a.a_star == c.a_star);
}

TEST(MakeTask, RankAndObserved) {
  const Task t = make_task(15, 4, 2);
  const Vector s = singular_values(t.a_star);
  EXPECT_GT(s(3), 1e-6 * s(0));
  EXPECT_LE(s(4), 1e-10 * s(0));
  EXPECT_LE((t.observed - t.a_star - t.noise).norm(), 1e-14 * t.observed.norm());
}

TEST(MakeTask, BadRank) {
  EXPECT_THROW(make_task(5, 0, 1), Error);
  EXPECT_THROW(make_task(5, 6, 1), Error);
}

TEST(MakeTaskFromA, ExactSpectrum) {
  const std::vector<double> a{3.0, 2.0, 1.0};
  const Task t = make_task_from_a(10, a, 4);
  const Vector s = singular_values(t.a_star);
  EXPECT_NEAR(s(0), 30.0, 1e-12);
  EXPECT_NEAR(s(1), 20.0, 1e-12);
  EXPECT_NEAR(s(2), 10.0, 1e-12);
  EXPECT_LE(s(3), 1e-10);
  const auto back = t.a_values();
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(back[i], a[i], 1e-12);
  // Same noise as the random-target variant.
  EXPECT_TRUE(t.noise == make_task(10, 3, 4).noise);
}

TEST(MakeTaskFromA, RejectsIncreasing) {
  const std::vector<double> a{1.0, 2.0};
  EXPECT_THROW(make_task_from_a(5, a, 0), Error);
}

TEST(GradCost, ZeroAtInterpolant) {
  const Task t = make_task(6, 2, 1);
  EXPECT_LE(grad_cost(t.observed, t).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(GradCost, ZeroPredictorIdentityTarget) {
  const Task t = task_from_matrices(Matrix::Identity(2, 2), Matrix::Zero(2, 2), 2);
  const Matrix g = grad_cost(Matrix::Zero(2, 2), t);
  EXPECT_NEAR(g(0, 0), -0.5, 1e-15);
  EXPECT_NEAR(g(1, 1), -0.5, 1e-15);
  EXPECT_NEAR(g(0, 1), 0.0, 1e-15);
}

TEST(EvalErrors, ReferenceCases) {
  const Task t = make_task(8, 2, 3);
  const double d2 = 64.0;
  const Errors exact = eval_errors(t.a_star, t);
  EXPECT_NEAR(exact.test, 0.0, 1e-15);
  EXPECT_NEAR(exact.train, t.noise.squaredNorm() / d2, 1e-12);
  const Errors interp = eval_errors(t.observed, t);
  EXPECT_NEAR(interp.train, 0.0, 1e-15);
  EXPECT_NEAR(interp.test, t.noise.squaredNorm() / d2, 1e-12);
  const Errors zero = eval_errors(Matrix::Zero(8, 8), t);
  EXPECT_NEAR(zero.test, t.a_star.squaredNorm() / d2, 1e-12);
}

TEST(ScalingPoint, FigureOneIsActive) {
  const ScalingPoint p = scaling_point(200, 2.25, -1.85);
  EXPECT_NEAR(p.exponent_sum(), 0.4, 1e-12);
  EXPECT_TRUE(p.active());
  EXPECT_FALSE(p.lazy());
  EXPECT_TRUE(std::isnan(p.eta));
  const ScalingPoint q = scaling_point(200, 2.25, -1.85, 50.0, 100.0);
  EXPECT_NEAR(q.eta, 200.0 * 200.0 / (50.0 * 100.0), 1e-12);
}

TEST(ScalingPoint, Underparametrized) {
  const ScalingPoint p = scaling_point(100, 0.0, 0.0);
  EXPECT_EQ(p.w, 1);
  EXPECT_DOUBLE_EQ(p.sigma2, 1.0);
  EXPECT_FALSE(p.overparametrized());
  EXPECT_TRUE(p.degenerate());
}

TEST(ScalingPoint, LazyLearningRate) {
  const ScalingPoint p = scaling_point(100, 2.0, -0.5);
  EXPECT_TRUE(p.lazy());
  EXPECT_EQ(p.w, 10000);
  EXPECT_NEAR(p.eta, 0.2, 1e-12);
}

TEST(ScalingPoint, BoundaryAndFlags) {
  const ScalingPoint p = scaling_point(50, 2.0, -1.0);
  EXPECT_TRUE(p.boundary());
  EXPECT_TRUE(p.finite_variance());
  const ScalingPoint q = scaling_point(50, 1.5, 0.0);
  EXPECT_FALSE(q.finite_variance());
}

TEST(TaskCsv, RoundTripIsExact) {
  const Task t = make_task(7, 2, 99);
  const auto path = (std::filesystem::temp_directory_path() / "lindyn_task_roundtrip.csv").string();
  write_task_csv(t, path);
  const Task r = read_task_csv(path);
  std::filesystem::remove(path);
  EXPECT_EQ(r.d, t.d);
  EXPECT_EQ(r.rank, t.rank);
  EXPECT_EQ(r.seed, t.seed);
  EXPECT_TRUE(r.a_star == t.a_star);
  EXPECT_TRUE(r.noise == t.noise);
}
