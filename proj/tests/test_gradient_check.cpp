#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "latentsteer/gradient_check.hpp"

namespace latentsteer {
namespace {

using testing::error_code_of;

double cubic(const Vector& x) { return (x.array().cube() + x.array().square()).sum(); }

TEST(GradientCheck, AcceptsCorrectGradient) {
  std::mt19937_64 rng(1);
  const Vector x = testing::gaussian_vector(rng, 30);
  const Vector grad = (3.0 * x.array().square() + 2.0 * x.array()).matrix();
  EXPECT_LT(finite_difference_check(cubic, x, grad, 30), 1e-6);
}

TEST(GradientCheck, DetectsWrongCoordinate) {
  std::mt19937_64 rng(2);
  const Vector x = testing::gaussian_vector(rng, 10);
  Vector grad = (3.0 * x.array().square() + 2.0 * x.array()).matrix();
  grad[4] *= 1.5;
  // Probing every coordinate must find it.
  EXPECT_GT(finite_difference_check(cubic, x, grad, 10), 0.2);
}

TEST(GradientCheck, FlatRegionUsesAbsoluteError) {
  const auto zero = [](const Vector&) { return 0.0; };
  EXPECT_EQ(finite_difference_check(zero, Vector::Zero(5), Vector::Zero(5), 5), 0.0);
  EXPECT_NEAR(finite_difference_check(zero, Vector::Zero(5), Vector::Constant(5, 1e-9), 5), 1e-9, 1e-15);
}

TEST(GradientCheck, SeedSelectsProbes) {
  std::mt19937_64 rng(3);
  const Vector x = testing::gaussian_vector(rng, 50);
  Vector grad = (3.0 * x.array().square() + 2.0 * x.array()).matrix();
  grad[0] += 10.0;
  int hits = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    GradientCheckOptions opt;
    opt.seed = seed;
    if (finite_difference_check(cubic, x, grad, 1, opt) > 0.1) ++hits;
  }
  EXPECT_LT(hits, 20);
}

TEST(GradientCheck, Errors) {
  const Vector x = Vector::Zero(3);
  EXPECT_EQ(error_code_of([&] { finite_difference_check(cubic, x, x, 0); }), ErrorCode::kInvalidArgument);
  EXPECT_EQ(error_code_of([&] { finite_difference_check(cubic, x, Vector::Zero(2), 1); }), ErrorCode::kShapeMismatch);
}

}  // namespace
}  // namespace latentsteer
