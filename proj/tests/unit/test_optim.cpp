#include <gtest/gtest.h>

#include <cmath>

#include "fsat/optim.hpp"

namespace fsat {
namespace {

TEST(ClipGradient, BoundScalesWithDimension) {
  const Tensor g(Shape{4}, std::vector<double>{-20, -1, 3, 9});
  // dim 4 -> bound 5.
  EXPECT_EQ(clip_gradient_inf(g, 4), Tensor(Shape{4}, std::vector<double>{-5, -1, 3, 5}));
  // dim 100 -> bound 1.
  EXPECT_EQ(clip_gradient_inf(g, 100), Tensor(Shape{4}, std::vector<double>{-1, -1, 1, 1}));
  EXPECT_THROW(clip_gradient_inf(g, 0), UsageError);
}

TEST(ClipGradient, NeverExceedsBound) {
  Tensor g(Shape{64});
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = std::sin(1.7 * static_cast<double>(i)) * 50.0;
  for (std::int64_t dim : {1, 7, 64, 1000}) {
    const double bound = 10.0 / std::sqrt(static_cast<double>(dim));
    const Tensor c = clip_gradient_inf(g, dim);
    for (double v : c.values()) EXPECT_LE(std::abs(v), bound);
  }
}

// Scalar Adam written out longhand.
struct ScalarAdam {
  double lr, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  double m = 0, v = 0;
  int t = 0;
  double step(double p, double g) {
    ++t;
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double mh = m / (1 - std::pow(b1, t));
    const double vh = v / (1 - std::pow(b2, t));
    return p - lr * mh / (std::sqrt(vh) + eps);
  }
};

TEST(Adam, MatchesScalarReference) {
  Adam adam(AdamOptions{.lr = 0.05});
  Tensor p(Shape{3}, std::vector<double>{1.0, -2.0, 0.5});
  std::vector<ScalarAdam> ref(3, ScalarAdam{0.05});
  std::vector<double> rp{1.0, -2.0, 0.5};
  for (int step = 0; step < 25; ++step) {
    Tensor g(Shape{3});
    for (std::size_t i = 0; i < 3; ++i) {
      g[i] = 2.0 * p[i] + std::cos(static_cast<double>(step + i));
      rp[i] = ref[i].step(rp[i], 2.0 * rp[i] + std::cos(static_cast<double>(step + i)));
    }
    adam.step(p, g);
    for (std::size_t i = 0; i < 3; ++i) ASSERT_NEAR(p[i], rp[i], 1e-14);
  }
  EXPECT_EQ(adam.step_count(), 25);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  // Bias correction makes the first update lr * sign(g) (up to eps).
  Adam adam(AdamOptions{.lr = 0.01});
  Tensor p(Shape{2}, std::vector<double>{0.0, 0.0});
  adam.step(p, Tensor(Shape{2}, std::vector<double>{3.0, -1e-3}));
  EXPECT_NEAR(p[0], -0.01, 1e-9);
  EXPECT_NEAR(p[1], 0.01, 1e-6);
}

TEST(Adam, ParameterGroupIsFixed) {
  Adam adam;
  Tensor a(Shape{2}), b(Shape{2});
  Tensor* both[] = {&a, &b};
  const Tensor grads[] = {Tensor(Shape{2}), Tensor(Shape{2})};
  adam.step(both, grads);
  EXPECT_THROW(adam.step(a, Tensor(Shape{2})), ConfigError);
  Tensor c(Shape{3});
  Tensor* wrong[] = {&a, &c};
  const Tensor wrong_grads[] = {Tensor(Shape{2}), Tensor(Shape{3})};
  EXPECT_THROW(adam.step(wrong, wrong_grads), ConfigError);
}

}  // namespace
}  // namespace fsat
