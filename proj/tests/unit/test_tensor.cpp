#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "fsat/ops.hpp"
#include "fsat/tensor.hpp"

namespace fsat {
namespace {

TEST(Tensor, ShapeAndValuesMustAgree) {
  EXPECT_THROW(Tensor(Shape{2, 2}, std::vector<double>{1, 2, 3}), ConfigError);
  Tensor t(Shape{2, 3}, 1.5);
  EXPECT_EQ(t.size(), 6u);
  EXPECT_EQ(t.reshaped({3, 2}).shape(), (Shape{3, 2}));
  EXPECT_THROW(t.reshaped({4, 2}), ConfigError);
  EXPECT_THROW(t.item(), UsageError);
  EXPECT_EQ(Tensor::scalar(2.5).item(), 2.5);
  EXPECT_EQ(Tensor::scalar(2.5).rank(), 0u);
}

TEST(Tape, FanOutAccumulates) {
  // y = x*x + x, dy/dx = 2x + 1: x reaches y along two paths.
  Tape tape;
  Var x = tape.leaf(Tensor(Shape{3}, std::vector<double>{-1.0, 0.5, 2.0}), true);
  Var y = ops::sum(ops::add(ops::mul(x, x), x));
  tape.backward(y);
  const Tensor g = tape.grad(x);
  EXPECT_DOUBLE_EQ(g[0], -1.0);
  EXPECT_DOUBLE_EQ(g[1], 2.0);
  EXPECT_DOUBLE_EQ(g[2], 5.0);
}

TEST(Tape, DiamondGraph) {
  // a -> b, c -> d = b * c with b = 2a, c = a^2: dd/da = 6a^2.
  Tape tape;
  Var a = tape.leaf(Tensor::scalar(1.5), true);
  Var b = ops::mul_scalar(a, 2.0);
  Var c = ops::mul(a, a);
  tape.backward(ops::mul(b, c));
  EXPECT_NEAR(tape.grad(a).item(), 6.0 * 1.5 * 1.5, 1e-12);
}

TEST(Tape, BackwardTwiceIsUsageError) {
  Tape tape;
  Var x = tape.leaf(Tensor::scalar(1.0), true);
  Var y = ops::mul(x, x);
  tape.backward(y);
  EXPECT_THROW(tape.backward(y), UsageError);
  EXPECT_THROW(tape.leaf(Tensor::scalar(0.0)), UsageError);
}

TEST(Tape, BackwardNeedsScalar) {
  Tape tape;
  Var x = tape.leaf(Tensor(Shape{2}, 1.0), true);
  EXPECT_THROW(tape.backward(ops::mul(x, x)), UsageError);
}

TEST(Tape, NonFiniteRaises) {
  Tape tape;
  EXPECT_THROW(tape.leaf(Tensor(Shape{1}, std::numeric_limits<double>::quiet_NaN())),
               NumericalError);
  Var x = tape.leaf(Tensor(Shape{1}, 800.0), true);
  EXPECT_THROW(ops::exp(x), NumericalError);
  Var z = tape.leaf(Tensor(Shape{1}, 0.0), true);
  EXPECT_THROW(ops::div(x, z), NumericalError);
}

TEST(Tape, UnreachableGradIsZero) {
  Tape tape;
  Var x = tape.leaf(Tensor(Shape{2}, 1.0), true);
  Var w = tape.leaf(Tensor(Shape{2}, 3.0), true);
  tape.backward(ops::sum(x));
  EXPECT_EQ(tape.grad(w), Tensor(Shape{2}, 0.0));
}

TEST(Tape, ForeignVarRejected) {
  Tape a, b;
  Var x = a.leaf(Tensor(Shape{1}, 1.0), true);
  Var y = b.leaf(Tensor(Shape{1}, 1.0), true);
  EXPECT_THROW(ops::add(x, y), UsageError);
}

TEST(Tape, ConstantsGetNoGradient) {
  Tape tape;
  Var x = tape.leaf(Tensor(Shape{2}, 2.0), true);
  Var c = tape.constant(Tensor(Shape{2}, 5.0));
  Var y = ops::mul(x, c);
  EXPECT_FALSE(c.requires_grad());
  EXPECT_TRUE(y.requires_grad());
  tape.backward(ops::sum(y));
  EXPECT_EQ(tape.grad(x), Tensor(Shape{2}, 5.0));
}

TEST(Tape, GradientsAreDeterministic) {
  auto run = [] {
    Tape tape;
    Tensor v(Shape{1, 2, 4, 4});
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::sin(0.37 * static_cast<double>(i));
    Var x = tape.leaf(v, true);
    Var w = tape.constant(Tensor(Shape{3, 2, 3, 3}, 0.1));
    Var b = tape.constant(Tensor(Shape{3}, 0.0));
    Var y = ops::conv2d(x, w, b, {.stride = 1, .padding = 1});
    tape.backward(ops::sum(ops::mul(y, y)));
    return tape.grad(x);
  };
  EXPECT_EQ(run(), run());
}

}  // namespace
}  // namespace fsat
