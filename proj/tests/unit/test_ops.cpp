#include <gtest/gtest.h>

#include <cmath>

#include "fsat/ops.hpp"
#include "gradcheck.hpp"

namespace fsat {
namespace {

using testing::random_tensor;

// Direct seven-loop convolution; padding is resolved per tap.
Tensor naive_conv(const Tensor& x, const Tensor& w, const Tensor& b, const ops::Conv2dOptions& o) {
  const std::size_t n = x.dim(0), ci = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const std::size_t co = w.dim(0), k = w.dim(2);
  const std::size_t ho = (h + 2 * o.padding - k) / o.stride + 1;
  const std::size_t wo = (wd + 2 * o.padding - k) / o.stride + 1;
  auto reflect = [](long i, long len) {
    if (i < 0) i = -i;
    if (i >= len) i = 2 * len - 2 - i;
    return i;
  };
  Tensor out(Shape{n, co, ho, wo});
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t oc = 0; oc < co; ++oc)
      for (std::size_t oy = 0; oy < ho; ++oy)
        for (std::size_t ox = 0; ox < wo; ++ox) {
          double acc = b[oc];
          for (std::size_t ic = 0; ic < ci; ++ic)
            for (std::size_t ky = 0; ky < k; ++ky)
              for (std::size_t kx = 0; kx < k; ++kx) {
                long iy = static_cast<long>(oy * o.stride + ky) - static_cast<long>(o.padding);
                long ix = static_cast<long>(ox * o.stride + kx) - static_cast<long>(o.padding);
                const bool outside = iy < 0 || ix < 0 || iy >= static_cast<long>(h) ||
                                     ix >= static_cast<long>(wd);
                if (outside) {
                  if (o.pad_mode == ops::PadMode::zero) continue;
                  iy = reflect(iy, static_cast<long>(h));
                  ix = reflect(ix, static_cast<long>(wd));
                }
                acc += w[((oc * ci + ic) * k + ky) * k + kx] *
                       x[((s * ci + ic) * h + static_cast<std::size_t>(iy)) * wd +
                         static_cast<std::size_t>(ix)];
              }
          out[((s * co + oc) * ho + oy) * wo + ox] = acc;
        }
  return out;
}

TEST(Conv2d, MatchesNaiveOracle) {
  Rng rng(42);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t k = trial % 3 == 0 ? 1 : 3;
    ops::Conv2dOptions o;
    o.stride = 1 + static_cast<std::size_t>(trial % 2);
    o.padding = k == 3 ? static_cast<std::size_t>((trial / 2) % 2) : 0;
    o.pad_mode = (trial / 4) % 2 ? ops::PadMode::reflect : ops::PadMode::zero;
    const std::size_t ci = 1 + rng.below(4), co = 1 + rng.below(5);
    const std::size_t h = 3 + rng.below(8), w = 3 + rng.below(8);
    const Tensor x = random_tensor(rng, {2, ci, h, w});
    const Tensor wt = random_tensor(rng, {co, ci, k, k});
    const Tensor b = random_tensor(rng, {co});
    Tape tape;
    const Tensor got = ops::conv2d(tape.constant(x), tape.constant(wt), tape.constant(b), o).value();
    const Tensor want = naive_conv(x, wt, b, o);
    ASSERT_EQ(got.shape(), want.shape());
    for (std::size_t i = 0; i < got.size(); ++i) ASSERT_NEAR(got[i], want[i], 1e-12) << "trial " << trial;
  }
}

TEST(Conv2d, RejectsBadShapes) {
  Tape tape;
  Var x = tape.constant(Tensor(Shape{1, 2, 4, 4}));
  Var w = tape.constant(Tensor(Shape{3, 3, 3, 3}));
  Var b = tape.constant(Tensor(Shape{3}));
  EXPECT_THROW(ops::conv2d(x, w, b), ConfigError);
  Var w2 = tape.constant(Tensor(Shape{3, 2, 3, 3}));
  EXPECT_THROW(ops::conv2d(x, w2, b, {.stride = 1, .padding = 4, .pad_mode = ops::PadMode::reflect}),
               ConfigError);
}

TEST(Ops, MaxPoolAndUpsample) {
  Tape tape;
  Tensor x(Shape{1, 1, 2, 4}, std::vector<double>{1, 5, 2, 0, 3, 4, 8, 7});
  const Tensor p = ops::max_pool2d(tape.constant(x)).value();
  EXPECT_EQ(p, Tensor(Shape{1, 1, 1, 2}, std::vector<double>{5, 8}));
  const Tensor u = ops::upsample_nearest2x(tape.constant(p)).value();
  EXPECT_EQ(u, Tensor(Shape{1, 1, 2, 4}, std::vector<double>{5, 5, 8, 8, 5, 5, 8, 8}));
}

TEST(Ops, MaxPoolRoutesGradientToArgmax) {
  Tape tape;
  Var x = tape.leaf(Tensor(Shape{1, 1, 2, 2}, std::vector<double>{1, 9, 3, 4}), true);
  tape.backward(ops::sum(ops::max_pool2d(x)));
  EXPECT_EQ(tape.grad(x), Tensor(Shape{1, 1, 2, 2}, std::vector<double>{0, 1, 0, 0}));
}

TEST(Ops, CrossEntropyValues) {
  Tape tape;
  Var logits = tape.constant(Tensor(Shape{2, 4}, std::vector<double>{0, 0, 0, 0, 1000, 0, 0, 0}));
  const std::vector<int> labels{2, 0};
  const Tensor ce = ops::softmax_cross_entropy(logits, labels).value();
  EXPECT_NEAR(ce[0], std::log(4.0), 1e-12);
  EXPECT_NEAR(ce[1], 0.0, 1e-12);
  const std::vector<int> bad{0, 4};
  EXPECT_THROW(ops::softmax_cross_entropy(logits, bad), ConfigError);
}

TEST(Ops, ChannelMomentsArePopulationStatistics) {
  Tape tape;
  Tensor x(Shape{1, 2, 1, 4}, std::vector<double>{1, 2, 3, 4, 5, 5, 5, 5});
  const Tensor m = ops::channel_mean(tape.constant(x)).value();
  const Tensor v = ops::channel_variance(tape.constant(x)).value();
  EXPECT_DOUBLE_EQ(m[0], 2.5);
  EXPECT_DOUBLE_EQ(m[1], 5.0);
  EXPECT_DOUBLE_EQ(v[0], 1.25);
  EXPECT_DOUBLE_EQ(v[1], 0.0);
}

TEST(Ops, ChannelAffine) {
  Tape tape;
  Tensor x(Shape{1, 2, 1, 2}, std::vector<double>{1, 2, 3, 4});
  Tensor scale(Shape{1, 2}, std::vector<double>{2, -1});
  Tensor shift(Shape{1, 2}, std::vector<double>{0.5, 1});
  const Tensor y =
      ops::channel_affine(tape.constant(x), tape.constant(scale), tape.constant(shift)).value();
  EXPECT_EQ(y, Tensor(Shape{1, 2, 1, 2}, std::vector<double>{2.5, 4.5, -2, -3}));
}

TEST(Ops, RowNormZeroRowHasZeroGradient) {
  Tape tape;
  Var x = tape.leaf(Tensor(Shape{2, 2}, std::vector<double>{0, 0, 3, 4}), true);
  Var n = ops::row_l2_norm(x);
  EXPECT_EQ(n.value(), Tensor(Shape{2}, std::vector<double>{0, 5}));
  tape.backward(ops::sum(n));
  const Tensor g = tape.grad(x);
  EXPECT_EQ(g[0], 0.0);
  EXPECT_EQ(g[1], 0.0);
  EXPECT_NEAR(g[2], 0.6, 1e-15);
  EXPECT_NEAR(g[3], 0.8, 1e-15);
}

TEST(Ops, WeightedSum) {
  Tape tape;
  Tensor w(Shape{1, 2}, std::vector<double>{0.25, 0.75});
  Tensor v(Shape{1, 2, 2}, std::vector<double>{4, 8, 0, 4});
  const Tensor y = ops::weighted_sum(tape.constant(w), tape.constant(v)).value();
  EXPECT_EQ(y, Tensor(Shape{1, 2}, std::vector<double>{1, 5}));
}

TEST(Ops, ClampGradientOnlyInside) {
  Tape tape;
  Var x = tape.leaf(Tensor(Shape{4}, std::vector<double>{-2, 0, 1, 0.5}), true);
  tape.backward(ops::sum(ops::clamp(x, 0.0, 1.0)));
  EXPECT_EQ(tape.grad(x), Tensor(Shape{4}, std::vector<double>{0, 0, 0, 1}));
}

TEST(Ops, ConcatAlongAxis) {
  Tape tape;
  const Var parts[] = {tape.constant(Tensor(Shape{1, 2}, std::vector<double>{1, 2})),
                       tape.constant(Tensor(Shape{1, 1}, std::vector<double>{3}))};
  EXPECT_EQ(ops::concat(parts, 1).value(), Tensor(Shape{1, 3}, std::vector<double>{1, 2, 3}));
  EXPECT_THROW(ops::concat(parts, 0), ConfigError);
}

TEST(Ops, ElementwiseShapeMismatch) {
  Tape tape;
  EXPECT_THROW(ops::add(tape.constant(Tensor(Shape{2})), tape.constant(Tensor(Shape{3}))), ConfigError);
}

}  // namespace
}  // namespace fsat
