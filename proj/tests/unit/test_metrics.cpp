#include <gtest/gtest.h>

#include <cmath>

#include "fixtures.hpp"
#include "fsat/metrics.hpp"
#include "fsat/style.hpp"
#include "gradcheck.hpp"

namespace fsat {
namespace {

using testing::random_tensor;

TEST(PixelDistance, HandEvaluated) {
  const Tensor a(Shape{1, 1, 2}, std::vector<double>{0.0, 0.0});
  const Tensor b(Shape{1, 1, 2}, std::vector<double>{0.3, -0.4});
  const NormPair d = pixel_distance(a, b);
  EXPECT_DOUBLE_EQ(d.linf, 0.4);
  EXPECT_DOUBLE_EQ(d.l2, 0.5);
  EXPECT_EQ(pixel_distance(a, a).l2, 0.0);
  EXPECT_THROW(pixel_distance(a, Tensor(Shape{2})), ConfigError);
}

TEST(PixelDistance, UniformShiftOracle) {
  // A uniform shift d over n values has l2 = |d| sqrt(n).
  const Tensor a(Shape{3, 8, 8}, 0.25);
  const Tensor b(Shape{3, 8, 8}, 0.25 + 2.0 / 255.0);
  const NormPair d = pixel_distance(a, b);
  EXPECT_NEAR(d.linf * 255.0, 2.0, 1e-12);
  EXPECT_NEAR(d.l2, 2.0 / 255.0 * std::sqrt(192.0), 1e-12);
}

TEST(NormalizedEmbedding, StandardisedPerChannel) {
  Rng rng(1);
  const Tensor b = random_tensor(rng, {2, 4, 5, 5}, -3.0, 3.0);
  const StyleStats s = channel_stats(normalize_channels(b));
  for (std::size_t i = 0; i < s.mu.size(); ++i) {
    EXPECT_NEAR(s.mu[i], 0.0, 1e-5);
    EXPECT_NEAR(s.sigma[i], 1.0, 1e-5);
  }
}

TEST(NormalizedEmbedding, InvariantToPositiveChannelAffine) {
  Rng rng(2);
  const Tensor b = random_tensor(rng, {1, 3, 4, 4}, 0.0, 2.0);
  Tensor moved = b;
  for (std::size_t c = 0; c < 3; ++c) {
    const double scale = rng.uniform(0.5, 3.0), shift = rng.uniform(-2.0, 2.0);
    for (std::size_t i = 0; i < 16; ++i) moved[c * 16 + i] = scale * b[c * 16 + i] + shift;
  }
  const Tensor h1 = normalize_channels(b), h2 = normalize_channels(moved);
  for (std::size_t i = 0; i < h1.size(); ++i) EXPECT_NEAR(h1[i], h2[i], 1e-5);
}

TEST(FeatureDistance, ZeroForIdenticalImages) {
  const auto w = testing::tiny_world(4, 2);
  const Tensor x = slice_rows(w.data.images, 0, 1);
  EXPECT_EQ(feature_distance(x, x, w.encoder).l2, 0.0);
  const DistanceReport r = measure_distances(x, slice_rows(w.data.images, 1, 2), w.encoder);
  EXPECT_GT(r.pixel_l2, 0.0);
  EXPECT_GT(r.feature_l2, 0.0);
}

TEST(Median, OddEvenEmpty) {
  EXPECT_EQ(median({3, 1, 2}), 2.0);
  EXPECT_EQ(median({4, 1, 2, 3}), 2.5);
  EXPECT_EQ(median({}), 0.0);
}

TEST(Accuracy, Basic) {
  const std::vector<int> p{1, 2, 3, 4}, y{1, 0, 3, 0};
  EXPECT_EQ(accuracy(p, y), 0.5);
  EXPECT_THROW(accuracy(p, std::vector<int>{1}), ConfigError);
}

AttackOutcome outcome(bool success, double pixel_l2, double feature_l2) {
  AttackOutcome o;
  o.true_label = 1;
  o.predicted_label = success ? 2 : 1;
  o.success = success;
  o.distances.pixel_l2 = pixel_l2;
  o.distances.feature_l2 = feature_l2;
  o.distances.pixel_linf = pixel_l2 / 10.0;
  o.content_loss = feature_l2 / 2.0;
  return o;
}

TEST(CampaignReport, TenOutcomeFixture) {
  // Seven successes; failures carry large distances that must not enter the medians.
  std::vector<AttackOutcome> outs = {
      outcome(true, 1.0, 10.0), outcome(true, 3.0, 30.0), outcome(false, 99.0, 990.0),
      outcome(true, 2.0, 20.0), outcome(true, 7.0, 70.0), outcome(false, 99.0, 990.0),
      outcome(true, 5.0, 50.0), outcome(true, 4.0, 40.0), outcome(false, 99.0, 990.0),
      outcome(true, 6.0, 60.0)};
  const CampaignSummary s = campaign_report(outs);
  EXPECT_EQ(s.attacked, 10u);
  EXPECT_EQ(s.successes, 7u);
  EXPECT_DOUBLE_EQ(s.success_rate, 0.7);
  EXPECT_DOUBLE_EQ(s.accuracy_under_attack, 0.3);
  EXPECT_DOUBLE_EQ(s.pixel_l2.median, 4.0);
  EXPECT_DOUBLE_EQ(s.pixel_l2.mean, 4.0);
  EXPECT_DOUBLE_EQ(s.feature_l2.median, 40.0);
  EXPECT_DOUBLE_EQ(s.pixel_linf.median, 0.4);
  EXPECT_DOUBLE_EQ(s.content_loss.median, 20.0);
  EXPECT_THROW(campaign_report({}), UsageError);
}

TEST(CampaignReport, RowsMatchHeaders) {
  std::vector<AttackOutcome> outs = {outcome(true, 1.0, 2.0)};
  outs[0].original_image = Tensor(Shape{3, 2, 2});
  outs[0].adversarial_image = Tensor(Shape{3, 2, 2});
  EXPECT_EQ(summary_row("x", campaign_report(outs)).size(), summary_header().size());
  EXPECT_EQ(outcome_row(0, outs[0]).size(), outcome_header().size());
}

}  // namespace
}  // namespace fsat
