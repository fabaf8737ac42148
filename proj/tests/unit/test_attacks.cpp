#include <gtest/gtest.h>

#include <cmath>

#include "fixtures.hpp"
#include "fsat/attacks.hpp"
#include "fsat/style.hpp"

namespace fsat {
namespace {

using testing::tiny_world;

AttackConfig config(AttackMode mode, std::size_t steps) {
  AttackConfig cfg;
  cfg.mode = mode;
  cfg.steps = steps;
  cfg.k = 3;
  return cfg;
}

TEST(AdversarialLoss, SignConvention) {
  Tape tape;
  Var logits = tape.constant(Tensor(Shape{1, 4}, 0.0));
  const std::vector<int> y{1}, t{2};
  EXPECT_NEAR(adversarial_loss(logits, y, false).value()[0], -std::log(4.0), 1e-12);
  EXPECT_NEAR(adversarial_loss(logits, y, true, t).value()[0], std::log(4.0), 1e-12);
  EXPECT_THROW(adversarial_loss(logits, y, true), UsageError);
}

TEST(AttackConfig, Defaults) {
  AttackConfig cfg;
  EXPECT_DOUBLE_EQ(cfg.resolved_epsilon(), std::log(1.5));
  cfg.targeted = true;
  EXPECT_DOUBLE_EQ(cfg.resolved_epsilon(), std::log(2.0));
  cfg.mode = AttackMode::pgd;
  EXPECT_DOUBLE_EQ(cfg.resolved_epsilon(), 8.0 / 255.0);
  EXPECT_DOUBLE_EQ(cfg.resolved_pgd_step(), 2.0 / 255.0);
  EXPECT_EQ(parse_attack_mode("interpolation"), AttackMode::interpolation);
  EXPECT_THROW(parse_attack_mode("fgsm"), ConfigError);
}

TEST(AttackConfig, TargetValidation) {
  const auto w = tiny_world(1, 4);
  AttackConfig cfg = config(AttackMode::augmentation, 2);
  cfg.targeted = true;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg.target_label = w.data.labels[0];
  EXPECT_THROW(attack_augmentation(w.data.images, w.data.labels, w.models(), cfg), ConfigError);
  cfg.target_label = 8;
  EXPECT_THROW(attack_augmentation(w.data.images, w.data.labels, w.models(), cfg), ConfigError);
  cfg.target_label = -1;
  EXPECT_THROW(attack_augmentation(w.data.images, w.data.labels, w.models(), cfg), ConfigError);
}

TEST(Attacks, FeatureAttacksNeedDecoder) {
  const auto w = tiny_world(2, 2);
  AttackModels m = w.models();
  m.decoder = nullptr;
  EXPECT_THROW(attack_augmentation(w.data.images, w.data.labels, m, config(AttackMode::augmentation, 1)),
               UsageError);
  EXPECT_NO_THROW(attack_pgd(w.data.images, w.data.labels, m, config(AttackMode::pgd, 1)));
  EXPECT_THROW(run_attack(w.data.images, w.data.labels, w.models(), config(AttackMode::interpolation, 1)),
               UsageError);
}

TEST(Attacks, ZeroEpsilonAugmentationIsPassThrough) {
  const auto w = tiny_world(3, 4);
  AttackConfig cfg = config(AttackMode::augmentation, 6);
  cfg.epsilon = 0.0;
  const auto out = attack_augmentation(w.data.images, w.data.labels, w.models(), cfg);
  const Tensor pass = w.decoder.decode(w.encoder.encode(w.data.images));
  const std::size_t per = pass.size() / 4;
  for (std::size_t i = 0; i < 4; ++i) {
    const Tensor expect(out[i].adversarial_image.shape(),
                        std::vector<double>(pass.data() + i * per, pass.data() + (i + 1) * per));
    EXPECT_EQ(out[i].adversarial_image, expect);
  }
}

TEST(Attacks, OwnStylePrototypesArePassThrough) {
  const auto w = tiny_world(4, 1);
  const Tensor protos = gather_rows(w.data.images, std::vector<std::size_t>{0, 0});
  const auto out = attack_interpolation(w.data.images, w.data.labels, protos, w.models(),
                                        config(AttackMode::interpolation, 5));
  const Tensor pass = w.decoder.decode(w.encoder.encode(w.data.images));
  for (std::size_t i = 0; i < pass.size(); ++i) {
    ASSERT_NEAR(out[0].adversarial_image[i], pass[i], 1e-9);
  }
}

TEST(Attacks, ZeroEpsilonPgdIsIdentity) {
  const auto w = tiny_world(5, 3);
  AttackConfig cfg = config(AttackMode::pgd, 5);
  cfg.epsilon = 0.0;
  for (const auto& o : attack_pgd(w.data.images, w.data.labels, w.models(), cfg)) {
    EXPECT_EQ(o.adversarial_image, o.original_image);
  }
}

TEST(Attacks, FeasibleAtEveryStep) {
  const auto w = tiny_world(6, 4);
  std::size_t tau_checks = 0, gamma_checks = 0, pgd_checks = 0;
  const AttackObserver check = [&](const AttackStep& s) {
    if (s.mode == AttackMode::augmentation) {
      for (const Tensor* t : {s.tau_mu, s.tau_sigma}) {
        for (double v : t->values()) ASSERT_LE(std::abs(v), s.epsilon);
      }
      ++tau_checks;
    } else if (s.mode == AttackMode::interpolation) {
      for (const Tensor* g : {s.gamma_mu, s.gamma_sigma}) {
        const std::size_t k = g->dim(1);
        for (std::size_t r = 0; r < g->dim(0); ++r) ASSERT_TRUE(on_simplex(g->values().subspan(r * k, k)));
      }
      ++gamma_checks;
    } else {
      for (std::size_t i = 0; i < s.images->size(); ++i) {
        const double x = (*s.images)[i];
        ASSERT_LE(std::abs(x - (*s.origin)[i]), s.epsilon);
        ASSERT_GE(x, 0.0);
        ASSERT_LE(x, 1.0);
      }
      ++pgd_checks;
    }
  };
  AttackConfig aug = config(AttackMode::augmentation, 30);
  aug.lr = 0.1;  // large steps so the box constraint is hit
  run_attack(w.data.images, w.data.labels, w.models(), aug, nullptr, check);
  const Tensor protos = choose_prototypes(w.data, 3, 1);
  AttackConfig interp = config(AttackMode::interpolation, 30);
  interp.lr = 0.5;
  run_attack(w.data.images, w.data.labels, w.models(), interp, &protos, check);
  run_attack(w.data.images, w.data.labels, w.models(), config(AttackMode::pgd, 30), nullptr, check);
  EXPECT_EQ(tau_checks, 30u);
  EXPECT_EQ(gamma_checks, 30u);
  EXPECT_EQ(pgd_checks, 30u);
}

TEST(Attacks, Deterministic) {
  const auto w = tiny_world(7, 3);
  const Tensor protos = choose_prototypes(w.data, 3, 9);
  for (AttackMode mode : {AttackMode::augmentation, AttackMode::interpolation, AttackMode::pgd}) {
    const auto a = run_attack(w.data.images, w.data.labels, w.models(), config(mode, 8), &protos);
    const auto b = run_attack(w.data.images, w.data.labels, w.models(), config(mode, 8), &protos);
    for (std::size_t i = 0; i < a.size(); ++i) {
      EXPECT_EQ(a[i].adversarial_image, b[i].adversarial_image);
      EXPECT_EQ(a[i].success, b[i].success);
      EXPECT_EQ(a[i].distances.feature_l2, b[i].distances.feature_l2);
    }
  }
}

TEST(Attacks, MoreStepsNeverLoseSuccess) {
  const auto w = tiny_world(8, 8);
  for (AttackMode mode : {AttackMode::augmentation, AttackMode::pgd}) {
    const auto short_run = run_attack(w.data.images, w.data.labels, w.models(), config(mode, 3));
    const auto long_run = run_attack(w.data.images, w.data.labels, w.models(), config(mode, 12));
    for (std::size_t i = 0; i < short_run.size(); ++i) {
      if (short_run[i].success) {
        EXPECT_TRUE(long_run[i].success);
        EXPECT_EQ(short_run[i].steps_to_first_success, long_run[i].steps_to_first_success);
      }
    }
  }
}

TEST(Attacks, ReportedPredictionMatchesReturnedImage) {
  const auto w = tiny_world(9, 6);
  const Tensor protos = choose_prototypes(w.data, 3, 2);
  for (AttackMode mode : {AttackMode::augmentation, AttackMode::interpolation, AttackMode::pgd}) {
    for (const auto& o : run_attack(w.data.images, w.data.labels, w.models(), config(mode, 6), &protos)) {
      const Shape s = o.adversarial_image.shape();
      const auto pred = w.classifier.predict(o.adversarial_image.reshaped({1, s[0], s[1], s[2]}));
      EXPECT_EQ(pred[0], o.predicted_label);
      EXPECT_EQ(o.success, o.predicted_label != o.true_label);
      EXPECT_EQ(o.success, o.steps_to_first_success.has_value());
    }
  }
}

TEST(Attacks, TargetedSuccessMeansTarget) {
  const auto w = tiny_world(10, 8);
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < w.data.size(); ++i) {
    if (w.data.labels[i] != 0) keep.push_back(i);
  }
  const Dataset d = w.data.subset(keep);
  AttackConfig cfg = config(AttackMode::pgd, 10);
  cfg.targeted = true;
  cfg.target_label = 0;
  for (const auto& o : run_attack(d.images, d.labels, w.models(), cfg)) {
    EXPECT_EQ(o.success, o.predicted_label == 0);
    EXPECT_EQ(o.target_label, 0);
  }
}

TEST(Attacks, BatchedRunMatchesChunks) {
  const auto w = tiny_world(11, 5);
  AttackConfig one = config(AttackMode::augmentation, 4);
  AttackConfig chunked = one;
  chunked.batch = 2;
  const auto a = run_attack(w.data.images, w.data.labels, w.models(), one);
  const auto b = run_attack(w.data.images, w.data.labels, w.models(), chunked);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < a[i].adversarial_image.size(); ++j) {
      ASSERT_NEAR(a[i].adversarial_image[j], b[i].adversarial_image[j], 1e-9);
    }
  }
}

TEST(Prototypes, DistinctAndSeeded) {
  const auto w = tiny_world(12, 10);
  const Tensor a = choose_prototypes(w.data, 4, 1), b = choose_prototypes(w.data, 4, 1);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.shape(), (Shape{4, 3, 16, 16}));
  EXPECT_THROW(choose_prototypes(w.data, 11, 1), ConfigError);
}

}  // namespace
}  // namespace fsat
