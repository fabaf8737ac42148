#include <gtest/gtest.h>

#include <fstream>
#include <set>

#include "fixtures.hpp"
#include "fsat/io/config.hpp"
#include "fsat/io/manifest.hpp"

namespace fsat::io {
namespace {

TEST(Config, DefaultsAreDocumented) {
  std::set<std::string> seen;
  for (const auto& k : config_keys()) {
    EXPECT_FALSE(k.doc.empty()) << k.key;
    EXPECT_TRUE(seen.insert(k.key).second) << "duplicate " << k.key;
  }
  const RunConfig cfg;
  EXPECT_EQ(cfg.get("encoder.cut_layer"), "relu2_1");
  EXPECT_EQ(cfg.get_size("attack.steps"), 500u);
  EXPECT_EQ(cfg.get_double("attack.lr"), 0.01);
  EXPECT_EQ(cfg.get_size("attack.k"), 8u);
  EXPECT_EQ(cfg.get_size("adv.steps"), 400u);
  EXPECT_EQ(cfg.get_size("adv.epochs"), 25u);
  EXPECT_FALSE(cfg.get_optional_double("attack.epsilon").has_value());
}

TEST(Config, ParsesTextAndRejectsUnknownKeys) {
  RunConfig cfg;
  cfg.load_text("# comment\n\nseed = 7\n  attack.mode=pgd  \n", "inline");
  EXPECT_EQ(cfg.get_u64("seed"), 7u);
  EXPECT_EQ(cfg.get("attack.mode"), "pgd");
  try {
    cfg.load_text("seed = 1\nattack.epsilonn = 0.4\n", "f.cfg");
    FAIL();
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("attack.epsilonn"), std::string::npos);
    EXPECT_NE(msg.find("f.cfg:2"), std::string::npos);
  }
  EXPECT_THROW(cfg.load_text("no equals sign\n", "x"), ConfigError);
  EXPECT_THROW(cfg.apply_override("attack.lr"), ConfigError);
  EXPECT_THROW(RunConfig::from_file("/nonexistent/run.cfg"), ConfigError);
}

TEST(Config, TypedGettersValidate) {
  RunConfig cfg;
  cfg.set("attack.steps", "many");
  EXPECT_THROW(cfg.get_size("attack.steps"), ConfigError);
  cfg.set("attack.targeted", "maybe");
  EXPECT_THROW(cfg.get_bool("attack.targeted"), ConfigError);
}

TEST(Config, TextRoundTrip) {
  RunConfig cfg;
  cfg.apply_override("attack.epsilon=0.405");
  cfg.apply_override("output_dir=/tmp/x y");
  RunConfig back;
  back.load_text(cfg.to_text(), "roundtrip");
  EXPECT_EQ(back.values(), cfg.values());
}

TEST(Config, BuildsComponentConfigs) {
  RunConfig cfg;
  cfg.apply_override("attack.epsilon=0.405");
  cfg.apply_override("attack.targeted=true");
  cfg.apply_override("attack.target=3");
  cfg.apply_override("encoder.widths=8,16");
  const AttackConfig a = attack_config(cfg);
  EXPECT_DOUBLE_EQ(a.resolved_epsilon(), 0.405);
  EXPECT_EQ(a.target_label, 3);
  EXPECT_EQ(classifier_spec(cfg, 10).encoder.widths, (std::vector<std::size_t>{8, 16}));
  cfg.apply_override("attack.target=");
  EXPECT_THROW(attack_config(cfg), ConfigError);

  cfg.apply_override("adv.mode=interpolation");
  cfg.apply_override("adv.steps=100");
  const AdvTrainConfig t = adv_train_config(cfg);
  EXPECT_EQ(t.attack.mode, AttackMode::interpolation);
  EXPECT_EQ(t.steps, 100u);
  EXPECT_FALSE(t.attack.targeted);

  cfg.apply_override("dataset.name=cifar10");
  EXPECT_THROW(dataset_spec(cfg, Split::train), ConfigError);
  cfg.apply_override("encoder.cut_layer=relu9_1");
  EXPECT_THROW(encoder_spec(cfg), ConfigError);
}

TEST(Config, CheckpointPathFallsBackToOutputDir) {
  RunConfig cfg;
  cfg.set("output_dir", "runs/a");
  EXPECT_EQ(cfg.checkpoint_path("checkpoint.classifier", "classifier.fsat"),
            std::filesystem::path("runs/a/classifier.fsat"));
  cfg.set("checkpoint.classifier", "/models/m.fsat");
  EXPECT_EQ(cfg.checkpoint_path("checkpoint.classifier", "x"), std::filesystem::path("/models/m.fsat"));
}

TEST(Manifest, ReloadsToSameConfig) {
  RunConfig cfg;
  const auto dir = testing::scratch_dir("manifest");
  cfg.set("output_dir", dir.string());
  cfg.set("attack.steps", "2000");
  const auto path = write_manifest("attack", cfg);
  EXPECT_EQ(path.filename(), "manifest_attack.cfg");
  const RunConfig back = RunConfig::from_file(path);
  EXPECT_EQ(back.values(), cfg.values());
  EXPECT_NE(manifest_text("attack", cfg).find(build_id()), std::string::npos);
}

}  // namespace
}  // namespace fsat::io
