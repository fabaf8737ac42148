#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "fsat/nets.hpp"

namespace fsat {
namespace {

using testing::tiny_classifier_spec;

TEST(EncoderSpec, Validation) {
  EncoderSpec s;
  EXPECT_NO_THROW(s.validate());
  EXPECT_EQ(s.embedding_shape(), (Shape{64, 16, 16}));
  EXPECT_EQ(s.cut_layer_name(), "relu2_1");
  EXPECT_EQ(s.style_layer_names(), (std::vector<std::string>{"relu1_1", "relu2_1"}));
  EXPECT_EQ(EncoderSpec::parse_cut_layer("relu3_1"), 3u);
  EXPECT_THROW(EncoderSpec::parse_cut_layer("relu5_1"), ConfigError);
  s.widths = {32};
  EXPECT_THROW(s.validate(), ConfigError);
  s.widths = {32, 0};
  EXPECT_THROW(s.validate(), ConfigError);
}

TEST(EncoderSpec, MetadataRoundTrip) {
  ClassifierSpec c = tiny_classifier_spec(5);
  c.encoder.padding = ops::PadMode::reflect;
  c.encoder.convs_per_block = 2;
  const ClassifierSpec back = classifier_spec_from_metadata(to_metadata(c));
  EXPECT_EQ(back.encoder.widths, c.encoder.widths);
  EXPECT_EQ(back.encoder.padding, c.encoder.padding);
  EXPECT_EQ(back.encoder.convs_per_block, 2u);
  EXPECT_EQ(back.head_widths, c.head_widths);
  EXPECT_EQ(back.num_classes, 5u);
  Metadata broken = to_metadata(c);
  broken.erase("encoder.widths");
  EXPECT_THROW(classifier_spec_from_metadata(broken), ConfigError);
}

TEST(Networks, ShapesAndRanges) {
  const auto w = testing::tiny_world(1, 3);
  const Tensor b = w.encoder.encode(w.data.images);
  EXPECT_EQ(b.shape(), (Shape{3, 8, 8, 8}));
  const Tensor x = w.decoder.decode(b);
  EXPECT_EQ(x.shape(), w.data.images.shape());
  for (double v : x.values()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  EXPECT_EQ(w.classifier.predict_logits(w.data.images).shape(), (Shape{3, 8}));
  EXPECT_THROW(w.encoder.encode(Tensor(Shape{1, 3, 8, 8})), ConfigError);
}

TEST(Networks, ClassifierFactorsThroughPrefix) {
  const auto w = testing::tiny_world(2, 4);
  ASSERT_TRUE(w.classifier.prefix_matches(w.encoder));
  Tape tape;
  const ParamBinding bind = w.classifier.bind(tape, false);
  Var x = tape.constant(w.data.images);
  const Tensor direct = w.classifier.logits(tape, x, bind).value();
  const Tensor via = w.classifier.head(tape, tape.constant(w.encoder.encode(w.data.images)), bind).value();
  EXPECT_EQ(direct, via);

  Encoder other(w.classifier.spec().encoder, 99);
  EXPECT_FALSE(w.classifier.prefix_matches(other));
}

TEST(Networks, InitIsSeeded) {
  const ClassifierSpec spec = tiny_classifier_spec();
  EXPECT_EQ(Classifier(spec, 5).checksum(), Classifier(spec, 5).checksum());
  EXPECT_NE(Classifier(spec, 5).checksum(), Classifier(spec, 6).checksum());
}

TEST(Networks, LoadParametersChecksNamesAndShapes) {
  Classifier a(tiny_classifier_spec(), 1), b(tiny_classifier_spec(), 2);
  std::vector<NamedTensor> values(a.parameters().begin(), a.parameters().end());
  b.load_parameters(values);
  EXPECT_EQ(a.checksum(), b.checksum());
  values.back().name = "head.wrong";
  EXPECT_THROW(b.load_parameters(values), ConfigError);
  values.pop_back();
  EXPECT_THROW(b.load_parameters(values), ConfigError);
}

TEST(Networks, ParameterNames) {
  const Classifier c(tiny_classifier_spec(), 1);
  EXPECT_EQ(c.parameters().front().name, "encoder.conv1_1.weight");
  EXPECT_EQ(c.parameters().back().name, "head.fc.bias");
}

TEST(Networks, FrozenBindingHasNoGradient) {
  const auto w = testing::tiny_world(3, 2);
  Tape tape;
  const ParamBinding frozen = w.classifier.bind(tape, false);
  Var x = tape.leaf(w.data.images, true);
  tape.backward(ops::sum(w.classifier.logits(tape, x, frozen)));
  for (const Tensor& g : Network::gradients(tape, frozen)) EXPECT_EQ(g, Tensor(g.shape(), 0.0));
  EXPECT_NE(tape.grad(x), Tensor(w.data.images.shape(), 0.0));
}

TEST(Rows, SliceAndGather) {
  Tensor t(Shape{3, 2}, std::vector<double>{1, 2, 3, 4, 5, 6});
  EXPECT_EQ(slice_rows(t, 1, 3), Tensor(Shape{2, 2}, std::vector<double>{3, 4, 5, 6}));
  const std::size_t rows[] = {2, 0};
  EXPECT_EQ(gather_rows(t, rows), Tensor(Shape{2, 2}, std::vector<double>{5, 6, 1, 2}));
  EXPECT_THROW(slice_rows(t, 2, 4), ConfigError);
  EXPECT_EQ(argmax_rows(t), (std::vector<int>{1, 1, 1}));
}

}  // namespace
}  // namespace fsat
