#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fsat/ops.hpp"
#include "fsat/tensor.hpp"

namespace fsat {

using Metadata = std::map<std::string, std::string>;

struct NamedTensor {
  std::string name;
  Tensor value;
};

/// VGG-style encoder f, cut at relu{cut_block}_1.
///
/// Block b (1-based) is: max-pool (b > 1), conv{b}_1, relu, then conv{b}_2 ..
/// conv{b}_{convs_per_block} with relus. The cut block stops after its first relu.
/// Style layers are relu1_1 .. relu{style_layer_count}_1.
struct EncoderSpec {
  std::size_t cut_block = 2;
  std::vector<std::size_t> widths{32, 64};
  std::size_t convs_per_block = 1;
  std::size_t style_layer_count = 2;
  ops::PadMode padding = ops::PadMode::zero;
  std::size_t image_size = 32;
  std::size_t in_channels = 3;

  void validate() const;
  /// {C, H, W} of the embedding at the cut layer.
  Shape embedding_shape() const;
  std::string cut_layer_name() const;
  std::vector<std::string> style_layer_names() const;

  /// "relu3_1" -> 3.
  static std::size_t parse_cut_layer(std::string_view name);
};

/// Mirror of the encoder: the same blocks in reverse order, nearest x2 upsampling
/// in place of each pool, a final conv to image channels and a [0,1] clamp.
struct DecoderSpec {
  EncoderSpec encoder;
  std::size_t convs_per_block = 1;
  ops::PadMode padding = ops::PadMode::reflect;

  void validate() const;
};

/// Classifier M = M2 o M1 where M1 is exactly the encoder prefix.
/// Head: for each width, max-pool then conv+relu; then max-pool, flatten, linear.
struct ClassifierSpec {
  EncoderSpec encoder;
  std::vector<std::size_t> head_widths{64};
  std::size_t num_classes = 10;

  void validate() const;
};

Metadata to_metadata(const EncoderSpec& spec, const std::string& prefix = "encoder.");
EncoderSpec encoder_spec_from_metadata(const Metadata& meta, const std::string& prefix = "encoder.");
Metadata to_metadata(const DecoderSpec& spec);
DecoderSpec decoder_spec_from_metadata(const Metadata& meta);
Metadata to_metadata(const ClassifierSpec& spec);
ClassifierSpec classifier_spec_from_metadata(const Metadata& meta);

/// Parameter tensors of one network bound onto a tape.
struct ParamBinding {
  std::vector<Var> vars;
};

/// Ordered parameter list shared by all networks.
class Network {
 public:
  std::span<NamedTensor> parameters() { return params_; }
  std::span<const NamedTensor> parameters() const { return params_; }
  std::vector<Tensor*> parameter_tensors();
  std::size_t parameter_count() const;

  ParamBinding bind(Tape& tape, bool trainable) const;
  /// Gradients of a consumed tape for every bound parameter, in parameter order.
  static std::vector<Tensor> gradients(const Tape& tape, const ParamBinding& binding);

  /// Replaces parameter values by name; shapes and names must match exactly.
  void load_parameters(std::span<const NamedTensor> values);
  /// FNV-1a over the raw parameter bytes.
  std::uint64_t checksum() const;

 protected:
  void add_conv(const std::string& name, std::size_t c_out, std::size_t c_in, std::size_t k,
                std::uint64_t seed, double bias = 0.0);
  void add_linear(const std::string& name, std::size_t out, std::size_t in, std::uint64_t seed);

  std::vector<NamedTensor> params_;
};

struct EncoderOutput {
  Var embedding;
  std::vector<Var> style_activations;
};

class Encoder : public Network {
 public:
  Encoder() = default;
  Encoder(EncoderSpec spec, std::uint64_t seed);

  const EncoderSpec& spec() const { return spec_; }

  EncoderOutput forward(Tape& tape, Var images, const ParamBinding& binding) const;
  /// Frozen parameters.
  EncoderOutput forward(Tape& tape, Var images) const;
  /// Embedding without recording gradients.
  Tensor encode(const Tensor& images) const;

  /// Shared by Encoder and Classifier (whose first parameters are the encoder's).
  static EncoderOutput run(const EncoderSpec& spec, Tape& tape, Var images,
                           std::span<const Var> vars);
  static std::size_t tensor_count(const EncoderSpec& spec);

 private:
  friend class Classifier;
  EncoderSpec spec_;
};

class Decoder : public Network {
 public:
  Decoder() = default;
  Decoder(DecoderSpec spec, std::uint64_t seed);

  const DecoderSpec& spec() const { return spec_; }

  Var forward(Tape& tape, Var embedding, const ParamBinding& binding) const;
  Var forward(Tape& tape, Var embedding) const;
  Tensor decode(const Tensor& embedding) const;

 private:
  DecoderSpec spec_;
};

class Classifier : public Network {
 public:
  Classifier() = default;
  Classifier(ClassifierSpec spec, std::uint64_t seed);

  const ClassifierSpec& spec() const { return spec_; }

  /// M1: the encoder prefix.
  EncoderOutput encode(Tape& tape, Var images, const ParamBinding& binding) const;
  /// M2: logits from an embedding.
  Var head(Tape& tape, Var embedding, const ParamBinding& binding) const;
  /// M2(M1(x)).
  Var logits(Tape& tape, Var images, const ParamBinding& binding) const;
  Var logits(Tape& tape, Var images) const;

  Tensor predict_logits(const Tensor& images, std::size_t chunk = 128) const;
  std::vector<int> predict(const Tensor& images, std::size_t chunk = 128) const;

  /// Copy of the current prefix weights as a standalone encoder.
  Encoder prefix() const;
  /// True when the prefix weights equal the given encoder's bit for bit.
  bool prefix_matches(const Encoder& encoder) const;

 private:
  ClassifierSpec spec_;
};

/// Row-wise argmax of [N,K] logits.
std::vector<int> argmax_rows(const Tensor& logits);
/// Rows [begin, end) of a tensor along its first axis.
Tensor slice_rows(const Tensor& t, std::size_t begin, std::size_t end);
/// Stack selected rows of t along the first axis.
Tensor gather_rows(const Tensor& t, std::span<const std::size_t> rows);

}  // namespace fsat
