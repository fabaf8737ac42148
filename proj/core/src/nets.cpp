#include "fsat/nets.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "fsat/rng.hpp"
#include "fsat/strings.hpp"

namespace fsat {
namespace {

constexpr std::size_t kKernel = 3;

ops::Conv2dOptions conv_opts(ops::PadMode mode) { return {1, kKernel / 2, mode}; }

std::string pad_name(ops::PadMode m) { return m == ops::PadMode::zero ? "zero" : "reflect"; }

ops::PadMode parse_pad(const std::string& s) {
  if (s == "zero") return ops::PadMode::zero;
  if (s == "reflect") return ops::PadMode::reflect;
  throw ConfigError("padding must be 'zero' or 'reflect', got '" + s + "'");
}

const std::string& meta_get(const Metadata& meta, const std::string& key) {
  auto it = meta.find(key);
  if (it == meta.end()) throw ConfigError("missing metadata key '" + key + "'");
  return it->second;
}

Var conv_relu(Tape& tape, Var x, std::span<const Var> vars, std::size_t& next, ops::PadMode mode) {
  (void)tape;
  Var y = ops::conv2d(x, vars[next], vars[next + 1], conv_opts(mode));
  next += 2;
  return ops::relu(y);
}

// Number of convs in encoder block b (1-based).
std::size_t block_convs(const EncoderSpec& spec, std::size_t b) {
  return b == spec.cut_block ? 1 : spec.convs_per_block;
}

}  // namespace

// ---------------------------------------------------------------------------
// Specs

void EncoderSpec::validate() const {
  if (cut_block < 1 || cut_block > 4) throw ConfigError("encoder cut layer must be relu1_1..relu4_1");
  if (widths.size() != cut_block) {
    throw ConfigError("encoder needs one width per block up to the cut (" +
                      std::to_string(cut_block) + "), got " + std::to_string(widths.size()));
  }
  for (auto w : widths) {
    if (w == 0) throw ConfigError("encoder widths must be positive");
  }
  if (convs_per_block < 1) throw ConfigError("encoder convs_per_block must be >= 1");
  if (style_layer_count < 1 || style_layer_count > cut_block) {
    throw ConfigError("style layers must be a non-empty prefix of the blocks up to the cut");
  }
  if (in_channels == 0) throw ConfigError("encoder in_channels must be positive");
  const std::size_t div = std::size_t{1} << (cut_block - 1);
  if (image_size < 2 || image_size % div != 0) {
    throw ConfigError("image size " + std::to_string(image_size) + " not divisible by " +
                      std::to_string(div));
  }
}

Shape EncoderSpec::embedding_shape() const {
  const std::size_t s = image_size >> (cut_block - 1);
  return {widths.back(), s, s};
}

std::string EncoderSpec::cut_layer_name() const { return "relu" + std::to_string(cut_block) + "_1"; }

std::vector<std::string> EncoderSpec::style_layer_names() const {
  std::vector<std::string> out;
  for (std::size_t b = 1; b <= style_layer_count; ++b) out.push_back("relu" + std::to_string(b) + "_1");
  return out;
}

std::size_t EncoderSpec::parse_cut_layer(std::string_view name) {
  for (std::size_t b = 1; b <= 4; ++b) {
    if (name == "relu" + std::to_string(b) + "_1") return b;
  }
  throw ConfigError("unknown cut layer '" + std::string(name) + "' (expected relu1_1..relu4_1)");
}

void DecoderSpec::validate() const {
  encoder.validate();
  if (convs_per_block < 1) throw ConfigError("decoder convs_per_block must be >= 1");
}

void ClassifierSpec::validate() const {
  encoder.validate();
  if (num_classes < 1) throw ConfigError("classifier needs at least one class");
  std::size_t s = encoder.embedding_shape()[1];
  for (std::size_t i = 0; i <= head_widths.size(); ++i) {
    if (s < 2) throw ConfigError("classifier head pools below 1x1");
    s /= 2;
  }
  for (auto w : head_widths) {
    if (w == 0) throw ConfigError("classifier head widths must be positive");
  }
}

Metadata to_metadata(const EncoderSpec& spec, const std::string& prefix) {
  return {{prefix + "cut_layer", spec.cut_layer_name()},
          {prefix + "widths", join_sizes(spec.widths)},
          {prefix + "convs_per_block", std::to_string(spec.convs_per_block)},
          {prefix + "style_layers", std::to_string(spec.style_layer_count)},
          {prefix + "padding", pad_name(spec.padding)},
          {prefix + "image_size", std::to_string(spec.image_size)},
          {prefix + "in_channels", std::to_string(spec.in_channels)}};
}

EncoderSpec encoder_spec_from_metadata(const Metadata& meta, const std::string& prefix) {
  EncoderSpec spec;
  spec.cut_block = EncoderSpec::parse_cut_layer(meta_get(meta, prefix + "cut_layer"));
  spec.widths = parse_size_list(meta_get(meta, prefix + "widths"), prefix + "widths");
  spec.convs_per_block = parse_uint(meta_get(meta, prefix + "convs_per_block"), "convs_per_block");
  spec.style_layer_count = parse_uint(meta_get(meta, prefix + "style_layers"), "style_layers");
  spec.padding = parse_pad(meta_get(meta, prefix + "padding"));
  spec.image_size = parse_uint(meta_get(meta, prefix + "image_size"), "image_size");
  spec.in_channels = parse_uint(meta_get(meta, prefix + "in_channels"), "in_channels");
  spec.validate();
  return spec;
}

Metadata to_metadata(const DecoderSpec& spec) {
  Metadata meta = to_metadata(spec.encoder);
  meta["decoder.convs_per_block"] = std::to_string(spec.convs_per_block);
  meta["decoder.padding"] = pad_name(spec.padding);
  return meta;
}

DecoderSpec decoder_spec_from_metadata(const Metadata& meta) {
  DecoderSpec spec;
  spec.encoder = encoder_spec_from_metadata(meta);
  spec.convs_per_block =
      parse_uint(meta_get(meta, "decoder.convs_per_block"), "decoder.convs_per_block");
  spec.padding = parse_pad(meta_get(meta, "decoder.padding"));
  spec.validate();
  return spec;
}

Metadata to_metadata(const ClassifierSpec& spec) {
  Metadata meta = to_metadata(spec.encoder);
  meta["classifier.head_widths"] = join_sizes(spec.head_widths);
  meta["classifier.num_classes"] = std::to_string(spec.num_classes);
  return meta;
}

ClassifierSpec classifier_spec_from_metadata(const Metadata& meta) {
  ClassifierSpec spec;
  spec.encoder = encoder_spec_from_metadata(meta);
  const std::string& widths = meta_get(meta, "classifier.head_widths");
  spec.head_widths = widths.empty() ? std::vector<std::size_t>{}
                                    : parse_size_list(widths, "classifier.head_widths");
  spec.num_classes = parse_uint(meta_get(meta, "classifier.num_classes"), "classifier.num_classes");
  spec.validate();
  return spec;
}

// ---------------------------------------------------------------------------
// Network

std::vector<Tensor*> Network::parameter_tensors() {
  std::vector<Tensor*> out;
  out.reserve(params_.size());
  for (auto& p : params_) out.push_back(&p.value);
  return out;
}

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

ParamBinding Network::bind(Tape& tape, bool trainable) const {
  ParamBinding b;
  b.vars.reserve(params_.size());
  for (const auto& p : params_) b.vars.push_back(tape.leaf(p.value, trainable));
  return b;
}

std::vector<Tensor> Network::gradients(const Tape& tape, const ParamBinding& binding) {
  std::vector<Tensor> out;
  out.reserve(binding.vars.size());
  for (const Var& v : binding.vars) out.push_back(tape.grad(v));
  return out;
}

void Network::load_parameters(std::span<const NamedTensor> values) {
  if (values.size() != params_.size()) {
    throw ConfigError("parameter count mismatch: expected " + std::to_string(params_.size()) +
                      ", got " + std::to_string(values.size()));
  }
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (values[i].name != params_[i].name || values[i].value.shape() != params_[i].value.shape()) {
      throw ConfigError("parameter mismatch at '" + params_[i].name + "' (got '" + values[i].name +
                        "' " + shape_string(values[i].value.shape()) + ")");
    }
  }
  for (std::size_t i = 0; i < params_.size(); ++i) params_[i].value = values[i].value;
}

std::uint64_t Network::checksum() const {
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto& p : params_) {
    for (double v : p.value.values()) {
      std::uint64_t bits = 0;
      std::memcpy(&bits, &v, sizeof bits);
      for (int i = 0; i < 8; ++i) {
        h ^= (bits >> (8 * i)) & 0xffU;
        h *= 1099511628211ULL;
      }
    }
  }
  return h;
}

void Network::add_conv(const std::string& name, std::size_t c_out, std::size_t c_in, std::size_t k,
                       std::uint64_t seed, double bias) {
  Rng rng(derive_seed(seed, params_.size()));
  const double bound = std::sqrt(6.0 / static_cast<double>(c_in * k * k));
  Tensor w(Shape{c_out, c_in, k, k});
  for (double& v : w.values()) v = rng.uniform(-bound, bound);
  params_.push_back({name + ".weight", std::move(w)});
  params_.push_back({name + ".bias", Tensor(Shape{c_out}, bias)});
}

void Network::add_linear(const std::string& name, std::size_t out, std::size_t in,
                         std::uint64_t seed) {
  Rng rng(derive_seed(seed, params_.size()));
  const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
  Tensor w(Shape{out, in});
  for (double& v : w.values()) v = rng.uniform(-bound, bound);
  params_.push_back({name + ".weight", std::move(w)});
  params_.push_back({name + ".bias", Tensor(Shape{out}, 0.0)});
}

// ---------------------------------------------------------------------------
// Encoder

Encoder::Encoder(EncoderSpec spec, std::uint64_t seed) : spec_(std::move(spec)) {
  spec_.validate();
  std::size_t in = spec_.in_channels;
  for (std::size_t b = 1; b <= spec_.cut_block; ++b) {
    for (std::size_t j = 1; j <= block_convs(spec_, b); ++j) {
      const std::size_t out = spec_.widths[b - 1];
      add_conv("encoder.conv" + std::to_string(b) + "_" + std::to_string(j), out, in, kKernel, seed);
      in = out;
    }
  }
}

std::size_t Encoder::tensor_count(const EncoderSpec& spec) {
  std::size_t convs = 0;
  for (std::size_t b = 1; b <= spec.cut_block; ++b) convs += block_convs(spec, b);
  return 2 * convs;
}

EncoderOutput Encoder::run(const EncoderSpec& spec, Tape& tape, Var images,
                           std::span<const Var> vars) {
  const Shape& s = images.shape();
  if (s.size() != 4 || s[1] != spec.in_channels || s[2] != spec.image_size ||
      s[3] != spec.image_size) {
    throw ConfigError("encoder expects N x " + std::to_string(spec.in_channels) + " x " +
                      std::to_string(spec.image_size) + " x " + std::to_string(spec.image_size) +
                      " input, got " + shape_string(s));
  }
  if (vars.size() < tensor_count(spec)) throw ConfigError("encoder binding too short");
  EncoderOutput out;
  Var x = images;
  std::size_t next = 0;
  for (std::size_t b = 1; b <= spec.cut_block; ++b) {
    if (b > 1) x = ops::max_pool2d(x);
    x = conv_relu(tape, x, vars, next, spec.padding);
    if (b <= spec.style_layer_count) out.style_activations.push_back(x);
    for (std::size_t j = 2; j <= block_convs(spec, b); ++j) x = conv_relu(tape, x, vars, next, spec.padding);
  }
  out.embedding = x;
  return out;
}

EncoderOutput Encoder::forward(Tape& tape, Var images, const ParamBinding& binding) const {
  return run(spec_, tape, images, binding.vars);
}

EncoderOutput Encoder::forward(Tape& tape, Var images) const {
  return forward(tape, images, bind(tape, false));
}

Tensor Encoder::encode(const Tensor& images) const {
  Tape tape;
  return forward(tape, tape.constant(images)).embedding.value();
}

// ---------------------------------------------------------------------------
// Decoder

Decoder::Decoder(DecoderSpec spec, std::uint64_t seed) : spec_(std::move(spec)) {
  spec_.validate();
  const EncoderSpec& e = spec_.encoder;
  std::size_t ch = e.widths.back();
  for (std::size_t b = e.cut_block; b >= 1; --b) {
    const std::size_t extras = b == e.cut_block ? 0 : spec_.convs_per_block - 1;
    for (std::size_t j = 0; j < extras; ++j) {
      add_conv("decoder.block" + std::to_string(b) + ".conv" + std::to_string(j + 2), ch, ch, kKernel,
               seed);
    }
    if (b > 1) {
      add_conv("decoder.block" + std::to_string(b) + ".conv1", e.widths[b - 2], ch, kKernel, seed);
      ch = e.widths[b - 2];
    }
  }
  // Bias 0.5 starts the output in the middle of the clamp range.
  add_conv("decoder.out", e.in_channels, ch, kKernel, seed, 0.5);
}

Var Decoder::forward(Tape& tape, Var embedding, const ParamBinding& binding) const {
  const EncoderSpec& e = spec_.encoder;
  const Shape expected = e.embedding_shape();
  const Shape& s = embedding.shape();
  if (s.size() != 4 || s[1] != expected[0] || s[2] != expected[1] || s[3] != expected[2]) {
    throw ConfigError("decoder expects N x " + shape_string(expected) + " embedding, got " +
                      shape_string(s));
  }
  const auto& vars = binding.vars;
  if (vars.size() != params_.size()) throw ConfigError("decoder binding size mismatch");
  Var x = embedding;
  std::size_t next = 0;
  for (std::size_t b = e.cut_block; b >= 1; --b) {
    const std::size_t extras = b == e.cut_block ? 0 : spec_.convs_per_block - 1;
    for (std::size_t j = 0; j < extras; ++j) x = conv_relu(tape, x, vars, next, spec_.padding);
    if (b > 1) {
      x = conv_relu(tape, x, vars, next, spec_.padding);
      x = ops::upsample_nearest2x(x);
    }
  }
  x = ops::conv2d(x, vars[next], vars[next + 1], conv_opts(spec_.padding));
  return ops::clamp(x, 0.0, 1.0);
}

Var Decoder::forward(Tape& tape, Var embedding) const {
  return forward(tape, embedding, bind(tape, false));
}

Tensor Decoder::decode(const Tensor& embedding) const {
  Tape tape;
  return forward(tape, tape.constant(embedding)).value();
}

// ---------------------------------------------------------------------------
// Classifier

Classifier::Classifier(ClassifierSpec spec, std::uint64_t seed) : spec_(std::move(spec)) {
  spec_.validate();
  Encoder prefix(spec_.encoder, seed);
  params_.assign(prefix.parameters().begin(), prefix.parameters().end());
  const std::uint64_t head_seed = derive_seed(seed, 0xC1A55);
  std::size_t ch = spec_.encoder.widths.back();
  std::size_t s = spec_.encoder.embedding_shape()[1];
  for (std::size_t i = 0; i < spec_.head_widths.size(); ++i) {
    add_conv("head.conv" + std::to_string(i + 1), spec_.head_widths[i], ch, kKernel, head_seed);
    ch = spec_.head_widths[i];
    s /= 2;
  }
  s /= 2;
  add_linear("head.fc", spec_.num_classes, ch * s * s, head_seed);
}

EncoderOutput Classifier::encode(Tape& tape, Var images, const ParamBinding& binding) const {
  return Encoder::run(spec_.encoder, tape, images, binding.vars);
}

Var Classifier::head(Tape& tape, Var embedding, const ParamBinding& binding) const {
  const auto& vars = binding.vars;
  if (vars.size() != params_.size()) throw ConfigError("classifier binding size mismatch");
  std::size_t next = Encoder::tensor_count(spec_.encoder);
  Var x = embedding;
  for (std::size_t i = 0; i < spec_.head_widths.size(); ++i) {
    x = ops::max_pool2d(x);
    x = conv_relu(tape, x, vars, next, spec_.encoder.padding);
  }
  x = ops::max_pool2d(x);
  const Shape& s = x.shape();
  x = ops::reshape(x, Shape{s[0], s[1] * s[2] * s[3]});
  return ops::linear(x, vars[next], vars[next + 1]);
}

Var Classifier::logits(Tape& tape, Var images, const ParamBinding& binding) const {
  return head(tape, encode(tape, images, binding).embedding, binding);
}

Var Classifier::logits(Tape& tape, Var images) const { return logits(tape, images, bind(tape, false)); }

Tensor Classifier::predict_logits(const Tensor& images, std::size_t chunk) const {
  const std::size_t n = images.dim(0);
  Tensor out(Shape{n, spec_.num_classes});
  for (std::size_t b = 0; b < n; b += chunk) {
    const std::size_t e = std::min(n, b + chunk);
    Tape tape;
    Tensor part = logits(tape, tape.constant(slice_rows(images, b, e))).value();
    std::copy(part.values().begin(), part.values().end(), out.data() + b * spec_.num_classes);
  }
  return out;
}

std::vector<int> Classifier::predict(const Tensor& images, std::size_t chunk) const {
  return argmax_rows(predict_logits(images, chunk));
}

Encoder Classifier::prefix() const {
  Encoder e;
  e.spec_ = spec_.encoder;
  const std::size_t count = Encoder::tensor_count(spec_.encoder);
  e.params_.assign(params_.begin(), params_.begin() + static_cast<std::ptrdiff_t>(count));
  return e;
}

bool Classifier::prefix_matches(const Encoder& encoder) const {
  const auto other = encoder.parameters();
  if (other.size() != Encoder::tensor_count(spec_.encoder)) return false;
  for (std::size_t i = 0; i < other.size(); ++i) {
    if (other[i].name != params_[i].name || !(other[i].value == params_[i].value)) return false;
  }
  return true;
}

std::vector<int> argmax_rows(const Tensor& logits) {
  if (logits.rank() != 2) throw ConfigError("argmax_rows expects [N,K]");
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  std::vector<int> out(n);
  for (std::size_t r = 0; r < n; ++r) {
    const double* row = logits.data() + r * k;
    out[r] = static_cast<int>(std::max_element(row, row + k) - row);
  }
  return out;
}

Tensor slice_rows(const Tensor& t, std::size_t begin, std::size_t end) {
  if (t.rank() == 0 || begin > end || end > t.dim(0)) throw ConfigError("slice_rows out of range");
  Shape s = t.shape();
  const std::size_t row = t.dim(0) == 0 ? 0 : t.size() / t.dim(0);
  s[0] = end - begin;
  return Tensor(s, std::vector<double>(t.data() + begin * row, t.data() + end * row));
}

Tensor gather_rows(const Tensor& t, std::span<const std::size_t> rows) {
  if (t.rank() == 0) throw ConfigError("gather_rows needs a leading axis");
  Shape s = t.shape();
  const std::size_t row = t.dim(0) == 0 ? 0 : t.size() / t.dim(0);
  s[0] = rows.size();
  Tensor out(s);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= t.dim(0)) throw ConfigError("gather_rows index out of range");
    std::copy_n(t.data() + rows[i] * row, row, out.data() + i * row);
  }
  return out;
}

}  // namespace fsat
