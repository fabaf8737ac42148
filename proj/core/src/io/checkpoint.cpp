#include "fsat/io/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

namespace fsat::io {

namespace {

constexpr char kMagic[4] = {'F', 'S', 'A', 'T'};

class Writer {
 public:
  void bytes(const void* p, std::size_t n) { out_.append(static_cast<const char*>(p), n); }
  void u8(std::uint8_t v) { out_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(const std::string& in) : in_(in) {}

  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return in_.size() - pos_; }

  void need(std::size_t n, const char* what) const {
    if (remaining() < n) {
      throw IoError(std::string("checkpoint truncated reading ") + what + " at byte " +
                    std::to_string(pos_));
    }
  }
  std::uint8_t u8(const char* what) {
    need(1, what);
    return static_cast<std::uint8_t>(in_[pos_++]);
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(in_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(in_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return v;
  }
  std::string str(const char* what) {
    const std::uint32_t n = u32(what);
    need(n, what);
    std::string s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  const std::string& in_;
  std::size_t pos_ = 0;
};

}  // namespace

const Tensor& Checkpoint::tensor(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return t.value;
  }
  throw ConfigError("checkpoint has no tensor '" + name + "'");
}

bool Checkpoint::operator==(const Checkpoint& other) const {
  if (tensors.size() != other.tensors.size() || metadata != other.metadata) return false;
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    if (tensors[i].name != other.tensors[i].name || !(tensors[i].value == other.tensors[i].value)) {
      return false;
    }
  }
  return true;
}

std::string encode_checkpoint(const Checkpoint& ckpt, DType dtype) {
  Writer w;
  w.bytes(kMagic, 4);
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& [name, value] : ckpt.tensors) {
    w.str(name);
    w.u8(static_cast<std::uint8_t>(dtype));
    w.u32(static_cast<std::uint32_t>(value.rank()));
    for (std::size_t d : value.shape()) w.u64(d);
    for (double v : value.values()) {
      if (dtype == DType::f64) {
        w.u64(std::bit_cast<std::uint64_t>(v));
      } else {
        w.u32(std::bit_cast<std::uint32_t>(static_cast<float>(v)));
      }
    }
  }
  w.u32(static_cast<std::uint32_t>(ckpt.metadata.size()));
  for (const auto& [k, v] : ckpt.metadata) {
    w.str(k);
    w.str(v);
  }
  return w.take();
}

Checkpoint decode_checkpoint(const std::string& bytes) {
  Reader r(bytes);
  r.need(4, "magic");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw IoError("not a checkpoint: bad magic at byte 0");
  r.u32("magic");
  const std::uint32_t version = r.u32("version");
  if (version != kCheckpointVersion) {
    throw IoError("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                  std::to_string(kCheckpointVersion) + ")");
  }
  Checkpoint ckpt;
  const std::uint32_t count = r.u32("tensor count");
  for (std::uint32_t t = 0; t < count; ++t) {
    const std::size_t record_start = r.offset();
    std::string name = r.str("tensor name");
    const std::uint8_t tag = r.u8("dtype");
    if (tag > 1) {
      throw IoError("unknown dtype tag " + std::to_string(tag) + " at byte " +
                    std::to_string(record_start));
    }
    const std::uint32_t rank = r.u32("rank");
    if (rank > 8) throw IoError("implausible rank " + std::to_string(rank) + " for '" + name + "'");
    Shape shape(rank);
    std::uint64_t count_values = 1;
    for (auto& d : shape) {
      d = r.u64("dims");
      if (d != 0 && count_values > std::numeric_limits<std::uint64_t>::max() / d) {
        throw IoError("tensor '" + name + "' size overflows");
      }
      count_values *= d;
    }
    const std::size_t width = tag == 0 ? 8 : 4;
    if (count_values > r.remaining() / width) {
      throw IoError("checkpoint truncated in tensor '" + name + "' at byte " +
                    std::to_string(r.offset()));
    }
    std::vector<double> values(count_values);
    for (auto& v : values) {
      v = tag == 0 ? std::bit_cast<double>(r.u64("values"))
                   : static_cast<double>(std::bit_cast<float>(r.u32("values")));
    }
    ckpt.tensors.push_back({std::move(name), Tensor(std::move(shape), std::move(values))});
  }
  const std::uint32_t meta = r.u32("metadata count");
  for (std::uint32_t i = 0; i < meta; ++i) {
    std::string k = r.str("metadata key");
    ckpt.metadata[k] = r.str("metadata value");
  }
  if (r.remaining() != 0) {
    throw IoError("trailing bytes after checkpoint at byte " + std::to_string(r.offset()));
  }
  return ckpt;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt, DType dtype) {
  const std::string bytes = encode_checkpoint(ckpt, dtype);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_checkpoint(bytes);
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

namespace {

std::vector<NamedTensor> copy_params(std::span<const NamedTensor> p) { return {p.begin(), p.end()}; }

void require_kind(const Checkpoint& ckpt, const std::string& kind) {
  auto it = ckpt.metadata.find("kind");
  if (it == ckpt.metadata.end() || it->second != kind) {
    throw ConfigError("checkpoint is not a " + kind + " checkpoint");
  }
}

}  // namespace

Checkpoint classifier_checkpoint(const Classifier& model, Metadata extra) {
  Checkpoint c;
  c.tensors = copy_params(model.parameters());
  c.metadata = to_metadata(model.spec());
  c.metadata["kind"] = "classifier";
  for (auto& [k, v] : extra) c.metadata[k] = v;
  return c;
}

Classifier classifier_from_checkpoint(const Checkpoint& ckpt) {
  require_kind(ckpt, "classifier");
  Classifier model(classifier_spec_from_metadata(ckpt.metadata), 0);
  model.load_parameters(ckpt.tensors);
  return model;
}

Checkpoint decoder_checkpoint(const Decoder& decoder, const Encoder& encoder, Metadata extra) {
  Checkpoint c;
  c.tensors = copy_params(encoder.parameters());
  for (const auto& p : decoder.parameters()) c.tensors.push_back(p);
  c.metadata = to_metadata(decoder.spec());
  c.metadata["kind"] = "decoder";
  for (auto& [k, v] : extra) c.metadata[k] = v;
  return c;
}

AutoEncoder autoencoder_from_checkpoint(const Checkpoint& ckpt) {
  require_kind(ckpt, "decoder");
  const DecoderSpec spec = decoder_spec_from_metadata(ckpt.metadata);
  AutoEncoder ae{Encoder(spec.encoder, 0), Decoder(spec, 0)};
  std::vector<NamedTensor> enc, dec;
  for (const auto& t : ckpt.tensors) (t.name.rfind("encoder.", 0) == 0 ? enc : dec).push_back(t);
  ae.encoder.load_parameters(enc);
  ae.decoder.load_parameters(dec);
  return ae;
}

}  // namespace fsat::io
