#include "fsat/io/datasets.hpp"

#include <zlib.h>

#include <algorithm>
#include <array>
#include <cstring>
#include <fstream>
#include <iterator>
#include <optional>
#include <vector>


namespace fsat::io {

std::string to_string(DatasetName name) {
  switch (name) {
    case DatasetName::cifar10:
      return "cifar10";
    case DatasetName::svhn_cropped:
      return "svhn-cropped";
    case DatasetName::synthetic_shapes:
      return "synthetic-shapes";
  }
  return "unknown";
}

DatasetName parse_dataset_name(const std::string& name) {
  if (name == "cifar10") return DatasetName::cifar10;
  if (name == "svhn-cropped") return DatasetName::svhn_cropped;
  if (name == "synthetic-shapes") return DatasetName::synthetic_shapes;
  throw ConfigError("unknown dataset '" + name + "' (expected cifar10, svhn-cropped or synthetic-shapes)");
}

Split parse_split(const std::string& name) {
  if (name == "train") return Split::train;
  if (name == "test") return Split::test;
  throw ConfigError("unknown split '" + name + "' (expected train or test)");
}

namespace {

constexpr std::size_t kSide = 32;
constexpr std::size_t kPixels = 3 * kSide * kSide;
constexpr std::size_t kCifarRecord = 1 + kPixels;

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

Dataset concat(std::vector<Dataset> parts) {
  std::size_t total = 0;
  for (const auto& p : parts) total += p.size();
  Dataset out;
  out.num_classes = parts.empty() ? 0 : parts[0].num_classes;
  out.images = Tensor(Shape{total, 3, kSide, kSide});
  std::size_t at = 0;
  for (const auto& p : parts) {
    std::copy(p.images.data(), p.images.data() + p.images.size(), out.images.data() + at * kPixels);
    out.labels.insert(out.labels.end(), p.labels.begin(), p.labels.end());
    at += p.size();
  }
  return out;
}

}  // namespace

Dataset load_cifar10_batch(const std::filesystem::path& path, std::size_t limit) {
  const std::string bytes = read_file(path);
  if (bytes.empty() || bytes.size() % kCifarRecord != 0) {
    const std::size_t whole = bytes.size() / kCifarRecord;
    throw IoError(path.string() + ": truncated record at byte " + std::to_string(whole * kCifarRecord) +
                  " (file is " + std::to_string(bytes.size()) + " bytes, records are " +
                  std::to_string(kCifarRecord) + ")");
  }
  std::size_t n = bytes.size() / kCifarRecord;
  if (limit > 0) n = std::min(n, limit);
  Dataset out;
  out.num_classes = 10;
  out.images = Tensor(Shape{n, 3, kSide, kSide});
  out.labels.resize(n);
  for (std::size_t r = 0; r < n; ++r) {
    const auto* rec = reinterpret_cast<const unsigned char*>(bytes.data() + r * kCifarRecord);
    if (rec[0] > 9) {
      throw IoError(path.string() + ": label " + std::to_string(rec[0]) + " at byte " +
                    std::to_string(r * kCifarRecord));
    }
    out.labels[r] = rec[0];
    double* dst = out.images.data() + r * kPixels;
    for (std::size_t i = 0; i < kPixels; ++i) dst[i] = rec[1 + i] / 255.0;
  }
  return out;
}

Dataset load_cifar10(const std::filesystem::path& root, Split split, std::size_t limit) {
  std::filesystem::path dir = root;
  if (!std::filesystem::exists(dir / "test_batch.bin") &&
      std::filesystem::exists(dir / "cifar-10-batches-bin")) {
    dir /= "cifar-10-batches-bin";
  }
  if (split == Split::test) return load_cifar10_batch(dir / "test_batch.bin", limit);
  std::vector<Dataset> parts;
  std::size_t have = 0;
  for (int b = 1; b <= 5 && (limit == 0 || have < limit); ++b) {
    parts.push_back(load_cifar10_batch(dir / ("data_batch_" + std::to_string(b) + ".bin"),
                                       limit == 0 ? 0 : limit - have));
    have += parts.back().size();
  }
  return concat(std::move(parts));
}

namespace {

// MATLAB level-5 MAT-file data types used by the cropped-digits release.
enum MatType : std::uint32_t {
  miINT8 = 1,
  miUINT8 = 2,
  miINT16 = 3,
  miUINT16 = 4,
  miINT32 = 5,
  miUINT32 = 6,
  miSINGLE = 7,
  miDOUBLE = 9,
  miINT64 = 12,
  miUINT64 = 13,
  miMATRIX = 14,
  miCOMPRESSED = 15,
};

struct Element {
  std::uint32_t type = 0;
  std::size_t offset = 0;  // of the payload, within the buffer
  std::size_t size = 0;
  std::size_t next = 0;
};

std::uint32_t le32(const std::string& b, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(b[at + i])) << (8 * i);
  return v;
}

Element read_element(const std::string& buf, std::size_t at, const std::string& where) {
  if (at + 8 > buf.size()) throw IoError(where + ": truncated element tag at byte " + std::to_string(at));
  Element e;
  const std::uint32_t first = le32(buf, at);
  if ((first >> 16) != 0) {  // small element: payload packed into the tag
    e.type = first & 0xffff;
    e.size = first >> 16;
    e.offset = at + 4;
    e.next = at + 8;
    return e;
  }
  e.type = first;
  e.size = le32(buf, at + 4);
  e.offset = at + 8;
  if (e.offset + e.size > buf.size()) {
    throw IoError(where + ": element at byte " + std::to_string(at) + " runs past end of data");
  }
  e.next = e.type == miCOMPRESSED ? e.offset + e.size : e.offset + ((e.size + 7) / 8) * 8;
  return e;
}

std::string inflate_all(const std::string& buf, std::size_t offset, std::size_t size,
                        const std::string& where) {
  z_stream zs{};
  if (inflateInit(&zs) != Z_OK) throw IoError("zlib initialisation failed");
  zs.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(buf.data() + offset));
  zs.avail_in = static_cast<uInt>(size);
  std::string out;
  std::array<char, 1 << 16> chunk{};
  int rc = Z_OK;
  do {
    zs.next_out = reinterpret_cast<Bytef*>(chunk.data());
    zs.avail_out = static_cast<uInt>(chunk.size());
    rc = inflate(&zs, Z_NO_FLUSH);
    if (rc != Z_OK && rc != Z_STREAM_END) {
      inflateEnd(&zs);
      throw IoError(where + ": corrupt compressed element at byte " + std::to_string(offset));
    }
    out.append(chunk.data(), chunk.size() - zs.avail_out);
  } while (rc != Z_STREAM_END && (zs.avail_in > 0 || zs.avail_out == 0));
  inflateEnd(&zs);
  if (rc != Z_STREAM_END) throw IoError(where + ": truncated compressed element at byte " + std::to_string(offset));
  return out;
}

struct MatArray {
  std::string name;
  std::vector<std::size_t> dims;
  std::string raw;  // payload bytes of the real part
  std::uint32_t storage = 0;

  std::size_t count() const {
    std::size_t n = 1;
    for (auto d : dims) n *= d;
    return n;
  }
  double at(std::size_t i) const {
    const char* p = raw.data();
    switch (storage) {
      case miUINT8:
        return static_cast<unsigned char>(p[i]);
      case miINT8:
        return static_cast<signed char>(p[i]);
      case miUINT16: {
        std::uint16_t v;
        std::memcpy(&v, p + 2 * i, 2);
        return v;
      }
      case miINT16: {
        std::int16_t v;
        std::memcpy(&v, p + 2 * i, 2);
        return v;
      }
      case miUINT32: {
        std::uint32_t v;
        std::memcpy(&v, p + 4 * i, 4);
        return v;
      }
      case miINT32: {
        std::int32_t v;
        std::memcpy(&v, p + 4 * i, 4);
        return v;
      }
      case miSINGLE: {
        float v;
        std::memcpy(&v, p + 4 * i, 4);
        return v;
      }
      case miDOUBLE: {
        double v;
        std::memcpy(&v, p + 8 * i, 8);
        return v;
      }
      default:
        throw IoError("unsupported MAT storage type " + std::to_string(storage));
    }
  }
};

std::size_t storage_width(std::uint32_t t) {
  switch (t) {
    case miINT8:
    case miUINT8:
      return 1;
    case miINT16:
    case miUINT16:
      return 2;
    case miINT32:
    case miUINT32:
    case miSINGLE:
      return 4;
    case miDOUBLE:
    case miINT64:
    case miUINT64:
      return 8;
    default:
      return 0;
  }
}

MatArray parse_matrix(const std::string& buf, const Element& m, const std::string& where) {
  MatArray a;
  std::size_t at = m.offset;
  const std::size_t end = m.offset + m.size;
  const Element flags = read_element(buf, at, where);
  at = flags.next;
  const Element dims = read_element(buf, at, where);
  if (dims.type != miINT32) throw IoError(where + ": bad dimensions element at byte " + std::to_string(at));
  for (std::size_t i = 0; i < dims.size / 4; ++i) a.dims.push_back(le32(buf, dims.offset + 4 * i));
  at = dims.next;
  const Element name = read_element(buf, at, where);
  a.name = buf.substr(name.offset, name.size);
  at = name.next;
  if (at >= end) throw IoError(where + ": matrix '" + a.name + "' has no data");
  const Element real = read_element(buf, at, where);
  a.storage = real.type;
  const std::size_t width = storage_width(real.type);
  if (width == 0 || real.type == miINT64 || real.type == miUINT64) {
    throw IoError(where + ": unsupported storage type " + std::to_string(real.type) + " in '" +
                  a.name + "'");
  }
  if (real.size != a.count() * width) {
    throw IoError(where + ": matrix '" + a.name + "' holds " + std::to_string(real.size) +
                  " bytes, expected " + std::to_string(a.count() * width));
  }
  a.raw = buf.substr(real.offset, real.size);
  return a;
}

}  // namespace

Dataset load_svhn_mat(const std::filesystem::path& path, std::size_t limit) {
  const std::string where = path.string();
  const std::string file = read_file(path);
  if (file.size() < 128) throw IoError(where + ": truncated MAT header at byte " + std::to_string(file.size()));
  if (file[126] != 'I' || file[127] != 'M') {
    throw IoError(where + ": not a little-endian MAT v5 file (byte 126)");
  }
  std::optional<MatArray> x, y;
  for (std::size_t at = 128; at < file.size();) {
    const Element e = read_element(file, at, where);
    if (e.type == miCOMPRESSED) {
      const std::string inner = inflate_all(file, e.offset, e.size, where);
      const Element m = read_element(inner, 0, where);
      if (m.type == miMATRIX) {
        MatArray a = parse_matrix(inner, m, where);
        if (a.name == "X") {
          x = std::move(a);
        } else if (a.name == "y") {
          y = std::move(a);
        }
      }
    } else if (e.type == miMATRIX) {
      MatArray a = parse_matrix(file, e, where);
      if (a.name == "X") {
        x = std::move(a);
      } else if (a.name == "y") {
        y = std::move(a);
      }
    }
    at = e.next;
  }
  if (!x || !y) throw IoError(where + ": missing X or y array");
  if (x->dims.size() != 4 || x->dims[0] != kSide || x->dims[1] != kSide || x->dims[2] != 3) {
    throw IoError(where + ": X must be 32x32x3xN");
  }
  std::size_t n = x->dims[3];
  if (y->count() != n) throw IoError(where + ": y has " + std::to_string(y->count()) + " labels for " + std::to_string(n) + " images");
  if (limit > 0) n = std::min(n, limit);

  Dataset out;
  out.num_classes = 10;
  out.images = Tensor(Shape{n, 3, kSide, kSide});
  out.labels.resize(n);
  // Column-major X(h, w, c, n).
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < 3; ++c) {
      for (std::size_t h = 0; h < kSide; ++h) {
        for (std::size_t w = 0; w < kSide; ++w) {
          const std::size_t src = h + kSide * (w + kSide * (c + 3 * i));
          out.images[((i * 3 + c) * kSide + h) * kSide + w] = x->at(src) / 255.0;
        }
      }
    }
    const double label = y->at(i);
    if (label < 1 || label > 10 || label != static_cast<int>(label)) {
      throw IoError(where + ": invalid label " + std::to_string(label) + " for item " + std::to_string(i));
    }
    out.labels[i] = static_cast<int>(label) % 10;
  }
  return out;
}

Dataset load_dataset(const DatasetSpec& spec) {
  Dataset data;
  switch (spec.name) {
    case DatasetName::cifar10:
      data = load_cifar10(spec.root, spec.split, spec.subset_size);
      break;
    case DatasetName::svhn_cropped:
      data = load_svhn_mat(spec.root / (spec.split == Split::train ? "train_32x32.mat" : "test_32x32.mat"),
                           spec.subset_size);
      break;
    case DatasetName::synthetic_shapes: {
      // The test split draws from a disjoint index range of the same generator.
      const bool train = spec.split == Split::train;
      std::size_t count = train ? spec.synthetic_train : spec.synthetic_test;
      if (spec.subset_size > 0) count = std::min(count, spec.subset_size);
      data = make_synthetic_shapes(count, spec.synthetic_seed, train ? 0 : std::size_t{1} << 40);
      break;
    }
  }
  data.validate();
  return data;
}

}  // namespace fsat::io
