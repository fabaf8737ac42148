#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fsat/nets.hpp"

namespace fsat::io {

/// Binary layout (little-endian):
///   "FSAT" u32 version u32 tensor_count
///   per tensor: u32 name_len, name, u8 dtype (0 = f64, 1 = f32), u32 rank, u64 dims[rank],
///               raw values
///   u32 metadata_count, per entry: u32 key_len, key, u32 value_len, value
/// f32 records are widened to double on read.
inline constexpr std::uint32_t kCheckpointVersion = 1;

enum class DType : std::uint8_t { f64 = 0, f32 = 1 };

struct Checkpoint {
  std::vector<NamedTensor> tensors;
  Metadata metadata;

  const Tensor& tensor(const std::string& name) const;
  bool operator==(const Checkpoint& other) const;
};

std::string encode_checkpoint(const Checkpoint& ckpt, DType dtype = DType::f64);
/// Rejects bad magic and unknown versions before reading any tensor record.
Checkpoint decode_checkpoint(const std::string& bytes);

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt,
                      DType dtype = DType::f64);
Checkpoint read_checkpoint(const std::filesystem::path& path);

Checkpoint classifier_checkpoint(const Classifier& model, Metadata extra = {});
Classifier classifier_from_checkpoint(const Checkpoint& ckpt);

/// The decoder checkpoint carries its frozen encoder, so the pair travels together.
Checkpoint decoder_checkpoint(const Decoder& decoder, const Encoder& encoder, Metadata extra = {});
struct AutoEncoder {
  Encoder encoder;
  Decoder decoder;
};
AutoEncoder autoencoder_from_checkpoint(const Checkpoint& ckpt);

}  // namespace fsat::io
