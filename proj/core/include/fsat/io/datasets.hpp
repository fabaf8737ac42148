#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>

#include "fsat/dataset.hpp"

namespace fsat::io {

enum class DatasetName { cifar10, svhn_cropped, synthetic_shapes };
enum class Split { train, test };

std::string to_string(DatasetName name);
DatasetName parse_dataset_name(const std::string& name);
Split parse_split(const std::string& name);

struct DatasetSpec {
  DatasetName name = DatasetName::synthetic_shapes;
  /// Directory holding the dataset files (unused for synthetic-shapes).
  std::filesystem::path root;
  Split split = Split::train;
  /// Keep the first n items; 0 keeps everything.
  std::size_t subset_size = 0;
  /// synthetic-shapes only: split sizes and generator seed.
  std::size_t synthetic_train = 4000;
  std::size_t synthetic_test = 1000;
  std::uint64_t synthetic_seed = 1;
};

/// CIFAR-10 binary batch: records of 1 label byte + 3072 channel-planar pixel bytes.
/// `limit` > 0 stops after that many records.
Dataset load_cifar10_batch(const std::filesystem::path& path, std::size_t limit = 0);
/// data_batch_1..5.bin (train) or test_batch.bin (test) under root or
/// root/cifar-10-batches-bin.
Dataset load_cifar10(const std::filesystem::path& root, Split split, std::size_t limit = 0);

/// Cropped-digits MATLAB v5 file with X (32x32x3xN uint8) and y (Nx1, label 10 = digit 0).
Dataset load_svhn_mat(const std::filesystem::path& path, std::size_t limit = 0);

Dataset load_dataset(const DatasetSpec& spec);

}  // namespace fsat::io
