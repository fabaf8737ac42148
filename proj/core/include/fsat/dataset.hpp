#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fsat/tensor.hpp"

namespace fsat {

/// Labelled image set, images N x 3 x H x W with values in [0, 1].
struct Dataset {
  Tensor images;
  std::vector<int> labels;
  std::size_t num_classes = 0;

  std::size_t size() const { return labels.size(); }
  Shape image_shape() const;

  Dataset subset(std::span<const std::size_t> indices) const;
  Dataset head(std::size_t n) const;
  Tensor batch(std::span<const std::size_t> indices) const;
  std::vector<int> batch_labels(std::span<const std::size_t> indices) const;
  /// Indices of every example per class.
  std::vector<std::vector<std::size_t>> class_index() const;

  /// Throws ConfigError unless shapes agree, pixels lie in [0,1] and labels in [0, n).
  void validate() const;
};

inline constexpr std::size_t kSyntheticClasses = 8;

/// Procedural coloured shapes on textured backgrounds (disk, square, triangle, plus,
/// ring, diamond, bars, x). Example i depends only on (seed, first_index + i).
Dataset make_synthetic_shapes(std::size_t count, std::uint64_t seed, std::size_t first_index = 0,
                              std::size_t image_size = 32);

std::string synthetic_class_name(int label);

}  // namespace fsat
