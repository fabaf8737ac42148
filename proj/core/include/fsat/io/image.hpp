#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "fsat/tensor.hpp"

namespace fsat::io {

/// Interleaved 8-bit RGB, row-major.
struct Image8 {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> rgb;

  bool operator==(const Image8&) const = default;
};

/// [3,H,W] in [0,1] -> 8 bit, rounding to nearest (values are clamped first).
Image8 quantize(const Tensor& image);
/// 8 bit -> [3,H,W] with v / 255.
Tensor dequantize(const Image8& image);

/// clamp(gain * |a - b|, 0, 1) per pixel channel.
Tensor difference_map(const Tensor& a, const Tensor& b, double gain = 3.0);

void save_ppm(const std::filesystem::path& path, const Image8& image);
Image8 load_ppm(const std::filesystem::path& path);
void save_png(const std::filesystem::path& path, const Image8& image);
Image8 load_png(const std::filesystem::path& path);

/// Chooses PPM or PNG from the extension (.ppm / .png).
void save_image(const std::filesystem::path& path, const Tensor& image);
Tensor load_image(const std::filesystem::path& path);

}  // namespace fsat::io
