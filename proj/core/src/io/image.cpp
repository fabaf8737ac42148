#include "fsat/io/image.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <string>

namespace fsat::io {

Image8 quantize(const Tensor& image) {
  if (image.rank() != 3 || image.dim(0) != 3) {
    throw ConfigError("expected an RGB image [3,H,W], got " + shape_string(image.shape()));
  }
  Image8 out;
  out.height = image.dim(1);
  out.width = image.dim(2);
  const std::size_t hw = out.height * out.width;
  out.rgb.resize(3 * hw);
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t i = 0; i < hw; ++i) {
      const double v = std::clamp(image[c * hw + i], 0.0, 1.0);
      out.rgb[3 * i + c] = static_cast<std::uint8_t>(std::lround(v * 255.0));
    }
  }
  return out;
}

Tensor dequantize(const Image8& image) {
  const std::size_t hw = image.height * image.width;
  if (image.rgb.size() != 3 * hw) throw ConfigError("image buffer does not match its size");
  Tensor out(Shape{3, image.height, image.width});
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t i = 0; i < hw; ++i) out[c * hw + i] = image.rgb[3 * i + c] / 255.0;
  }
  return out;
}

Tensor difference_map(const Tensor& a, const Tensor& b, double gain) {
  if (a.shape() != b.shape()) throw ConfigError("difference_map: shape mismatch");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) {
    out[i] = std::clamp(gain * std::abs(a[i] - b[i]), 0.0, 1.0);
  }
  return out;
}

void save_ppm(const std::filesystem::path& path, const Image8& image) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write image " + path.string());
  out << "P6\n" << image.width << ' ' << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.rgb.data()),
            static_cast<std::streamsize>(image.rgb.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

namespace {

// Next header token, skipping whitespace and '#' comments.
std::string ppm_token(std::istream& in) {
  std::string tok;
  int ch = 0;
  while ((ch = in.get()) != EOF) {
    if (ch == '#') {
      while ((ch = in.get()) != EOF && ch != '\n') {
      }
      continue;
    }
    if (std::isspace(ch)) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(static_cast<char>(ch));
  }
  return tok;
}

}  // namespace

Image8 load_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image " + path.string());
  if (ppm_token(in) != "P6") throw IoError(path.string() + ": not a binary PPM (P6)");
  Image8 img;
  try {
    img.width = std::stoul(ppm_token(in));
    img.height = std::stoul(ppm_token(in));
    if (std::stoul(ppm_token(in)) != 255) throw IoError(path.string() + ": only 8-bit PPM supported");
  } catch (const std::logic_error&) {
    throw IoError(path.string() + ": malformed PPM header");
  }
  if (img.width == 0 || img.height == 0 || img.width > 65535 || img.height > 65535) {
    throw IoError(path.string() + ": implausible PPM size");
  }
  img.rgb.resize(3 * img.width * img.height);
  in.read(reinterpret_cast<char*>(img.rgb.data()), static_cast<std::streamsize>(img.rgb.size()));
  if (static_cast<std::size_t>(in.gcount()) != img.rgb.size()) {
    throw IoError(path.string() + ": truncated pixel data at byte " + std::to_string(in.gcount()));
  }
  return img;
}

void save_png(const std::filesystem::path& path, const Image8& image) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.width);
  img.height = static_cast<png_uint_32>(image.height);
  img.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&img, path.string().c_str(), 0, image.rgb.data(), 0, nullptr)) {
    throw IoError("cannot write image " + path.string() + ": " + img.message);
  }
}

Image8 load_png(const std::filesystem::path& path) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.string().c_str())) {
    throw IoError("cannot read PNG " + path.string() + ": " + img.message);
  }
  img.format = PNG_FORMAT_RGB;
  Image8 out;
  out.width = img.width;
  out.height = img.height;
  out.rgb.resize(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, out.rgb.data(), 0, nullptr)) {
    const std::string msg = img.message;
    png_image_free(&img);
    throw IoError("cannot decode PNG " + path.string() + ": " + msg);
  }
  return out;
}

namespace {

bool is_png(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext == ".png") return true;
  if (ext == ".ppm") return false;
  throw ConfigError("unsupported image extension '" + ext + "' (use .png or .ppm)");
}

}  // namespace

void save_image(const std::filesystem::path& path, const Tensor& image) {
  const Image8 q = quantize(image);
  is_png(path) ? save_png(path, q) : save_ppm(path, q);
}

Tensor load_image(const std::filesystem::path& path) {
  return dequantize(is_png(path) ? load_png(path) : load_ppm(path));
}

}  // namespace fsat::io
