#include "fsat/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "fsat/nets.hpp"
#include "fsat/rng.hpp"

namespace fsat {

Shape Dataset::image_shape() const {
  if (images.rank() != 4) return {};
  return {images.dim(1), images.dim(2), images.dim(3)};
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out;
  out.images = gather_rows(images, indices);
  out.labels = batch_labels(indices);
  out.num_classes = num_classes;
  return out;
}

Dataset Dataset::head(std::size_t n) const {
  n = std::min(n, size());
  Dataset out;
  out.images = slice_rows(images, 0, n);
  out.labels.assign(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(n));
  out.num_classes = num_classes;
  return out;
}

Tensor Dataset::batch(std::span<const std::size_t> indices) const {
  return gather_rows(images, indices);
}

std::vector<int> Dataset::batch_labels(std::span<const std::size_t> indices) const {
  std::vector<int> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(labels.at(i));
  return out;
}

std::vector<std::vector<std::size_t>> Dataset::class_index() const {
  std::vector<std::vector<std::size_t>> out(num_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) out.at(static_cast<std::size_t>(labels[i])).push_back(i);
  return out;
}

void Dataset::validate() const {
  if (images.rank() != 4 || images.dim(0) != labels.size()) {
    throw ConfigError("dataset images " + shape_string(images.shape()) + " do not match " +
                      std::to_string(labels.size()) + " labels");
  }
  for (double v : images.values()) {
    if (!(v >= 0.0 && v <= 1.0)) throw ConfigError("dataset pixel outside [0,1]");
  }
  for (int l : labels) {
    if (l < 0 || static_cast<std::size_t>(l) >= num_classes) {
      throw ConfigError("dataset label " + std::to_string(l) + " outside [0, " +
                        std::to_string(num_classes) + ")");
    }
  }
}

namespace {

// Membership test in the shape's local frame, roughly [-1, 1]^2.
bool inside(int label, double u, double v) {
  const double au = std::abs(u), av = std::abs(v);
  switch (label) {
    case 0:
      return u * u + v * v <= 1.0;
    case 1:
      return au <= 0.8 && av <= 0.8;
    case 2:
      return v <= 0.7 && au <= (v + 0.9) / 1.6;
    case 3:
    case 7:
      return (au <= 0.3 && av <= 0.95) || (av <= 0.3 && au <= 0.95);
    case 4: {
      const double r2 = u * u + v * v;
      return r2 <= 1.0 && r2 >= 0.55 * 0.55;
    }
    case 5:
      return au + av <= 1.0;
    case 6:
      return au <= 0.9 && (std::abs(v - 0.45) <= 0.2 || std::abs(v + 0.45) <= 0.2);
    default:
      return false;
  }
}

constexpr std::array<std::array<double, 3>, kSyntheticClasses> kBackdrops{{
    {0.55, 0.70, 0.90}, {0.30, 0.55, 0.25}, {0.80, 0.70, 0.45}, {0.35, 0.35, 0.40},
    {0.85, 0.45, 0.35}, {0.25, 0.40, 0.65}, {0.70, 0.80, 0.55}, {0.60, 0.45, 0.70}}};

double base_rotation(int label) { return label == 7 ? std::numbers::pi / 4.0 : 0.0; }

}  // namespace

Dataset make_synthetic_shapes(std::size_t count, std::uint64_t seed, std::size_t first_index,
                              std::size_t image_size) {
  const std::size_t s = image_size;
  Dataset out;
  out.num_classes = kSyntheticClasses;
  out.images = Tensor(Shape{count, 3, s, s});
  out.labels.resize(count);
  const double fs = static_cast<double>(s);
  for (std::size_t n = 0; n < count; ++n) {
    Rng rng(derive_seed(seed, first_index + n));
    const int label = static_cast<int>(rng.below(kSyntheticClasses));
    out.labels[n] = label;

    std::array<double, 3> bg{}, fg{}, grad{};
    double dist = 0.0;
    // Most backgrounds sit near a per-class colour, like sky behind planes; the rest are random.
    const bool typical = rng.uniform() < 0.8;
    do {
      for (int c = 0; c < 3; ++c) {
        bg[c] = typical ? std::clamp(kBackdrops[label][c] + rng.uniform(-0.2, 0.2), 0.05, 0.95)
                        : rng.uniform(0.05, 0.95);
        fg[c] = rng.uniform(0.05, 0.95);
      }
      dist = std::abs(bg[0] - fg[0]) + std::abs(bg[1] - fg[1]) + std::abs(bg[2] - fg[2]);
    } while (dist < 0.6);
    for (int c = 0; c < 3; ++c) grad[c] = rng.uniform(-0.15, 0.15);
    const double grad_angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double stripe_freq = rng.uniform(0.2, 0.9);
    const double stripe_amp = rng.uniform(0.0, 0.06);
    const double stripe_angle = rng.uniform(0.0, std::numbers::pi);
    const double radius = rng.uniform(0.24, 0.38) * fs;
    const double cx = rng.uniform(radius, fs - radius);
    const double cy = rng.uniform(radius, fs - radius);
    const double theta = base_rotation(label) + rng.uniform(-0.26, 0.26);
    const double shade = rng.uniform(-0.12, 0.12);
    const double noise = rng.uniform(0.01, 0.05);
    const double ct = std::cos(theta), st = std::sin(theta);

    double* img = out.images.data() + n * 3 * s * s;
    for (std::size_t y = 0; y < s; ++y) {
      for (std::size_t x = 0; x < s; ++x) {
        // 2x2 supersampled coverage.
        double cover = 0.0;
        for (int sy = 0; sy < 2; ++sy) {
          for (int sx = 0; sx < 2; ++sx) {
            const double px = static_cast<double>(x) + 0.25 + 0.5 * sx - cx;
            const double py = static_cast<double>(y) + 0.25 + 0.5 * sy - cy;
            const double u = (ct * px + st * py) / radius;
            const double v = (-st * px + ct * py) / radius;
            if (inside(label, u, v)) cover += 0.25;
          }
        }
        const double gx = (static_cast<double>(x) / fs - 0.5);
        const double gy = (static_cast<double>(y) / fs - 0.5);
        const double g = gx * std::cos(grad_angle) + gy * std::sin(grad_angle);
        const double stripe =
            stripe_amp * std::sin(stripe_freq * (static_cast<double>(x) * std::cos(stripe_angle) +
                                                 static_cast<double>(y) * std::sin(stripe_angle)));
        const double lit = shade * ((static_cast<double>(y) - cy) / radius);
        for (std::size_t c = 0; c < 3; ++c) {
          const double back = bg[c] + grad[c] * g * 2.0 + stripe;
          const double front = fg[c] + lit;
          double val = back * (1.0 - cover) + front * cover + noise * rng.normal();
          img[(c * s + y) * s + x] = std::clamp(val, 0.0, 1.0);
        }
      }
    }
  }
  return out;
}

std::string synthetic_class_name(int label) {
  static const std::array<const char*, kSyntheticClasses> names{
      "disk", "square", "triangle", "plus", "ring", "diamond", "bars", "x"};
  if (label < 0 || static_cast<std::size_t>(label) >= names.size()) return "unknown";
  return names[static_cast<std::size_t>(label)];
}

}  // namespace fsat
