#include "fsat/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace fsat::ops {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ConfigError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) +
                      " vs " + shape_string(b.shape()));
  }
}

void require_rank(const char* op, const Tensor& t, std::size_t rank) {
  if (t.rank() != rank) {
    throw ConfigError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                      shape_string(t.shape()));
  }
}

template <typename Fn>
Tensor map_values(const Tensor& a, Fn fn) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = fn(a[i]);
  return out;
}

std::size_t reflect_index(std::ptrdiff_t i, std::size_t n) {
  auto m = static_cast<std::ptrdiff_t>(n);
  if (i < 0) i = -i;
  if (i >= m) i = 2 * m - 2 - i;
  return static_cast<std::size_t>(i);
}

struct ConvGeometry {
  std::size_t c_in, h, w, k, stride, pad, h_out, w_out;
  PadMode mode;

  std::size_t patch() const { return c_in * k * k; }
  std::size_t pixels() const { return h_out * w_out; }

  // Source offset within one image for column (row, pixel), or -1 for a zero pad.
  std::ptrdiff_t source(std::size_t ci, std::size_t ky, std::size_t kx, std::size_t oy,
                        std::size_t ox) const {
    auto iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - static_cast<std::ptrdiff_t>(pad);
    auto ix = static_cast<std::ptrdiff_t>(ox * stride + kx) - static_cast<std::ptrdiff_t>(pad);
    if (mode == PadMode::zero) {
      if (iy < 0 || ix < 0 || iy >= static_cast<std::ptrdiff_t>(h) ||
          ix >= static_cast<std::ptrdiff_t>(w)) {
        return -1;
      }
    } else {
      iy = static_cast<std::ptrdiff_t>(reflect_index(iy, h));
      ix = static_cast<std::ptrdiff_t>(reflect_index(ix, w));
    }
    return static_cast<std::ptrdiff_t>((ci * h + static_cast<std::size_t>(iy)) * w +
                                       static_cast<std::size_t>(ix));
  }
};

// Input row index for output row oy and kernel row ky, or -1 inside a zero pad.
std::ptrdiff_t source_row(const ConvGeometry& g, std::size_t oy, std::size_t ky) {
  auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad);
  if (iy >= 0 && iy < static_cast<std::ptrdiff_t>(g.h)) return iy;
  if (g.mode == PadMode::zero) return -1;
  return static_cast<std::ptrdiff_t>(reflect_index(iy, g.h));
}

// Output columns [lo, hi) whose input column lies inside the image (stride 1).
void interior_columns(const ConvGeometry& g, std::size_t kx, std::size_t& lo, std::size_t& hi) {
  lo = g.pad > kx ? g.pad - kx : 0;
  hi = std::min(g.w_out, g.w + g.pad - kx);
  if (hi < lo) hi = lo;
}

void im2col(const ConvGeometry& g, const double* image, double* col) {
  std::size_t row = 0;
  for (std::size_t ci = 0; ci < g.c_in; ++ci) {
    const double* plane = image + ci * g.h * g.w;
    for (std::size_t ky = 0; ky < g.k; ++ky) {
      for (std::size_t kx = 0; kx < g.k; ++kx, ++row) {
        double* dst = col + row * g.pixels();
        if (g.stride != 1) {
          for (std::size_t oy = 0; oy < g.h_out; ++oy) {
            for (std::size_t ox = 0; ox < g.w_out; ++ox) {
              std::ptrdiff_t s = g.source(ci, ky, kx, oy, ox);
              *dst++ = s < 0 ? 0.0 : image[s];
            }
          }
          continue;
        }
        std::size_t lo = 0, hi = 0;
        interior_columns(g, kx, lo, hi);
        for (std::size_t oy = 0; oy < g.h_out; ++oy, dst += g.w_out) {
          const std::ptrdiff_t iy = source_row(g, oy, ky);
          if (iy < 0) {
            std::fill_n(dst, g.w_out, 0.0);
            continue;
          }
          const double* src = plane + static_cast<std::size_t>(iy) * g.w;
          for (std::size_t ox = 0; ox < lo; ++ox) {
            dst[ox] = g.mode == PadMode::zero ? 0.0 : src[reflect_index(
                static_cast<std::ptrdiff_t>(ox + kx) - static_cast<std::ptrdiff_t>(g.pad), g.w)];
          }
          std::copy(src + lo + kx - g.pad, src + hi + kx - g.pad, dst + lo);
          for (std::size_t ox = hi; ox < g.w_out; ++ox) {
            dst[ox] = g.mode == PadMode::zero ? 0.0 : src[reflect_index(
                static_cast<std::ptrdiff_t>(ox + kx) - static_cast<std::ptrdiff_t>(g.pad), g.w)];
          }
        }
      }
    }
  }
}

void col2im_add(const ConvGeometry& g, const double* col, double* image) {
  std::size_t row = 0;
  for (std::size_t ci = 0; ci < g.c_in; ++ci) {
    double* plane = image + ci * g.h * g.w;
    for (std::size_t ky = 0; ky < g.k; ++ky) {
      for (std::size_t kx = 0; kx < g.k; ++kx, ++row) {
        const double* src = col + row * g.pixels();
        if (g.stride != 1) {
          for (std::size_t oy = 0; oy < g.h_out; ++oy) {
            for (std::size_t ox = 0; ox < g.w_out; ++ox, ++src) {
              std::ptrdiff_t s = g.source(ci, ky, kx, oy, ox);
              if (s >= 0) image[s] += *src;
            }
          }
          continue;
        }
        std::size_t lo = 0, hi = 0;
        interior_columns(g, kx, lo, hi);
        for (std::size_t oy = 0; oy < g.h_out; ++oy, src += g.w_out) {
          const std::ptrdiff_t iy = source_row(g, oy, ky);
          if (iy < 0) continue;
          double* dst = plane + static_cast<std::size_t>(iy) * g.w;
          if (g.mode == PadMode::reflect) {
            for (std::size_t ox = 0; ox < lo; ++ox) {
              dst[reflect_index(static_cast<std::ptrdiff_t>(ox + kx) - static_cast<std::ptrdiff_t>(g.pad),
                                g.w)] += src[ox];
            }
            for (std::size_t ox = hi; ox < g.w_out; ++ox) {
              dst[reflect_index(static_cast<std::ptrdiff_t>(ox + kx) - static_cast<std::ptrdiff_t>(g.pad),
                                g.w)] += src[ox];
            }
          }
          for (std::size_t ox = lo; ox < hi; ++ox) dst[ox + kx - g.pad] += src[ox];
        }
      }
    }
  }
}

}  // namespace

Var add(Var a, Var b) {
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  require_same_shape("add", x, y);
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + y[i];
  return a.tape().record("add", std::move(out), {a, b}, [](BackwardContext& ctx) {
    const Tensor& g = ctx.grad_output();
    for (std::size_t k = 0; k < 2; ++k) {
      if (!ctx.needs_grad(k)) continue;
      Tensor& dst = ctx.input_grad(k);
      for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
    }
  });
}

Var sub(Var a, Var b) {
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  require_same_shape("sub", x, y);
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] - y[i];
  return a.tape().record("sub", std::move(out), {a, b}, [](BackwardContext& ctx) {
    const Tensor& g = ctx.grad_output();
    if (ctx.needs_grad(0)) {
      Tensor& dst = ctx.input_grad(0);
      for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
    }
    if (ctx.needs_grad(1)) {
      Tensor& dst = ctx.input_grad(1);
      for (std::size_t i = 0; i < g.size(); ++i) dst[i] -= g[i];
    }
  });
}

Var mul(Var a, Var b) {
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  require_same_shape("mul", x, y);
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * y[i];
  return a.tape().record("mul", std::move(out), {a, b}, [](BackwardContext& ctx) {
    const Tensor& g = ctx.grad_output();
    const Tensor& x = ctx.input(0);
    const Tensor& y = ctx.input(1);
    if (ctx.needs_grad(0)) {
      Tensor& dst = ctx.input_grad(0);
      for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i] * y[i];
    }
    if (ctx.needs_grad(1)) {
      Tensor& dst = ctx.input_grad(1);
      for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i] * x[i];
    }
  });
}

Var div(Var a, Var b) {
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  require_same_shape("div", x, y);
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] / y[i];
  return a.tape().record("div", std::move(out), {a, b}, [](BackwardContext& ctx) {
    const Tensor& g = ctx.grad_output();
    const Tensor& x = ctx.input(0);
    const Tensor& y = ctx.input(1);
    if (ctx.needs_grad(0)) {
      Tensor& dst = ctx.input_grad(0);
      for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i] / y[i];
    }
    if (ctx.needs_grad(1)) {
      Tensor& dst = ctx.input_grad(1);
      for (std::size_t i = 0; i < g.size(); ++i) dst[i] -= g[i] * x[i] / (y[i] * y[i]);
    }
  });
}

Var add_scalar(Var a, double s) {
  Tensor out = map_values(a.value(), [s](double v) { return v + s; });
  return a.tape().record("add_scalar", std::move(out), {a}, [](BackwardContext& ctx) {
    const Tensor& g = ctx.grad_output();
    Tensor& dst = ctx.input_grad(0);
    for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
  });
}

Var mul_scalar(Var a, double s) {
  Tensor out = map_values(a.value(), [s](double v) { return v * s; });
  return a.tape().record("mul_scalar", std::move(out), {a}, [s](BackwardContext& ctx) {
    const Tensor& g = ctx.grad_output();
    Tensor& dst = ctx.input_grad(0);
    for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i] * s;
  });
}

Var exp(Var a) {
  Tensor out = map_values(a.value(), [](double v) { return std::exp(v); });
  return a.tape().record("exp", std::move(out), {a}, [](BackwardContext& ctx) {
    const Tensor& g = ctx.grad_output();
    const Tensor& y = ctx.output();
    Tensor& dst = ctx.input_grad(0);
    for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i] * y[i];
  });
}

Var sqrt(Var a) {
  Tensor out = map_values(a.value(), [](double v) { return std::sqrt(v); });
  return a.tape().record("sqrt", std::move(out), {a}, [](BackwardContext& ctx) {
    const Tensor& g = ctx.grad_output();
    const Tensor& y = ctx.output();
    Tensor& dst = ctx.input_grad(0);
    for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i] * 0.5 / y[i];
  });
}

Var relu(Var a) {
  Tensor out = map_values(a.value(), [](double v) { return v > 0.0 ? v : 0.0; });
  return a.tape().record("relu", std::move(out), {a}, [](BackwardContext& ctx) {
    const Tensor& g = ctx.grad_output();
    const Tensor& x = ctx.input(0);
    Tensor& dst = ctx.input_grad(0);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (x[i] > 0.0) dst[i] += g[i];
    }
  });
}

Var clamp(Var a, double lo, double hi) {
  if (!(lo <= hi)) throw ConfigError("clamp: lo > hi");
  Tensor out = map_values(a.value(), [lo, hi](double v) { return std::clamp(v, lo, hi); });
  return a.tape().record("clamp", std::move(out), {a}, [lo, hi](BackwardContext& ctx) {
    const Tensor& g = ctx.grad_output();
    const Tensor& x = ctx.input(0);
    Tensor& dst = ctx.input_grad(0);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (x[i] > lo && x[i] < hi) dst[i] += g[i];
    }
  });
}

Var sum(Var a) {
  const Tensor& x = a.value();
  double acc = 0.0;
  for (double v : x.values()) acc += v;
  return a.tape().record("sum", Tensor::scalar(acc), {a}, [](BackwardContext& ctx) {
    double g = ctx.grad_output()[0];
    Tensor& dst = ctx.input_grad(0);
    for (double& d : dst.values()) d += g;
  });
}

Var mean(Var a) {
  const Tensor& x = a.value();
  if (x.size() == 0) throw ConfigError("mean of empty tensor");
  double acc = 0.0;
  for (double v : x.values()) acc += v;
  const double inv = 1.0 / static_cast<double>(x.size());
  return a.tape().record("mean", Tensor::scalar(acc * inv), {a}, [inv](BackwardContext& ctx) {
    double g = ctx.grad_output()[0] * inv;
    Tensor& dst = ctx.input_grad(0);
    for (double& d : dst.values()) d += g;
  });
}

Var reshape(Var a, Shape shape) {
  Tensor out = a.value().reshaped(std::move(shape));
  return a.tape().record("reshape", std::move(out), {a}, [](BackwardContext& ctx) {
    const Tensor& g = ctx.grad_output();
    Tensor& dst = ctx.input_grad(0);
    for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
  });
}

Var concat(std::span<const Var> parts, std::size_t axis) {
  if (parts.empty()) throw ConfigError("concat: no inputs");
  const Shape& first = parts[0].shape();
  if (axis >= first.size()) throw ConfigError("concat: axis out of range");
  std::size_t outer = 1;
  std::size_t inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= first[d];
  for (std::size_t d = axis + 1; d < first.size(); ++d) inner *= first[d];
  std::vector<std::size_t> extents;
  std::size_t total = 0;
  for (const Var& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != first.size()) throw ConfigError("concat: rank mismatch");
    for (std::size_t d = 0; d < s.size(); ++d) {
      if (d != axis && s[d] != first[d]) {
        throw ConfigError("concat: shape mismatch " + shape_string(s) + " vs " +
                          shape_string(first));
      }
    }
    extents.push_back(s[axis]);
    total += s[axis];
  }
  Shape out_shape = first;
  out_shape[axis] = total;
  Tensor out(out_shape);
  std::size_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const Tensor& src = parts[p].value();
    const std::size_t block = extents[p] * inner;
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(src.data() + o * block, block, out.data() + (o * total + offset) * inner);
    }
    offset += extents[p];
  }
  return parts[0].tape().record(
      "concat", std::move(out), parts, [extents, outer, inner, total](BackwardContext& ctx) {
        const Tensor& g = ctx.grad_output();
        std::size_t offset = 0;
        for (std::size_t p = 0; p < extents.size(); ++p) {
          const std::size_t block = extents[p] * inner;
          if (ctx.needs_grad(p)) {
            Tensor& dst = ctx.input_grad(p);
            for (std::size_t o = 0; o < outer; ++o) {
              const double* src = g.data() + (o * total + offset) * inner;
              double* d = dst.data() + o * block;
              for (std::size_t i = 0; i < block; ++i) d[i] += src[i];
            }
          }
          offset += extents[p];
        }
      });
}

Var conv2d(Var input, Var weight, Var bias, const Conv2dOptions& opts) {
  const Tensor& x = input.value();
  const Tensor& w = weight.value();
  const Tensor& b = bias.value();
  require_rank("conv2d input", x, 4);
  require_rank("conv2d weight", w, 4);
  require_rank("conv2d bias", b, 1);
  const std::size_t n = x.dim(0);
  const std::size_t c_out = w.dim(0);
  const std::size_t k = w.dim(2);
  if (w.dim(1) != x.dim(1) || w.dim(3) != k || k % 2 == 0 || b.dim(0) != c_out ||
      opts.stride == 0) {
    throw ConfigError("conv2d: incompatible shapes input " + shape_string(x.shape()) +
                      " weight " + shape_string(w.shape()) + " bias " + shape_string(b.shape()));
  }
  if (x.dim(2) + 2 * opts.padding < k || x.dim(3) + 2 * opts.padding < k) {
    throw ConfigError("conv2d: kernel larger than padded input");
  }
  if (opts.pad_mode == PadMode::reflect && (opts.padding >= x.dim(2) || opts.padding >= x.dim(3))) {
    throw ConfigError("conv2d: reflection padding must be smaller than the input");
  }
  ConvGeometry g{x.dim(1),
                 x.dim(2),
                 x.dim(3),
                 k,
                 opts.stride,
                 opts.padding,
                 (x.dim(2) + 2 * opts.padding - k) / opts.stride + 1,
                 (x.dim(3) + 2 * opts.padding - k) / opts.stride + 1,
                 opts.pad_mode};

  Tensor out(Shape{n, c_out, g.h_out, g.w_out});
  Buffer col(g.patch() * g.pixels());
  ConstMatMap wm(w.data(), static_cast<Eigen::Index>(c_out), static_cast<Eigen::Index>(g.patch()));
  ConstMatMap cm(col.data(), static_cast<Eigen::Index>(g.patch()),
                 static_cast<Eigen::Index>(g.pixels()));
  const std::size_t in_stride = g.c_in * g.h * g.w;
  const std::size_t out_stride = c_out * g.pixels();
  for (std::size_t s = 0; s < n; ++s) {
    im2col(g, x.data() + s * in_stride, col.data());
    MatMap om(out.data() + s * out_stride, static_cast<Eigen::Index>(c_out),
              static_cast<Eigen::Index>(g.pixels()));
    om.noalias() = wm * cm;
    for (std::size_t co = 0; co < c_out; ++co) om.row(static_cast<Eigen::Index>(co)).array() += b[co];
  }

  return input.tape().record(
      "conv2d", std::move(out), {input, weight, bias}, [g, n, c_out](BackwardContext& ctx) {
        const Tensor& gy = ctx.grad_output();
        const Tensor& x = ctx.input(0);
        const Tensor& w = ctx.input(1);
        const auto patch = static_cast<Eigen::Index>(g.patch());
        const auto pixels = static_cast<Eigen::Index>(g.pixels());
        const auto co = static_cast<Eigen::Index>(c_out);
        const std::size_t in_stride = g.c_in * g.h * g.w;
        const std::size_t out_stride = c_out * g.pixels();
        const bool need_x = ctx.needs_grad(0);
        const bool need_w = ctx.needs_grad(1);
        const bool need_b = ctx.needs_grad(2);
        Buffer col(g.patch() * g.pixels());
        MatMap cm(col.data(), patch, pixels);
        ConstMatMap wm(w.data(), co, patch);
        if (need_b) {
          Tensor& db = ctx.input_grad(2);
          for (std::size_t s = 0; s < n; ++s) {
            ConstMatMap gm(gy.data() + s * out_stride, co, pixels);
            for (Eigen::Index c = 0; c < co; ++c) db[static_cast<std::size_t>(c)] += gm.row(c).sum();
          }
        }
        if (need_w) {
          Tensor& dw = ctx.input_grad(1);
          MatMap dwm(dw.data(), co, patch);
          for (std::size_t s = 0; s < n; ++s) {
            im2col(g, x.data() + s * in_stride, col.data());
            ConstMatMap gm(gy.data() + s * out_stride, co, pixels);
            dwm.noalias() += gm * cm.transpose();
          }
        }
        if (need_x) {
          Tensor& dx = ctx.input_grad(0);
          for (std::size_t s = 0; s < n; ++s) {
            ConstMatMap gm(gy.data() + s * out_stride, co, pixels);
            cm.noalias() = wm.transpose() * gm;
            col2im_add(g, col.data(), dx.data() + s * in_stride);
          }
        }
      });
}

Var max_pool2d(Var input) {
  const Tensor& x = input.value();
  require_rank("max_pool2d", x, 4);
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (h < 2 || w < 2) throw ConfigError("max_pool2d: input smaller than window");
  const std::size_t ho = h / 2, wo = w / 2;
  Tensor out(Shape{n, c, ho, wo});
  std::vector<std::size_t> argmax(out.size());
  std::size_t o = 0;
  for (std::size_t p = 0; p < n * c; ++p) {
    const double* plane = x.data() + p * h * w;
    for (std::size_t y = 0; y < ho; ++y) {
      for (std::size_t xx = 0; xx < wo; ++xx, ++o) {
        std::size_t best = (2 * y) * w + 2 * xx;
        for (std::size_t dy = 0; dy < 2; ++dy) {
          for (std::size_t dx = 0; dx < 2; ++dx) {
            std::size_t idx = (2 * y + dy) * w + 2 * xx + dx;
            if (plane[idx] > plane[best]) best = idx;
          }
        }
        argmax[o] = p * h * w + best;
        out[o] = plane[best];
      }
    }
  }
  return input.tape().record("max_pool2d", std::move(out), {input},
                             [argmax = std::move(argmax)](BackwardContext& ctx) {
                               const Tensor& g = ctx.grad_output();
                               Tensor& dst = ctx.input_grad(0);
                               for (std::size_t i = 0; i < g.size(); ++i) dst[argmax[i]] += g[i];
                             });
}

Var upsample_nearest2x(Var input) {
  const Tensor& x = input.value();
  require_rank("upsample_nearest2x", x, 4);
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  Tensor out(Shape{n, c, 2 * h, 2 * w});
  for (std::size_t p = 0; p < n * c; ++p) {
    const double* src = x.data() + p * h * w;
    double* dst = out.data() + p * 4 * h * w;
    for (std::size_t y = 0; y < 2 * h; ++y) {
      for (std::size_t xx = 0; xx < 2 * w; ++xx) dst[y * 2 * w + xx] = src[(y / 2) * w + xx / 2];
    }
  }
  return input.tape().record("upsample_nearest2x", std::move(out), {input},
                             [n, c, h, w](BackwardContext& ctx) {
                               const Tensor& g = ctx.grad_output();
                               Tensor& dst = ctx.input_grad(0);
                               for (std::size_t p = 0; p < n * c; ++p) {
                                 const double* src = g.data() + p * 4 * h * w;
                                 double* d = dst.data() + p * h * w;
                                 for (std::size_t y = 0; y < 2 * h; ++y) {
                                   for (std::size_t xx = 0; xx < 2 * w; ++xx) {
                                     d[(y / 2) * w + xx / 2] += src[y * 2 * w + xx];
                                   }
                                 }
                               }
                             });
}

Var linear(Var input, Var weight, Var bias) {
  const Tensor& x = input.value();
  const Tensor& w = weight.value();
  const Tensor& b = bias.value();
  require_rank("linear input", x, 2);
  require_rank("linear weight", w, 2);
  require_rank("linear bias", b, 1);
  if (w.dim(1) != x.dim(1) || b.dim(0) != w.dim(0)) {
    throw ConfigError("linear: incompatible shapes input " + shape_string(x.shape()) +
                      " weight " + shape_string(w.shape()));
  }
  const auto n = static_cast<Eigen::Index>(x.dim(0));
  const auto f = static_cast<Eigen::Index>(x.dim(1));
  const auto o = static_cast<Eigen::Index>(w.dim(0));
  Tensor out(Shape{x.dim(0), w.dim(0)});
  MatMap om(out.data(), n, o);
  om.noalias() = ConstMatMap(x.data(), n, f) * ConstMatMap(w.data(), o, f).transpose();
  for (Eigen::Index r = 0; r < n; ++r) {
    for (Eigen::Index c = 0; c < o; ++c) om(r, c) += b[static_cast<std::size_t>(c)];
  }
  return input.tape().record(
      "linear", std::move(out), {input, weight, bias}, [n, f, o](BackwardContext& ctx) {
        ConstMatMap gm(ctx.grad_output().data(), n, o);
        if (ctx.needs_grad(0)) {
          MatMap dx(ctx.input_grad(0).data(), n, f);
          dx.noalias() += gm * ConstMatMap(ctx.input(1).data(), o, f);
        }
        if (ctx.needs_grad(1)) {
          MatMap dw(ctx.input_grad(1).data(), o, f);
          dw.noalias() += gm.transpose() * ConstMatMap(ctx.input(0).data(), n, f);
        }
        if (ctx.needs_grad(2)) {
          Tensor& db = ctx.input_grad(2);
          for (Eigen::Index r = 0; r < n; ++r) {
            for (Eigen::Index c = 0; c < o; ++c) db[static_cast<std::size_t>(c)] += gm(r, c);
          }
        }
      });
}

Var softmax_cross_entropy(Var logits, std::span<const int> labels) {
  const Tensor& z = logits.value();
  require_rank("softmax_cross_entropy", z, 2);
  const std::size_t n = z.dim(0), k = z.dim(1);
  if (labels.size() != n) throw ConfigError("softmax_cross_entropy: label count mismatch");
  Tensor probs(Shape{n, k});
  Tensor out(Shape{n});
  std::vector<int> lab(labels.begin(), labels.end());
  for (std::size_t r = 0; r < n; ++r) {
    if (lab[r] < 0 || static_cast<std::size_t>(lab[r]) >= k) {
      throw ConfigError("softmax_cross_entropy: label out of range");
    }
    const double* row = z.data() + r * k;
    double mx = *std::max_element(row, row + k);
    double total = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      probs[r * k + c] = std::exp(row[c] - mx);
      total += probs[r * k + c];
    }
    for (std::size_t c = 0; c < k; ++c) probs[r * k + c] /= total;
    out[r] = std::log(total) + mx - row[lab[r]];
  }
  return logits.tape().record(
      "softmax_cross_entropy", std::move(out), {logits},
      [probs = std::move(probs), lab = std::move(lab), n, k](BackwardContext& ctx) {
        const Tensor& g = ctx.grad_output();
        Tensor& dst = ctx.input_grad(0);
        for (std::size_t r = 0; r < n; ++r) {
          for (std::size_t c = 0; c < k; ++c) {
            double p = probs[r * k + c] - (static_cast<int>(c) == lab[r] ? 1.0 : 0.0);
            dst[r * k + c] += g[r] * p;
          }
        }
      });
}

Var channel_mean(Var input) {
  const Tensor& x = input.value();
  require_rank("channel_mean", x, 4);
  const std::size_t planes = x.dim(0) * x.dim(1);
  const std::size_t hw = x.dim(2) * x.dim(3);
  if (hw == 0) throw ConfigError("channel_mean: empty spatial extent");
  Tensor out(Shape{x.dim(0), x.dim(1)});
  for (std::size_t p = 0; p < planes; ++p) {
    double acc = 0.0;
    for (std::size_t i = 0; i < hw; ++i) acc += x[p * hw + i];
    out[p] = acc / static_cast<double>(hw);
  }
  return input.tape().record("channel_mean", std::move(out), {input},
                             [planes, hw](BackwardContext& ctx) {
                               const Tensor& g = ctx.grad_output();
                               Tensor& dst = ctx.input_grad(0);
                               const double inv = 1.0 / static_cast<double>(hw);
                               for (std::size_t p = 0; p < planes; ++p) {
                                 for (std::size_t i = 0; i < hw; ++i) dst[p * hw + i] += g[p] * inv;
                               }
                             });
}

Var channel_variance(Var input) {
  const Tensor& x = input.value();
  require_rank("channel_variance", x, 4);
  const std::size_t planes = x.dim(0) * x.dim(1);
  const std::size_t hw = x.dim(2) * x.dim(3);
  if (hw == 0) throw ConfigError("channel_variance: empty spatial extent");
  Tensor out(Shape{x.dim(0), x.dim(1)});
  std::vector<double> means(planes);
  for (std::size_t p = 0; p < planes; ++p) {
    double acc = 0.0;
    for (std::size_t i = 0; i < hw; ++i) acc += x[p * hw + i];
    means[p] = acc / static_cast<double>(hw);
    double sq = 0.0;
    for (std::size_t i = 0; i < hw; ++i) {
      double d = x[p * hw + i] - means[p];
      sq += d * d;
    }
    out[p] = sq / static_cast<double>(hw);
  }
  return input.tape().record(
      "channel_variance", std::move(out), {input},
      [planes, hw, means = std::move(means)](BackwardContext& ctx) {
        const Tensor& g = ctx.grad_output();
        const Tensor& x = ctx.input(0);
        Tensor& dst = ctx.input_grad(0);
        const double scale = 2.0 / static_cast<double>(hw);
        for (std::size_t p = 0; p < planes; ++p) {
          for (std::size_t i = 0; i < hw; ++i) {
            dst[p * hw + i] += g[p] * scale * (x[p * hw + i] - means[p]);
          }
        }
      });
}

Var channel_affine(Var input, Var scale, Var shift) {
  const Tensor& x = input.value();
  const Tensor& a = scale.value();
  const Tensor& b = shift.value();
  require_rank("channel_affine", x, 4);
  const Shape stats{x.dim(0), x.dim(1)};
  if (a.shape() != stats || b.shape() != stats) {
    throw ConfigError("channel_affine: scale/shift must be " + shape_string(stats));
  }
  const std::size_t planes = x.dim(0) * x.dim(1);
  const std::size_t hw = x.dim(2) * x.dim(3);
  Tensor out(x.shape());
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t i = 0; i < hw; ++i) out[p * hw + i] = x[p * hw + i] * a[p] + b[p];
  }
  return input.tape().record(
      "channel_affine", std::move(out), {input, scale, shift}, [planes, hw](BackwardContext& ctx) {
        const Tensor& g = ctx.grad_output();
        if (ctx.needs_grad(0)) {
          const Tensor& a = ctx.input(1);
          Tensor& dst = ctx.input_grad(0);
          for (std::size_t p = 0; p < planes; ++p) {
            for (std::size_t i = 0; i < hw; ++i) dst[p * hw + i] += g[p * hw + i] * a[p];
          }
        }
        if (ctx.needs_grad(1)) {
          const Tensor& x = ctx.input(0);
          Tensor& dst = ctx.input_grad(1);
          for (std::size_t p = 0; p < planes; ++p) {
            double acc = 0.0;
            for (std::size_t i = 0; i < hw; ++i) acc += g[p * hw + i] * x[p * hw + i];
            dst[p] += acc;
          }
        }
        if (ctx.needs_grad(2)) {
          Tensor& dst = ctx.input_grad(2);
          for (std::size_t p = 0; p < planes; ++p) {
            double acc = 0.0;
            for (std::size_t i = 0; i < hw; ++i) acc += g[p * hw + i];
            dst[p] += acc;
          }
        }
      });
}

Var row_l2_norm(Var input) {
  const Tensor& x = input.value();
  if (x.rank() == 0) throw ConfigError("row_l2_norm: needs a leading axis");
  const std::size_t n = x.dim(0);
  const std::size_t row = n == 0 ? 0 : x.size() / n;
  Tensor out(Shape{n});
  for (std::size_t r = 0; r < n; ++r) {
    double acc = 0.0;
    for (std::size_t i = 0; i < row; ++i) acc += x[r * row + i] * x[r * row + i];
    out[r] = std::sqrt(acc);
  }
  return input.tape().record("row_l2_norm", std::move(out), {input}, [n, row](BackwardContext& ctx) {
    const Tensor& g = ctx.grad_output();
    const Tensor& x = ctx.input(0);
    const Tensor& y = ctx.output();
    Tensor& dst = ctx.input_grad(0);
    for (std::size_t r = 0; r < n; ++r) {
      if (y[r] == 0.0) continue;
      const double s = g[r] / y[r];
      for (std::size_t i = 0; i < row; ++i) dst[r * row + i] += s * x[r * row + i];
    }
  });
}

Var weighted_sum(Var weights, Var vertices) {
  const Tensor& wt = weights.value();
  const Tensor& v = vertices.value();
  require_rank("weighted_sum weights", wt, 2);
  require_rank("weighted_sum vertices", v, 3);
  const std::size_t n = wt.dim(0), k = wt.dim(1), c = v.dim(2);
  if (v.dim(0) != n || v.dim(1) != k) {
    throw ConfigError("weighted_sum: weights " + shape_string(wt.shape()) + " vs vertices " +
                      shape_string(v.shape()));
  }
  Tensor out(Shape{n, c});
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t j = 0; j < k; ++j) {
      const double a = wt[r * k + j];
      for (std::size_t ch = 0; ch < c; ++ch) out[r * c + ch] += a * v[(r * k + j) * c + ch];
    }
  }
  return weights.tape().record(
      "weighted_sum", std::move(out), {weights, vertices}, [n, k, c](BackwardContext& ctx) {
        const Tensor& g = ctx.grad_output();
        if (ctx.needs_grad(0)) {
          const Tensor& v = ctx.input(1);
          Tensor& dst = ctx.input_grad(0);
          for (std::size_t r = 0; r < n; ++r) {
            for (std::size_t j = 0; j < k; ++j) {
              double acc = 0.0;
              for (std::size_t ch = 0; ch < c; ++ch) acc += g[r * c + ch] * v[(r * k + j) * c + ch];
              dst[r * k + j] += acc;
            }
          }
        }
        if (ctx.needs_grad(1)) {
          const Tensor& wt = ctx.input(0);
          Tensor& dst = ctx.input_grad(1);
          for (std::size_t r = 0; r < n; ++r) {
            for (std::size_t j = 0; j < k; ++j) {
              for (std::size_t ch = 0; ch < c; ++ch) {
                dst[(r * k + j) * c + ch] += wt[r * k + j] * g[r * c + ch];
              }
            }
          }
        }
      });
}

}  // namespace fsat::ops
