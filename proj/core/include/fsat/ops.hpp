#pragma once

#include <span>
#include <vector>

#include "fsat/tensor.hpp"

/// Differentiable primitives. Image tensors are laid out N x C x H x W.
namespace fsat::ops {

enum class PadMode { zero, reflect };

struct Conv2dOptions {
  std::size_t stride = 1;
  std::size_t padding = 0;
  PadMode pad_mode = PadMode::zero;
};

// Elementwise, identical shapes.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);

Var add_scalar(Var a, double s);
Var mul_scalar(Var a, double s);
Var exp(Var a);
Var sqrt(Var a);
Var relu(Var a);
/// Pass-through gradient strictly inside [lo, hi], zero outside.
Var clamp(Var a, double lo, double hi);

Var sum(Var a);
Var mean(Var a);
Var reshape(Var a, Shape shape);
Var concat(std::span<const Var> parts, std::size_t axis);

Var conv2d(Var input, Var weight, Var bias, const Conv2dOptions& opts = {});
/// 2x2 window, stride 2.
Var max_pool2d(Var input);
/// Nearest-neighbour x2 upsampling.
Var upsample_nearest2x(Var input);
/// input [N,F], weight [O,F], bias [O] -> [N,O].
Var linear(Var input, Var weight, Var bias);
/// Per-sample cross-entropy of softmax(logits) [N,K] against labels -> [N].
Var softmax_cross_entropy(Var logits, std::span<const int> labels);

/// Spatial mean per (n, c) -> [N,C].
Var channel_mean(Var input);
/// Spatial population variance per (n, c) -> [N,C].
Var channel_variance(Var input);
/// input[n,c,h,w] * scale[n,c] + shift[n,c].
Var channel_affine(Var input, Var scale, Var shift);

/// Euclidean norm of each leading-axis slice -> [N]. Gradient at a zero row is zero.
Var row_l2_norm(Var input);
/// out[n,c] = sum_k weights[n,k] * vertices[n,k,c].
Var weighted_sum(Var weights, Var vertices);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator/(Var a, Var b) { return div(a, b); }

}  // namespace fsat::ops
