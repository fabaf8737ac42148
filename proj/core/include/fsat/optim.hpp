#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "fsat/tensor.hpp"

namespace fsat {

/// Clamps every component of g into [-10/sqrt(dim), +10/sqrt(dim)], where dim is
/// the number of scalar decision variables in g's parameter group.
Tensor clip_gradient_inf(const Tensor& g, std::int64_t dim);

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction. One moment pair per parameter tensor.
class Adam {
 public:
  explicit Adam(AdamOptions opts = {}) : opts_(opts) {}

  /// Updates params in place. The first call fixes the parameter shapes.
  void step(std::span<Tensor* const> params, std::span<const Tensor> grads);
  void step(Tensor& param, const Tensor& grad);

  std::int64_t step_count() const { return t_; }
  const AdamOptions& options() const { return opts_; }

 private:
  AdamOptions opts_;
  std::int64_t t_ = 0;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
};

}  // namespace fsat
