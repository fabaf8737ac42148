#include "fsat/optim.hpp"

#include <algorithm>
#include <cmath>

namespace fsat {

Tensor clip_gradient_inf(const Tensor& g, std::int64_t dim) {
  if (dim <= 0) throw UsageError("clip_gradient_inf: dimension must be positive");
  const double bound = 10.0 / std::sqrt(static_cast<double>(dim));
  Tensor out(g.shape());
  for (std::size_t i = 0; i < g.size(); ++i) out[i] = std::clamp(g[i], -bound, bound);
  return out;
}

void Adam::step(std::span<Tensor* const> params, std::span<const Tensor> grads) {
  if (params.size() != grads.size()) throw ConfigError("adam: params/grads count mismatch");
  if (m_.empty()) {
    for (const Tensor* p : params) {
      m_.emplace_back(p->shape(), 0.0);
      v_.emplace_back(p->shape(), 0.0);
    }
  }
  if (m_.size() != params.size()) throw ConfigError("adam: parameter group changed");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i]->shape() != grads[i].shape() || params[i]->shape() != m_[i].shape()) {
      throw ConfigError("adam: shape mismatch for parameter " + std::to_string(i));
    }
  }
  ++t_;
  const double c1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    const Tensor& g = grads[i];
    Tensor& m = m_[i];
    Tensor& v = v_[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = opts_.beta1 * m[j] + (1.0 - opts_.beta1) * g[j];
      v[j] = opts_.beta2 * v[j] + (1.0 - opts_.beta2) * g[j] * g[j];
      const double m_hat = m[j] / c1;
      const double v_hat = v[j] / c2;
      p[j] -= opts_.lr * m_hat / (std::sqrt(v_hat) + opts_.eps);
    }
  }
}

void Adam::step(Tensor& param, const Tensor& grad) {
  Tensor* p = &param;
  step(std::span<Tensor* const>(&p, 1), std::span<const Tensor>(&grad, 1));
}

}  // namespace fsat
