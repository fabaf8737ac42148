#include "fsat/style.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "fsat/ops.hpp"

namespace fsat {

ChannelStats channel_stats(Var embedding) {
  Var mu = ops::channel_mean(embedding);
  Var var = ops::channel_variance(embedding);
  Var sigma = ops::sqrt(ops::clamp(var, kVarianceFloor, std::numeric_limits<double>::infinity()));
  return {mu, sigma};
}

StyleStats channel_stats(const Tensor& embedding) {
  Tape tape;
  ChannelStats s = channel_stats(tape.constant(embedding));
  return {s.mu.value(), s.sigma.value()};
}

Var adain(Var content, const ChannelStats& style) {
  ChannelStats own = channel_stats(content);
  if (own.mu.shape() != style.mu.shape() || own.sigma.shape() != style.sigma.shape()) {
    throw ConfigError("adain: channel count mismatch " + shape_string(own.mu.shape()) + " vs " +
                      shape_string(style.mu.shape()));
  }
  Var scale = ops::div(style.sigma, own.sigma);
  Var shift = ops::sub(style.mu, ops::mul(scale, own.mu));
  return ops::channel_affine(content, scale, shift);
}

Var augment_transform(Var embedding, Var tau_mu, Var tau_sigma) {
  Var mu = ops::channel_mean(embedding);
  if (tau_mu.shape() != mu.shape() || tau_sigma.shape() != mu.shape()) {
    throw ConfigError("augment_transform: tau must be " + shape_string(mu.shape()));
  }
  Var scale_sigma = ops::exp(tau_sigma);
  Var scale_mu = ops::exp(tau_mu);
  Var shift = ops::mul(ops::sub(scale_mu, scale_sigma), mu);
  return ops::channel_affine(embedding, scale_sigma, shift);
}

StylePerturbation::StylePerturbation(std::size_t n, std::size_t channels, double eps)
    : tau_mu(Shape{n, channels}), tau_sigma(Shape{n, channels}), epsilon(eps) {
  if (!(eps >= 0.0)) throw ConfigError("epsilon must be non-negative");
}

void StylePerturbation::project() {
  for (double& v : tau_mu.values()) v = std::clamp(v, -epsilon, epsilon);
  for (double& v : tau_sigma.values()) v = std::clamp(v, -epsilon, epsilon);
}

bool StylePerturbation::feasible() const {
  auto inside = [this](double v) { return v >= -epsilon && v <= epsilon; };
  return std::all_of(tau_mu.values().begin(), tau_mu.values().end(), inside) &&
         std::all_of(tau_sigma.values().begin(), tau_sigma.values().end(), inside);
}

bool on_simplex(std::span<const double> gamma, double tol) {
  if (gamma.empty()) return false;
  double total = 0.0;
  for (double g : gamma) {
    if (!(g >= 0.0)) return false;
    total += g;
  }
  return std::abs(total - 1.0) <= tol;
}

SimplexCoefficients::SimplexCoefficients(std::vector<double> gamma) : gamma_(std::move(gamma)) {
  if (!on_simplex(gamma_)) throw UsageError("coefficients are not on the probability simplex");
}

SimplexCoefficients SimplexCoefficients::uniform(std::size_t k) {
  if (k == 0) throw UsageError("simplex needs at least one vertex");
  return SimplexCoefficients(std::vector<double>(k, 1.0 / static_cast<double>(k)));
}

SimplexCoefficients SimplexCoefficients::one_hot(std::size_t k, std::size_t index) {
  if (index >= k) throw UsageError("one-hot index out of range");
  std::vector<double> g(k, 0.0);
  g[index] = 1.0;
  return SimplexCoefficients(std::move(g));
}

namespace {

constexpr double kDegenerateSum = 1e-5;

void project_in_place(std::span<double> g) {
  double total = 0.0;
  for (double& v : g) {
    v = std::max(v, 0.0);
    total += v;
  }
  if (total < kDegenerateSum) {
    std::fill(g.begin(), g.end(), 1.0 / static_cast<double>(g.size()));
    return;
  }
  for (double& v : g) v /= total;
}

}  // namespace

SimplexCoefficients project_simplex(std::span<const double> raw) {
  if (raw.empty()) throw UsageError("project_simplex: empty vector");
  std::vector<double> g(raw.begin(), raw.end());
  project_in_place(g);
  return SimplexCoefficients(std::move(g));
}

void project_simplex_rows(Tensor& gamma) {
  if (gamma.rank() != 2 || gamma.dim(1) == 0) throw ConfigError("project_simplex_rows expects [N,K]");
  const std::size_t k = gamma.dim(1);
  for (std::size_t r = 0; r < gamma.dim(0); ++r) project_in_place(gamma.values().subspan(r * k, k));
}

ChannelStats interpolate_style(Var vertex_mu, Var vertex_sigma, Var gamma_mu, Var gamma_sigma) {
  if (vertex_mu.shape().size() != 3 || vertex_mu.shape()[1] < 2) {
    throw UsageError("interpolate_style needs at least two prototypes");
  }
  if (vertex_mu.shape() != vertex_sigma.shape() || gamma_mu.shape() != gamma_sigma.shape()) {
    throw ConfigError("interpolate_style: prototype mu/sigma shapes disagree");
  }
  return {ops::weighted_sum(gamma_mu, vertex_mu), ops::weighted_sum(gamma_sigma, vertex_sigma)};
}

StyleStats interpolate_style(std::span<const StyleStats> prototypes,
                             const SimplexCoefficients& gamma) {
  if (prototypes.size() < 2) throw UsageError("interpolate_style needs at least two prototypes");
  if (gamma.size() != prototypes.size()) {
    throw ConfigError("interpolate_style: " + std::to_string(gamma.size()) + " coefficients for " +
                      std::to_string(prototypes.size()) + " prototypes");
  }
  const std::size_t c = prototypes[0].mu.size();
  Tensor mu(Shape{1, c});
  Tensor sigma(Shape{1, c});
  for (std::size_t i = 0; i < prototypes.size(); ++i) {
    if (prototypes[i].mu.size() != c || prototypes[i].sigma.size() != c) {
      throw ConfigError("interpolate_style: prototype channel counts disagree");
    }
    const double g = gamma.values()[i];
    for (std::size_t ch = 0; ch < c; ++ch) {
      mu[ch] += g * prototypes[i].mu[ch];
      sigma[ch] += g * prototypes[i].sigma[ch];
    }
  }
  return {std::move(mu), std::move(sigma)};
}

Var content_loss(Var reconstructed, Var target) {
  return ops::row_l2_norm(ops::sub(reconstructed, target));
}

Var style_loss(std::span<const Var> style_acts, std::span<const Var> reconstructed_acts) {
  if (style_acts.size() != reconstructed_acts.size() || style_acts.empty()) {
    throw UsageError("style_loss: layer sets differ (" + std::to_string(style_acts.size()) +
                     " vs " + std::to_string(reconstructed_acts.size()) + ")");
  }
  Var total;
  for (std::size_t i = 0; i < style_acts.size(); ++i) {
    ChannelStats q = channel_stats(style_acts[i]);
    ChannelStats r = channel_stats(reconstructed_acts[i]);
    if (q.mu.shape() != r.mu.shape()) throw UsageError("style_loss: layer shapes differ");
    Var term = ops::add(ops::row_l2_norm(ops::sub(q.mu, r.mu)),
                        ops::row_l2_norm(ops::sub(q.sigma, r.sigma)));
    total = total.valid() ? ops::add(total, term) : term;
  }
  return total;
}

}  // namespace fsat
