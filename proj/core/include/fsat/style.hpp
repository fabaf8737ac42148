#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "fsat/tensor.hpp"

namespace fsat {

/// Lower bound on the spatial variance before the square root, so sigma >= sqrt(floor).
/// Channels above the floor keep their exact std, which keeps adain exact for them.
inline constexpr double kVarianceFloor = 1e-5;

/// Per-channel spatial mean and std of an embedding, each [N,C].
struct ChannelStats {
  Var mu;
  Var sigma;
};

/// Value-level counterpart of ChannelStats.
struct StyleStats {
  Tensor mu;
  Tensor sigma;
};

/// mu = spatial mean, sigma = sqrt(max(population variance, floor)), per (n, c).
ChannelStats channel_stats(Var embedding);
StyleStats channel_stats(const Tensor& embedding);

/// Statistic swap: re-expresses `content` with the target per-channel mean and std.
/// out[n,c] = style.sigma * (content - mu) / sigma + style.mu
Var adain(Var content, const ChannelStats& style);

/// Feature augmentation: out = e^{tau_sigma} (B - mu_B) + e^{tau_mu} mu_B per channel.
/// Evaluated as B * e^{tau_sigma} + (e^{tau_mu} - e^{tau_sigma}) mu_B, which is the
/// identity bit for bit at tau = 0.
Var augment_transform(Var embedding, Var tau_mu, Var tau_sigma);

/// Bounded log-scale offsets of the augmentation family, each [N,C].
struct StylePerturbation {
  Tensor tau_mu;
  Tensor tau_sigma;
  double epsilon = 0.0;

  StylePerturbation(std::size_t n, std::size_t channels, double epsilon);

  /// Clamp both vectors into [-epsilon, epsilon].
  void project();
  bool feasible() const;
};

/// Non-negative weights summing to one (within 1e-6).
class SimplexCoefficients {
 public:
  explicit SimplexCoefficients(std::vector<double> gamma);

  static SimplexCoefficients uniform(std::size_t k);
  static SimplexCoefficients one_hot(std::size_t k, std::size_t index);

  std::span<const double> values() const { return gamma_; }
  std::size_t size() const { return gamma_.size(); }

 private:
  std::vector<double> gamma_;
};

inline constexpr double kSimplexTolerance = 1e-6;

bool on_simplex(std::span<const double> gamma, double tol = kSimplexTolerance);

/// Clip to non-negative, then normalise to unit sum. When the clipped sum is below
/// 1e-5 the vector resets to uniform 1/k.
SimplexCoefficients project_simplex(std::span<const double> raw);
/// Row-wise project_simplex on a [N,K] tensor.
void project_simplex_rows(Tensor& gamma);

/// Convex combination of k >= 2 prototype statistics.
/// Batched form: vertices [N,K,C], coefficients [N,K].
ChannelStats interpolate_style(Var vertex_mu, Var vertex_sigma, Var gamma_mu, Var gamma_sigma);
/// Single-image form over prototypes with [C] or [1,C] statistics.
StyleStats interpolate_style(std::span<const StyleStats> prototypes, const SimplexCoefficients& gamma);

/// Per-sample ||B_r - B_o||_2 -> [N].
Var content_loss(Var reconstructed, Var target);

/// Per-sample sum over layers of ||mu_q - mu_r||_2 + ||sigma_q - sigma_r||_2 -> [N].
Var style_loss(std::span<const Var> style_acts, std::span<const Var> reconstructed_acts);

}  // namespace fsat
