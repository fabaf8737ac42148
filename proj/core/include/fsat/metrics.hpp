#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fsat/nets.hpp"
#include "fsat/tensor.hpp"

namespace fsat {

struct NormPair {
  double linf = 0.0;
  double l2 = 0.0;
};

/// Pixel values are in [0,1] units. L2 is over the flattened difference, not averaged.
struct DistanceReport {
  double pixel_linf = 0.0;
  double pixel_l2 = 0.0;
  double feature_linf = 0.0;
  double feature_l2 = 0.0;
};

/// Result of attacking one image.
struct AttackOutcome {
  Tensor original_image;     ///< [3,H,W]
  Tensor adversarial_image;  ///< [3,H,W], in [0,1]
  int true_label = 0;
  std::optional<int> target_label;
  int predicted_label = 0;
  bool success = false;
  std::optional<std::size_t> steps_to_first_success;
  double adversarial_loss = 0.0;
  double content_loss = 0.0;
  DistanceReport distances;
};

/// Max-abs and Euclidean norms of a - b.
NormPair pixel_distance(const Tensor& a, const Tensor& b);

/// Per-channel standardisation (x - mu) / sigma of an [N,C,H,W] embedding, with the
/// same variance floor as the channel statistics.
Tensor normalize_channels(const Tensor& embedding);
/// h(x): the encoder embedding of images [N,3,H,W] standardised per channel.
Tensor normalized_embedding(const Tensor& images, const Encoder& encoder);
/// Norms of h(x) - h(x'); x and x' are single images [3,H,W] or batches of one.
NormPair feature_distance(const Tensor& x, const Tensor& x_prime, const Encoder& encoder);
DistanceReport measure_distances(const Tensor& x, const Tensor& x_prime, const Encoder& encoder);

struct SummaryStat {
  double mean = 0.0;
  double median = 0.0;
};

/// Aggregate over an attack campaign. Distance statistics cover successful outcomes.
struct CampaignSummary {
  std::size_t attacked = 0;
  std::size_t successes = 0;
  double success_rate = 0.0;
  double accuracy_under_attack = 0.0;
  SummaryStat pixel_linf, pixel_l2, feature_linf, feature_l2;
  SummaryStat content_loss;
};

CampaignSummary campaign_report(std::span<const AttackOutcome> outcomes);

double median(std::vector<double> values);
double accuracy(std::span<const int> predicted, std::span<const int> labels);

/// Header and rows of the per-campaign summary table (l-inf also reported x255).
std::vector<std::string> summary_header();
std::vector<std::string> summary_row(const std::string& name, const CampaignSummary& s);

/// Header and one row per outcome.
std::vector<std::string> outcome_header();
std::vector<std::string> outcome_row(std::size_t index, const AttackOutcome& o);

}  // namespace fsat
