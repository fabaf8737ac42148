#include "fsat/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "fsat/strings.hpp"
#include "fsat/style.hpp"

namespace fsat {

NormPair pixel_distance(const Tensor& a, const Tensor& b) {
  if (a.size() != b.size() || a.shape() != b.shape()) {
    throw ConfigError("pixel_distance: shape mismatch " + shape_string(a.shape()) + " vs " +
                      shape_string(b.shape()));
  }
  NormPair d;
  double sq = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = a[i] - b[i];
    d.linf = std::max(d.linf, std::abs(diff));
    sq += diff * diff;
  }
  d.l2 = std::sqrt(sq);
  return d;
}

Tensor normalize_channels(const Tensor& embedding) {
  if (embedding.rank() != 4) throw ConfigError("normalize_channels expects [N,C,H,W]");
  const StyleStats stats = channel_stats(embedding);
  const std::size_t planes = embedding.dim(0) * embedding.dim(1);
  const std::size_t hw = embedding.dim(2) * embedding.dim(3);
  Tensor out(embedding.shape());
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t i = 0; i < hw; ++i) {
      out[p * hw + i] = (embedding[p * hw + i] - stats.mu[p]) / stats.sigma[p];
    }
  }
  return out;
}

Tensor normalized_embedding(const Tensor& images, const Encoder& encoder) {
  return normalize_channels(encoder.encode(images));
}

namespace {

Tensor as_batch(const Tensor& image) {
  if (image.rank() == 4) return image;
  if (image.rank() == 3) return image.reshaped({1, image.dim(0), image.dim(1), image.dim(2)});
  throw ConfigError("expected an image [3,H,W] or batch [N,3,H,W], got " + shape_string(image.shape()));
}

}  // namespace

NormPair feature_distance(const Tensor& x, const Tensor& x_prime, const Encoder& encoder) {
  if (x.shape() != x_prime.shape()) {
    throw ConfigError("feature_distance: shape mismatch " + shape_string(x.shape()) + " vs " +
                      shape_string(x_prime.shape()));
  }
  return pixel_distance(normalized_embedding(as_batch(x), encoder),
                        normalized_embedding(as_batch(x_prime), encoder));
}

DistanceReport measure_distances(const Tensor& x, const Tensor& x_prime, const Encoder& encoder) {
  const NormPair px = pixel_distance(x, x_prime);
  const NormPair ft = feature_distance(x, x_prime, encoder);
  return {px.linf, px.l2, ft.linf, ft.l2};
}

double median(std::vector<double> values) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

double accuracy(std::span<const int> predicted, std::span<const int> labels) {
  if (predicted.size() != labels.size()) throw ConfigError("accuracy: size mismatch");
  if (labels.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hits += predicted[i] == labels[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

namespace {

SummaryStat summarize(const std::vector<double>& v) {
  SummaryStat s;
  if (v.empty()) return s;
  double total = 0.0;
  for (double x : v) total += x;
  s.mean = total / static_cast<double>(v.size());
  s.median = median(v);
  return s;
}

}  // namespace

CampaignSummary campaign_report(std::span<const AttackOutcome> outcomes) {
  if (outcomes.empty()) throw UsageError("campaign_report: no outcomes");
  CampaignSummary s;
  s.attacked = outcomes.size();
  std::vector<double> pl, p2, fl, f2, content;
  std::size_t correct = 0;
  for (const auto& o : outcomes) {
    if (o.predicted_label == o.true_label) ++correct;
    if (!o.success) continue;
    ++s.successes;
    pl.push_back(o.distances.pixel_linf);
    p2.push_back(o.distances.pixel_l2);
    fl.push_back(o.distances.feature_linf);
    f2.push_back(o.distances.feature_l2);
    content.push_back(o.content_loss);
  }
  s.success_rate = static_cast<double>(s.successes) / static_cast<double>(s.attacked);
  s.accuracy_under_attack = static_cast<double>(correct) / static_cast<double>(s.attacked);
  s.pixel_linf = summarize(pl);
  s.pixel_l2 = summarize(p2);
  s.feature_linf = summarize(fl);
  s.feature_l2 = summarize(f2);
  s.content_loss = summarize(content);
  return s;
}

std::vector<std::string> summary_header() {
  return {"attack",
          "attacked",
          "successes",
          "success_rate",
          "accuracy_under_attack",
          "pixel_linf_mean",
          "pixel_linf_median",
          "pixel_linf_mean_x255",
          "pixel_linf_median_x255",
          "pixel_l2_mean",
          "pixel_l2_median",
          "feature_linf_mean",
          "feature_linf_median",
          "feature_l2_mean",
          "feature_l2_median",
          "content_loss_mean",
          "content_loss_median"};
}

std::vector<std::string> summary_row(const std::string& name, const CampaignSummary& s) {
  return {name,
          std::to_string(s.attacked),
          std::to_string(s.successes),
          format_double(s.success_rate),
          format_double(s.accuracy_under_attack),
          format_double(s.pixel_linf.mean),
          format_double(s.pixel_linf.median),
          format_double(s.pixel_linf.mean * 255.0),
          format_double(s.pixel_linf.median * 255.0),
          format_double(s.pixel_l2.mean),
          format_double(s.pixel_l2.median),
          format_double(s.feature_linf.mean),
          format_double(s.feature_linf.median),
          format_double(s.feature_l2.mean),
          format_double(s.feature_l2.median),
          format_double(s.content_loss.mean),
          format_double(s.content_loss.median)};
}

std::vector<std::string> outcome_header() {
  return {"index",        "true_label",   "target_label",  "predicted_label", "success",
          "first_success", "adversarial_loss", "content_loss", "pixel_linf",   "pixel_l2",
          "feature_linf", "feature_l2"};
}

std::vector<std::string> outcome_row(std::size_t index, const AttackOutcome& o) {
  return {std::to_string(index),
          std::to_string(o.true_label),
          o.target_label ? std::to_string(*o.target_label) : "",
          std::to_string(o.predicted_label),
          o.success ? "1" : "0",
          o.steps_to_first_success ? std::to_string(*o.steps_to_first_success) : "",
          format_double(o.adversarial_loss),
          format_double(o.content_loss),
          format_double(o.distances.pixel_linf),
          format_double(o.distances.pixel_l2),
          format_double(o.distances.feature_linf),
          format_double(o.distances.feature_l2)};
}

}  // namespace fsat
