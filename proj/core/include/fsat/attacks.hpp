#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fsat/dataset.hpp"
#include "fsat/metrics.hpp"
#include "fsat/nets.hpp"
#include "fsat/style.hpp"

namespace fsat {

enum class AttackMode { augmentation, interpolation, pgd };

std::string to_string(AttackMode mode);
AttackMode parse_attack_mode(std::string_view name);

inline const double kUntargetedEpsilon = std::log(1.5);
inline const double kTargetedEpsilon = std::log(2.0);
inline constexpr double kPgdEpsilon = 8.0 / 255.0;
inline constexpr std::size_t kAttackSteps = 500;
inline constexpr std::size_t kEvaluationSteps = 2000;

struct AttackConfig {
  AttackMode mode = AttackMode::augmentation;
  bool targeted = false;
  std::optional<int> target_label;
  /// Log-scale bound for feature attacks, pixel bound for PGD. Unset: mode default.
  std::optional<double> epsilon;
  std::size_t steps = kAttackSteps;
  /// Adam learning rate for feature attacks.
  double lr = 0.01;
  /// Weight of the content loss in the attack objective.
  double content_weight = 1.0;
  /// Number of style prototypes supplied to the interpolation attack.
  std::size_t k = 8;
  std::uint64_t seed = 0;
  /// PGD step size. Unset: epsilon / 4.
  std::optional<double> pgd_step;
  /// Images attacked together on one tape.
  std::size_t batch = 64;
  bool measure_distances = true;

  double resolved_epsilon() const;
  double resolved_pgd_step() const;
  void validate() const;
};

/// State after each optimizer update, for feasibility auditing.
struct AttackStep {
  std::size_t step = 0;
  AttackMode mode = AttackMode::augmentation;
  double epsilon = 0.0;
  const Tensor* tau_mu = nullptr;
  const Tensor* tau_sigma = nullptr;
  const Tensor* gamma_mu = nullptr;
  const Tensor* gamma_sigma = nullptr;
  const Tensor* images = nullptr;
  const Tensor* origin = nullptr;
};

using AttackObserver = std::function<void(const AttackStep&)>;

/// Target model M, frozen encoder f and decoder f^-1. The encoder is also used for
/// feature-space distances; the decoder is only needed by the feature attacks.
struct AttackModels {
  const Classifier* classifier = nullptr;
  const Encoder* encoder = nullptr;
  const Decoder* decoder = nullptr;
};

/// Per-sample loss to minimise: -CE(logits, y) untargeted, CE(logits, target) targeted.
Var adversarial_loss(Var logits, std::span<const int> labels, bool targeted,
                     std::span<const int> targets = {});

/// Per-sample feature-attack objective at a perturbed embedding B^s:
/// x' = f^-1(B^s), total = adversarial_loss(M(x')) + lambda * ||f(x') - B^s||_2.
struct FeatureObjective {
  Var images;
  Var logits;
  Var adversarial;
  Var content;
  Var total;
};
FeatureObjective feature_objective(Tape& tape, Var perturbed, std::span<const int> labels,
                                   const AttackModels& models, const AttackConfig& cfg,
                                   std::span<const int> targets = {});

/// Interpolation vertices [N,K,C] for each input: its own statistics first, then
/// the prototypes' statistics.
StyleStats interpolation_vertices(const Tensor& images, const Tensor& prototypes,
                                  const Encoder& encoder);

/// Perturbs per-channel mean/std by e^tau with ||tau||_inf <= epsilon.
std::vector<AttackOutcome> attack_augmentation(const Tensor& images, std::span<const int> labels,
                                               const AttackModels& models, const AttackConfig& cfg,
                                               const AttackObserver& observer = {});

/// Moves per-channel mean/std inside the simplex spanned by the input's own
/// statistics (vertex 0) and those of the prototype images [k,3,H,W].
std::vector<AttackOutcome> attack_interpolation(const Tensor& images, std::span<const int> labels,
                                                const Tensor& prototypes,
                                                const AttackModels& models,
                                                const AttackConfig& cfg,
                                                const AttackObserver& observer = {});

/// Iterative FGSM in pixel space under an l-inf ball.
std::vector<AttackOutcome> attack_pgd(const Tensor& images, std::span<const int> labels,
                                      const AttackModels& models, const AttackConfig& cfg,
                                      const AttackObserver& observer = {});

/// Dispatches on cfg.mode and processes the images in chunks of cfg.batch.
std::vector<AttackOutcome> run_attack(const Tensor& images, std::span<const int> labels,
                                      const AttackModels& models, const AttackConfig& cfg,
                                      const Tensor* prototypes = nullptr,
                                      const AttackObserver& observer = {});

/// k distinct images drawn from the dataset with the given seed.
Tensor choose_prototypes(const Dataset& data, std::size_t k, std::uint64_t seed);

}  // namespace fsat
