#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "fsat/attacks.hpp"
#include "fsat/dataset.hpp"
#include "fsat/nets.hpp"
#include "fsat/rng.hpp"

namespace fsat {

struct ClassifierTrainConfig {
  std::size_t epochs = 10;
  double lr = 1e-3;
  std::size_t batch = 64;
  std::uint64_t seed = 0;

  void validate() const;
};

struct ClassifierEpoch {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  /// Clean accuracy on the evaluation set, when one is given.
  std::optional<double> test_accuracy;
};

using EpochLog = std::function<void(const std::string&)>;

/// Adam on mean cross-entropy with a seeded shuffle per epoch. Updates `model` in place.
std::vector<ClassifierEpoch> train_classifier(Classifier& model, const Dataset& train,
                                              const Dataset* test,
                                              const ClassifierTrainConfig& cfg,
                                              const EpochLog& log = {});

/// Pairs (content, style) whose labels always agree. Every image is the content
/// image once per epoch, in shuffled order; the style image is drawn uniformly from
/// the same class (possibly the image itself).
class SameClassPairSampler {
 public:
  SameClassPairSampler(const Dataset& data, std::uint64_t seed);

  /// Reshuffles the content order for the given epoch.
  void start_epoch(std::size_t epoch);
  /// Up to `count` pairs; empty when the epoch is exhausted.
  std::vector<std::pair<std::size_t, std::size_t>> next(std::size_t count);

 private:
  const Dataset& data_;
  std::uint64_t seed_;
  std::vector<std::vector<std::size_t>> by_class_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  Rng rng_;
};

struct DecoderTrainConfig {
  std::size_t epochs = 20;
  std::size_t batch = 64;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  /// Epochs without validation improvement before stopping; 0 disables.
  std::size_t patience = 3;
  /// Fixed same-class pairs drawn from the validation set for early stopping.
  std::size_t validation_pairs = 256;

  void validate() const;
};

struct DecoderEpoch {
  std::size_t epoch = 0;
  double content_loss = 0.0;
  double style_loss = 0.0;
  std::optional<double> validation_loss;
};

/// Per-pair training objective: content_loss(f(x_r), B^o) + style_loss(x_q, x_r) with
/// B^o = adain(f(x_p), stats(f(x_q))) and x_r = decoder(B^o). Returns [N] terms.
struct DecoderLoss {
  Var content;
  Var style;
};
DecoderLoss decoder_loss(Tape& tape, const Encoder& encoder, const Decoder& decoder,
                         const ParamBinding& binding, const Tensor& content_images,
                         const Tensor& style_images);

/// Trains only the decoder; the encoder stays frozen. With a validation set the best
/// epoch's weights are restored at the end.
std::vector<DecoderEpoch> train_decoder(Decoder& decoder, const Encoder& encoder,
                                        const Dataset& train, const Dataset* validation,
                                        const DecoderTrainConfig& cfg, const EpochLog& log = {});

struct AdvTrainConfig {
  std::size_t steps = 400;
  std::size_t epochs = 25;
  double lr = 1e-3;
  std::size_t batch = 64;
  /// Fraction of every batch replaced by adversarial samples.
  double mix = 1.0;
  std::uint64_t seed = 0;
  /// Attack used to generate training samples; its `steps` field is overridden.
  AttackConfig attack;

  void validate() const;
};

struct AdvEpoch {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  /// Accuracy of the current model on the samples it was trained on.
  double train_accuracy = 0.0;
  /// Fraction of generated samples the model still classified correctly before
  /// the update that used them.
  double adversarial_accuracy = 0.0;
  std::optional<double> test_accuracy;
};

/// Fine-tunes `model` on adversarial samples generated against its current weights.
/// `encoder` and `decoder` are the original frozen pair used by feature-space modes.
/// With 0 attack steps the loop is standard training on clean batches.
std::vector<AdvEpoch> adversarial_train(Classifier& model, const Dataset& train,
                                        const Dataset* test, const Encoder& encoder,
                                        const Decoder* decoder, const AdvTrainConfig& cfg,
                                        const EpochLog& log = {});

}  // namespace fsat
