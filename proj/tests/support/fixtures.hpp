#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "fsat/attacks.hpp"
#include "fsat/dataset.hpp"
#include "fsat/nets.hpp"

namespace fsat::testing {

/// 16x16 inputs, cut at relu2_1 with narrow widths. Cheap enough for unit tests.
ClassifierSpec tiny_classifier_spec(std::size_t num_classes = kSyntheticClasses);

/// Untrained networks over a small synthetic set. The encoder is the classifier prefix.
struct TinyWorld {
  Dataset data;
  Classifier classifier;
  Encoder encoder;
  Decoder decoder;
  AttackModels models() const { return {&classifier, &encoder, &decoder}; }
};

TinyWorld tiny_world(std::uint64_t seed, std::size_t count = 12);

/// Fresh empty directory under the system temp dir.
std::filesystem::path scratch_dir(const std::string& name);

}  // namespace fsat::testing
