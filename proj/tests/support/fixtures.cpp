#include "fixtures.hpp"

#include <unistd.h>

#include "fsat/rng.hpp"

namespace fsat::testing {

ClassifierSpec tiny_classifier_spec(std::size_t num_classes) {
  ClassifierSpec spec;
  spec.encoder.widths = {4, 8};
  spec.encoder.image_size = 16;
  spec.head_widths = {8};
  spec.num_classes = num_classes;
  return spec;
}

TinyWorld tiny_world(std::uint64_t seed, std::size_t count) {
  TinyWorld w;
  w.data = make_synthetic_shapes(count, seed, 0, 16);
  w.classifier = Classifier(tiny_classifier_spec(), derive_seed(seed, 1));
  w.encoder = w.classifier.prefix();
  DecoderSpec ds;
  ds.encoder = w.classifier.spec().encoder;
  w.decoder = Decoder(ds, derive_seed(seed, 2));
  return w;
}

std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() /
                   ("fsat_test_" + std::to_string(::getpid()) + "_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace fsat::testing
