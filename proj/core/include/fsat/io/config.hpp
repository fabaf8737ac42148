#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fsat/attacks.hpp"
#include "fsat/io/datasets.hpp"
#include "fsat/nets.hpp"
#include "fsat/training.hpp"

namespace fsat::io {

struct ConfigKey {
  std::string key;
  std::string default_value;
  std::string doc;
};

/// Every accepted key with its default and a one-line description.
const std::vector<ConfigKey>& config_keys();

/// Flat `key = value` settings. Lines starting with '#' and blank lines are ignored.
/// Unknown keys are rejected; keys not given keep their documented defaults.
class RunConfig {
 public:
  RunConfig();

  static RunConfig from_file(const std::filesystem::path& path);
  void load_text(std::string_view text, const std::string& origin);
  void set(const std::string& key, const std::string& value);
  /// "key=value".
  void apply_override(std::string_view assignment);

  const std::string& get(const std::string& key) const;
  double get_double(const std::string& key) const;
  std::int64_t get_int(const std::string& key) const;
  std::size_t get_size(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  /// Empty value -> nullopt.
  std::optional<double> get_optional_double(const std::string& key) const;
  std::optional<std::int64_t> get_optional_int(const std::string& key) const;

  /// Resolved settings in registry order; parses back to an identical config.
  std::string to_text() const;
  const std::map<std::string, std::string>& values() const { return values_; }

  std::filesystem::path output_dir() const;
  /// Configured checkpoint path, or <output_dir>/<fallback> when empty.
  std::filesystem::path checkpoint_path(const std::string& key, const std::string& fallback) const;

 private:
  std::map<std::string, std::string> values_;
};

DatasetSpec dataset_spec(const RunConfig& cfg, Split split);
EncoderSpec encoder_spec(const RunConfig& cfg);
ClassifierSpec classifier_spec(const RunConfig& cfg, std::size_t num_classes);
DecoderSpec decoder_spec(const RunConfig& cfg);
ClassifierTrainConfig classifier_train_config(const RunConfig& cfg);
DecoderTrainConfig decoder_train_config(const RunConfig& cfg);
AttackConfig attack_config(const RunConfig& cfg);
AdvTrainConfig adv_train_config(const RunConfig& cfg);

}  // namespace fsat::io
