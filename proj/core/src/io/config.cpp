#include "fsat/io/config.hpp"

#include <fstream>
#include <iterator>
#include <sstream>

#include "fsat/strings.hpp"

namespace fsat::io {

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = {
      {"seed", "0", "master seed for weight init, shuffling and attack sampling"},
      {"output_dir", "runs/default", "directory for checkpoints, reports, images and manifests"},

      {"dataset.name", "synthetic-shapes", "cifar10, svhn-cropped or synthetic-shapes"},
      {"dataset.root", "", "directory holding the dataset files"},
      {"dataset.train_subset", "0", "keep the first n training items (0 = all)"},
      {"dataset.test_subset", "0", "keep the first n test items (0 = all)"},
      {"dataset.synthetic_train", "4000", "synthetic-shapes training set size"},
      {"dataset.synthetic_test", "1000", "synthetic-shapes test set size"},
      {"dataset.synthetic_seed", "1", "synthetic-shapes generator seed"},

      {"encoder.cut_layer", "relu2_1", "encoder cut layer, relu1_1 .. relu4_1"},
      {"encoder.widths", "32,64", "conv width of each encoder block up to the cut"},
      {"encoder.convs_per_block", "1", "convs per encoder block"},
      {"encoder.style_layers", "2", "style loss uses relu1_1 .. relu<n>_1"},
      {"encoder.padding", "zero", "encoder conv padding: zero or reflect"},
      {"classifier.head_widths", "64", "conv widths of the classifier head after the prefix"},
      {"decoder.convs_per_block", "1", "convs per decoder block"},
      {"decoder.padding", "reflect", "decoder conv padding: zero or reflect"},

      {"train.epochs", "10", "classifier training epochs"},
      {"train.lr", "0.001", "classifier Adam learning rate"},
      {"train.batch", "64", "classifier batch size"},
      {"train.decoder_epochs", "20", "maximum decoder training epochs"},
      {"train.decoder_lr", "0.001", "decoder Adam learning rate"},
      {"train.decoder_batch", "64", "decoder batch size (same-class pairs)"},
      {"train.decoder_patience", "3", "early-stop patience in epochs (0 disables)"},
      {"train.decoder_validation_pairs", "256", "held-out pairs scored for early stopping"},

      {"attack.mode", "augmentation", "augmentation, interpolation or pgd"},
      {"attack.epsilon", "", "bound; empty = ln 1.5 untargeted, ln 2 targeted, 8/255 for pgd"},
      {"attack.steps", "500", "optimisation steps (2000 for evaluation runs)"},
      {"attack.lr", "0.01", "Adam learning rate of the feature-space attacks"},
      {"attack.lambda", "1.0", "weight of the content loss in the attack objective"},
      {"attack.targeted", "false", "targeted attack"},
      {"attack.target", "", "target class of a targeted attack"},
      {"attack.k", "8", "style prototypes for the interpolation attack"},
      {"attack.pgd_step", "", "pgd step size; empty = epsilon / 4"},
      {"attack.batch", "64", "images attacked together"},
      {"attack.count", "100", "number of test images to attack (0 = all)"},
      {"attack.correct_only", "true", "attack only images the model classifies correctly"},
      {"attack.save_images", "8", "adversarial samples and difference maps written to disk"},
      {"attack.image_format", "png", "png or ppm"},

      {"adv.steps", "400", "attack steps used to generate training samples"},
      {"adv.epochs", "25", "adversarial training epochs"},
      {"adv.lr", "0.001", "adversarial training Adam learning rate"},
      {"adv.batch", "64", "adversarial training batch size"},
      {"adv.mix", "1.0", "fraction of each batch replaced by adversarial samples"},
      {"adv.mode", "augmentation", "attack used during adversarial training"},
      {"adv.epsilon", "", "bound of the training attack; empty = that attack's default"},

      {"checkpoint.classifier", "", "classifier checkpoint (default <output_dir>/classifier.fsat)"},
      {"checkpoint.decoder", "", "encoder/decoder checkpoint (default <output_dir>/decoder.fsat)"},
      {"checkpoint.adv_classifier", "",
       "adversarially trained classifier (default <output_dir>/adv_classifier.fsat)"},
      {"report.inputs", "", "comma-separated outcome CSVs; empty = every *_outcomes.csv in output_dir"},
  };
  return keys;
}

RunConfig::RunConfig() {
  for (const auto& k : config_keys()) values_[k.key] = k.default_value;
}

RunConfig RunConfig::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  RunConfig cfg;
  cfg.load_text(text, path.string());
  return cfg;
}

void RunConfig::load_text(std::string_view text, const std::string& origin) {
  std::size_t line_no = 0;
  for (const std::string& raw : split(text, '\n')) {
    ++line_no;
    const std::string_view line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key(trim(line.substr(0, eq)));
    try {
      set(key, std::string(trim(line.substr(eq + 1))));
    } catch (const ConfigError& e) {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

void RunConfig::set(const std::string& key, const std::string& value) {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
  it->second = value;
}

void RunConfig::apply_override(std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) {
    throw ConfigError("override '" + std::string(assignment) + "' is not key=value");
  }
  set(std::string(trim(assignment.substr(0, eq))), std::string(trim(assignment.substr(eq + 1))));
}

const std::string& RunConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
  return it->second;
}

double RunConfig::get_double(const std::string& key) const { return parse_double(get(key), key); }
std::int64_t RunConfig::get_int(const std::string& key) const { return parse_int(get(key), key); }
std::size_t RunConfig::get_size(const std::string& key) const {
  return static_cast<std::size_t>(parse_uint(get(key), key));
}
std::uint64_t RunConfig::get_u64(const std::string& key) const { return parse_uint(get(key), key); }
bool RunConfig::get_bool(const std::string& key) const { return parse_bool(get(key), key); }

std::optional<double> RunConfig::get_optional_double(const std::string& key) const {
  const std::string& v = get(key);
  if (v.empty()) return std::nullopt;
  return parse_double(v, key);
}

std::optional<std::int64_t> RunConfig::get_optional_int(const std::string& key) const {
  const std::string& v = get(key);
  if (v.empty()) return std::nullopt;
  return parse_int(v, key);
}

std::string RunConfig::to_text() const {
  std::ostringstream out;
  for (const auto& k : config_keys()) out << k.key << " = " << values_.at(k.key) << '\n';
  return out.str();
}

std::filesystem::path RunConfig::output_dir() const { return get("output_dir"); }

std::filesystem::path RunConfig::checkpoint_path(const std::string& key,
                                                 const std::string& fallback) const {
  const std::string& v = get(key);
  return v.empty() ? output_dir() / fallback : std::filesystem::path(v);
}

DatasetSpec dataset_spec(const RunConfig& cfg, Split split) {
  DatasetSpec spec;
  spec.name = parse_dataset_name(cfg.get("dataset.name"));
  spec.root = cfg.get("dataset.root");
  spec.split = split;
  spec.subset_size = cfg.get_size(split == Split::train ? "dataset.train_subset" : "dataset.test_subset");
  spec.synthetic_train = cfg.get_size("dataset.synthetic_train");
  spec.synthetic_test = cfg.get_size("dataset.synthetic_test");
  spec.synthetic_seed = cfg.get_u64("dataset.synthetic_seed");
  if (spec.name != DatasetName::synthetic_shapes && spec.root.empty()) {
    throw ConfigError("dataset.root is required for " + to_string(spec.name));
  }
  return spec;
}

EncoderSpec encoder_spec(const RunConfig& cfg) {
  Metadata meta;
  for (const char* k : {"cut_layer", "widths", "convs_per_block", "style_layers", "padding"}) {
    meta[std::string("encoder.") + k] = cfg.get(std::string("encoder.") + k);
  }
  meta["encoder.image_size"] = "32";
  meta["encoder.in_channels"] = "3";
  return encoder_spec_from_metadata(meta);
}

ClassifierSpec classifier_spec(const RunConfig& cfg, std::size_t num_classes) {
  ClassifierSpec spec;
  spec.encoder = encoder_spec(cfg);
  spec.head_widths = parse_size_list(cfg.get("classifier.head_widths"), "classifier.head_widths");
  spec.num_classes = num_classes;
  spec.validate();
  return spec;
}

DecoderSpec decoder_spec(const RunConfig& cfg) {
  Metadata meta = to_metadata(encoder_spec(cfg));
  meta["decoder.convs_per_block"] = cfg.get("decoder.convs_per_block");
  meta["decoder.padding"] = cfg.get("decoder.padding");
  return decoder_spec_from_metadata(meta);
}

ClassifierTrainConfig classifier_train_config(const RunConfig& cfg) {
  ClassifierTrainConfig c;
  c.epochs = cfg.get_size("train.epochs");
  c.lr = cfg.get_double("train.lr");
  c.batch = cfg.get_size("train.batch");
  c.seed = cfg.get_u64("seed");
  c.validate();
  return c;
}

DecoderTrainConfig decoder_train_config(const RunConfig& cfg) {
  DecoderTrainConfig c;
  c.epochs = cfg.get_size("train.decoder_epochs");
  c.lr = cfg.get_double("train.decoder_lr");
  c.batch = cfg.get_size("train.decoder_batch");
  c.patience = cfg.get_size("train.decoder_patience");
  c.validation_pairs = cfg.get_size("train.decoder_validation_pairs");
  c.seed = cfg.get_u64("seed");
  c.validate();
  return c;
}

AttackConfig attack_config(const RunConfig& cfg) {
  AttackConfig a;
  a.mode = parse_attack_mode(cfg.get("attack.mode"));
  a.targeted = cfg.get_bool("attack.targeted");
  if (auto t = cfg.get_optional_int("attack.target")) a.target_label = static_cast<int>(*t);
  a.epsilon = cfg.get_optional_double("attack.epsilon");
  a.steps = cfg.get_size("attack.steps");
  a.lr = cfg.get_double("attack.lr");
  a.content_weight = cfg.get_double("attack.lambda");
  a.k = cfg.get_size("attack.k");
  a.pgd_step = cfg.get_optional_double("attack.pgd_step");
  a.batch = cfg.get_size("attack.batch");
  a.seed = cfg.get_u64("seed");
  a.validate();
  return a;
}

AdvTrainConfig adv_train_config(const RunConfig& cfg) {
  AdvTrainConfig c;
  c.steps = cfg.get_size("adv.steps");
  c.epochs = cfg.get_size("adv.epochs");
  c.lr = cfg.get_double("adv.lr");
  c.batch = cfg.get_size("adv.batch");
  c.mix = cfg.get_double("adv.mix");
  c.seed = cfg.get_u64("seed");
  c.attack.mode = parse_attack_mode(cfg.get("adv.mode"));
  c.attack.epsilon = cfg.get_optional_double("adv.epsilon");
  c.attack.lr = cfg.get_double("attack.lr");
  c.attack.content_weight = cfg.get_double("attack.lambda");
  c.attack.k = cfg.get_size("attack.k");
  c.attack.pgd_step = cfg.get_optional_double("attack.pgd_step");
  c.attack.seed = c.seed;
  c.validate();
  return c;
}

}  // namespace fsat::io
