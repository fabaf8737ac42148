#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <functional>
#include <map>
#include <ostream>

#include "fsat/attacks.hpp"
#include "fsat/io/checkpoint.hpp"
#include "fsat/io/config.hpp"
#include "fsat/io/csv.hpp"
#include "fsat/io/datasets.hpp"
#include "fsat/io/image.hpp"
#include "fsat/io/manifest.hpp"
#include "fsat/metrics.hpp"
#include "fsat/rng.hpp"
#include "fsat/strings.hpp"
#include "fsat/training.hpp"

namespace fsat::cli {

namespace fs = std::filesystem;

namespace {

// Seed streams for network initialisation.
constexpr std::uint64_t kClassifierInit = 11;
constexpr std::uint64_t kDecoderInit = 12;

struct Context {
  io::RunConfig cfg;
  std::ostream& out;

  EpochLog logger(const std::string& prefix) const {
    return [this, prefix](const std::string& line) { out << prefix << line << '\n' << std::flush; };
  }
};

Dataset load_split(const io::RunConfig& cfg, io::Split split) {
  return io::load_dataset(io::dataset_spec(cfg, split));
}

std::string fmt(double v) { return format_double(v); }

io::Checkpoint load_checkpoint(const fs::path& path) { return io::read_checkpoint(path); }

Classifier load_classifier(const io::RunConfig& cfg, const std::string& key, const std::string& file) {
  return io::classifier_from_checkpoint(load_checkpoint(cfg.checkpoint_path(key, file)));
}

io::AutoEncoder load_autoencoder(const io::RunConfig& cfg) {
  return io::autoencoder_from_checkpoint(
      load_checkpoint(cfg.checkpoint_path("checkpoint.decoder", "decoder.fsat")));
}

int train_classifier_cmd(Context& ctx) {
  const auto& cfg = ctx.cfg;
  const Dataset train = load_split(cfg, io::Split::train);
  const Dataset test = load_split(cfg, io::Split::test);
  const ClassifierTrainConfig tc = io::classifier_train_config(cfg);
  Classifier model(io::classifier_spec(cfg, train.num_classes), derive_seed(tc.seed, kClassifierInit));
  ctx.out << "training classifier on " << train.size() << " images (" << model.parameter_count()
          << " parameters)\n";
  const auto history = train_classifier(model, train, &test, tc, ctx.logger("  "));

  std::vector<io::CsvRow> rows;
  for (const auto& e : history) {
    rows.push_back({std::to_string(e.epoch), fmt(e.train_loss), fmt(e.train_accuracy),
                    e.test_accuracy ? fmt(*e.test_accuracy) : ""});
  }
  io::write_csv(cfg.output_dir() / "classifier_curve.csv",
                {"epoch", "train_loss", "train_accuracy", "test_accuracy"}, rows);
  const double acc = accuracy(model.predict(test.images), test.labels);
  const fs::path path = cfg.checkpoint_path("checkpoint.classifier", "classifier.fsat");
  io::write_checkpoint(path, io::classifier_checkpoint(model, {{"clean_accuracy", fmt(acc)},
                                                              {"seed", std::to_string(tc.seed)}}));
  ctx.out << "clean test accuracy " << fmt(acc) << "\nwrote " << path.string() << '\n';
  return kExitOk;
}

int train_decoder_cmd(Context& ctx) {
  const auto& cfg = ctx.cfg;
  const Classifier model = load_classifier(cfg, "checkpoint.classifier", "classifier.fsat");
  const Encoder encoder = model.prefix();
  DecoderSpec spec = io::decoder_spec(cfg);
  spec.encoder = encoder.spec();
  const DecoderTrainConfig dc = io::decoder_train_config(cfg);
  Decoder decoder(spec, derive_seed(dc.seed, kDecoderInit));
  const Dataset train = load_split(cfg, io::Split::train);
  const Dataset test = load_split(cfg, io::Split::test);
  ctx.out << "training decoder on same-class pairs from " << train.size() << " images\n";
  const auto history = train_decoder(decoder, encoder, train, &test, dc, ctx.logger("  "));

  std::vector<io::CsvRow> rows;
  for (const auto& e : history) {
    rows.push_back({std::to_string(e.epoch), fmt(e.content_loss), fmt(e.style_loss),
                    e.validation_loss ? fmt(*e.validation_loss) : ""});
  }
  io::write_csv(cfg.output_dir() / "decoder_curve.csv",
                {"epoch", "content_loss", "style_loss", "validation_loss"}, rows);
  const double clean = accuracy(model.predict(test.images), test.labels);
  const double pass = accuracy(model.predict(decoder.decode(encoder.encode(test.images))), test.labels);
  const fs::path path = cfg.checkpoint_path("checkpoint.decoder", "decoder.fsat");
  io::write_checkpoint(path, io::decoder_checkpoint(decoder, encoder,
                                                    {{"clean_accuracy", fmt(clean)},
                                                     {"passthrough_accuracy", fmt(pass)},
                                                     {"seed", std::to_string(dc.seed)}}));
  ctx.out << "clean accuracy " << fmt(clean) << ", decoder pass-through accuracy " << fmt(pass)
          << "\nwrote " << path.string() << '\n';
  return kExitOk;
}

void save_samples(const io::RunConfig& cfg, const std::string& stem,
                  const std::vector<AttackOutcome>& outcomes) {
  const std::size_t n = std::min(cfg.get_size("attack.save_images"), outcomes.size());
  if (n == 0) return;
  const std::string ext = "." + cfg.get("attack.image_format");
  const fs::path dir = cfg.output_dir() / (stem + "_images");
  fs::create_directories(dir);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& o = outcomes[i];
    const std::string base = std::to_string(i);
    io::save_image(dir / (base + "_original" + ext), o.original_image);
    io::save_image(dir / (base + "_adversarial" + ext), o.adversarial_image);
    io::save_image(dir / (base + "_diff_x3" + ext), io::difference_map(o.adversarial_image, o.original_image));
  }
}

int attack_cmd(Context& ctx) {
  const auto& cfg = ctx.cfg;
  const AttackConfig ac = io::attack_config(cfg);
  const std::string image_format = cfg.get("attack.image_format");
  if (image_format != "png" && image_format != "ppm") {
    throw ConfigError("attack.image_format must be png or ppm");
  }
  const Classifier model = load_classifier(cfg, "checkpoint.classifier", "classifier.fsat");
  std::optional<io::AutoEncoder> ae;
  const Decoder* decoder = nullptr;
  Encoder encoder;
  if (ac.mode != AttackMode::pgd || fs::exists(cfg.checkpoint_path("checkpoint.decoder", "decoder.fsat"))) {
    ae = load_autoencoder(cfg);
    encoder = ae->encoder;
    decoder = &ae->decoder;
  } else {
    encoder = model.prefix();
  }

  const Dataset test = load_split(cfg, io::Split::test);
  const std::vector<int> pred = model.predict(test.images);
  const std::size_t want = cfg.get_size("attack.count");
  const bool correct_only = cfg.get_bool("attack.correct_only");
  std::vector<std::size_t> chosen;
  for (std::size_t i = 0; i < test.size() && (want == 0 || chosen.size() < want); ++i) {
    if (correct_only && pred[i] != test.labels[i]) continue;
    if (ac.targeted && test.labels[i] == *ac.target_label) continue;
    chosen.push_back(i);
  }
  if (chosen.empty()) throw ConfigError("no test images qualify for the attack");
  const Dataset victims = test.subset(chosen);

  Tensor prototypes;
  if (ac.mode == AttackMode::interpolation) {
    prototypes = choose_prototypes(load_split(cfg, io::Split::train), ac.k, ac.seed);
  }
  ctx.out << "running " << to_string(ac.mode) << " attack on " << victims.size()
          << " images, epsilon " << fmt(ac.resolved_epsilon()) << ", " << ac.steps << " steps\n";
  const AttackModels models{&model, &encoder, decoder};
  const auto outcomes = run_attack(victims.images, victims.labels, models, ac, &prototypes);

  const std::string stem = to_string(ac.mode);
  std::vector<io::CsvRow> rows;
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    io::CsvRow r = outcome_row(chosen[i], outcomes[i]);
    rows.push_back(std::move(r));
  }
  io::write_csv(cfg.output_dir() / (stem + "_outcomes.csv"), outcome_header(), rows);
  const CampaignSummary s = campaign_report(outcomes);
  io::write_csv(cfg.output_dir() / (stem + "_summary.csv"), summary_header(), {summary_row(stem, s)});
  save_samples(cfg, stem, outcomes);
  ctx.out << "success rate " << fmt(s.success_rate) << " (" << s.successes << "/" << s.attacked
          << "), median pixel l2 " << fmt(s.pixel_l2.median) << ", median feature l2 "
          << fmt(s.feature_l2.median) << '\n';
  return kExitOk;
}

int adv_train_cmd(Context& ctx) {
  const auto& cfg = ctx.cfg;
  const AdvTrainConfig ac = io::adv_train_config(cfg);
  Classifier model = load_classifier(cfg, "checkpoint.classifier", "classifier.fsat");
  std::optional<io::AutoEncoder> ae;
  Encoder encoder = model.prefix();
  if (ac.attack.mode != AttackMode::pgd) {
    ae = load_autoencoder(cfg);
    encoder = ae->encoder;
  }
  const Dataset train = load_split(cfg, io::Split::train);
  const Dataset test = load_split(cfg, io::Split::test);
  ctx.out << "adversarial training with " << to_string(ac.attack.mode) << " samples, " << ac.steps
          << " attack steps, " << ac.epochs << " epochs\n";
  const auto history = adversarial_train(model, train, &test, encoder, ae ? &ae->decoder : nullptr,
                                         ac, ctx.logger("  "));
  std::vector<io::CsvRow> rows;
  for (const auto& e : history) {
    rows.push_back({std::to_string(e.epoch), fmt(e.train_loss), fmt(e.train_accuracy),
                    fmt(e.adversarial_accuracy), e.test_accuracy ? fmt(*e.test_accuracy) : ""});
  }
  io::write_csv(cfg.output_dir() / "adv_curve.csv",
                {"epoch", "train_loss", "train_accuracy", "adversarial_accuracy", "test_accuracy"},
                rows);
  const double acc = accuracy(model.predict(test.images), test.labels);
  const fs::path path = cfg.checkpoint_path("checkpoint.adv_classifier", "adv_classifier.fsat");
  io::write_checkpoint(path, io::classifier_checkpoint(
                                 model, {{"clean_accuracy", fmt(acc)},
                                         {"adv.mode", to_string(ac.attack.mode)},
                                         {"adv.steps", std::to_string(ac.steps)},
                                         {"seed", std::to_string(ac.seed)}}));
  ctx.out << "clean test accuracy " << fmt(acc) << "\nwrote " << path.string() << '\n';
  return kExitOk;
}

int eval_cmd(Context& ctx) {
  const auto& cfg = ctx.cfg;
  const Classifier model = load_classifier(cfg, "checkpoint.classifier", "classifier.fsat");
  const Dataset test = load_split(cfg, io::Split::test);
  const std::vector<int> pred = model.predict(test.images);
  std::vector<std::size_t> hits(test.num_classes), totals(test.num_classes);
  for (std::size_t i = 0; i < test.size(); ++i) {
    const auto y = static_cast<std::size_t>(test.labels[i]);
    ++totals[y];
    hits[y] += pred[i] == test.labels[i] ? 1 : 0;
  }
  std::vector<io::CsvRow> rows;
  for (std::size_t c = 0; c < test.num_classes; ++c) {
    const double a = totals[c] == 0 ? 0.0 : static_cast<double>(hits[c]) / static_cast<double>(totals[c]);
    rows.push_back({std::to_string(c), std::to_string(totals[c]), fmt(a)});
  }
  const double acc = accuracy(pred, test.labels);
  rows.push_back({"all", std::to_string(test.size()), fmt(acc)});
  io::write_csv(cfg.output_dir() / "eval.csv", {"class", "count", "accuracy"}, rows);
  ctx.out << "clean test accuracy " << fmt(acc) << " on " << test.size() << " images\n";
  return kExitOk;
}

int reconstruct_cmd(Context& ctx) {
  const auto& cfg = ctx.cfg;
  const Classifier model = load_classifier(cfg, "checkpoint.classifier", "classifier.fsat");
  const io::AutoEncoder ae = load_autoencoder(cfg);
  const Dataset test = load_split(cfg, io::Split::test);
  const Tensor passed = ae.decoder.decode(ae.encoder.encode(test.images));
  const double clean = accuracy(model.predict(test.images), test.labels);
  const double pass = accuracy(model.predict(passed), test.labels);
  io::write_csv(cfg.output_dir() / "reconstruct.csv",
                {"images", "clean_accuracy", "passthrough_accuracy", "accuracy_drop"},
                {{std::to_string(test.size()), fmt(clean), fmt(pass), fmt(clean - pass)}});
  const std::size_t n = std::min(cfg.get_size("attack.save_images"), test.size());
  if (n > 0) {
    const std::string ext = "." + cfg.get("attack.image_format");
    const fs::path dir = cfg.output_dir() / "reconstruct_images";
    fs::create_directories(dir);
    const std::size_t per = test.images.size() / test.size();
    const Shape shape{test.images.dim(1), test.images.dim(2), test.images.dim(3)};
    for (std::size_t i = 0; i < n; ++i) {
      const Tensor a(shape, std::vector<double>(test.images.data() + i * per, test.images.data() + (i + 1) * per));
      const Tensor b(shape, std::vector<double>(passed.data() + i * per, passed.data() + (i + 1) * per));
      io::save_image(dir / (std::to_string(i) + "_original" + ext), a);
      io::save_image(dir / (std::to_string(i) + "_passthrough" + ext), b);
    }
  }
  ctx.out << "clean accuracy " << fmt(clean) << ", pass-through accuracy " << fmt(pass)
          << ", drop " << fmt(clean - pass) << '\n';
  return kExitOk;
}

// Rebuilds the summary fields of an outcome from one CSV row.
AttackOutcome outcome_from_row(const std::vector<std::string>& header, const io::CsvRow& row,
                               const std::string& origin) {
  if (row.size() != header.size()) throw ConfigError(origin + ": ragged row");
  std::map<std::string, std::string> f;
  for (std::size_t i = 0; i < header.size(); ++i) f[header[i]] = row[i];
  auto need = [&](const std::string& k) -> const std::string& {
    auto it = f.find(k);
    if (it == f.end()) throw ConfigError(origin + ": missing column '" + k + "'");
    return it->second;
  };
  AttackOutcome o;
  o.true_label = static_cast<int>(parse_int(need("true_label"), "true_label"));
  o.predicted_label = static_cast<int>(parse_int(need("predicted_label"), "predicted_label"));
  o.success = parse_bool(need("success"), "success");
  o.adversarial_loss = parse_double(need("adversarial_loss"), "adversarial_loss");
  o.content_loss = parse_double(need("content_loss"), "content_loss");
  o.distances = {parse_double(need("pixel_linf"), "pixel_linf"), parse_double(need("pixel_l2"), "pixel_l2"),
                 parse_double(need("feature_linf"), "feature_linf"),
                 parse_double(need("feature_l2"), "feature_l2")};
  return o;
}

int report_cmd(Context& ctx) {
  const auto& cfg = ctx.cfg;
  std::vector<fs::path> inputs;
  const std::string listed = cfg.get("report.inputs");
  if (!listed.empty()) {
    for (const auto& p : split(listed, ',')) inputs.emplace_back(std::string(trim(p)));
  } else if (fs::is_directory(cfg.output_dir())) {
    for (const auto& entry : fs::directory_iterator(cfg.output_dir())) {
      const std::string name = entry.path().filename().string();
      if (name.size() > 13 && name.ends_with("_outcomes.csv")) inputs.push_back(entry.path());
    }
    std::sort(inputs.begin(), inputs.end());
  }
  if (inputs.empty()) throw ConfigError("report: no outcome CSVs found (set report.inputs)");

  std::vector<io::CsvRow> rows;
  for (const auto& path : inputs) {
    const auto table = io::read_csv(path);
    if (table.size() < 2) throw ConfigError(path.string() + ": no outcome rows");
    std::vector<AttackOutcome> outcomes;
    for (std::size_t r = 1; r < table.size(); ++r) {
      outcomes.push_back(outcome_from_row(table[0], table[r], path.string()));
    }
    std::string name = path.filename().string();
    if (name.ends_with("_outcomes.csv")) name.resize(name.size() - 13);
    const CampaignSummary s = campaign_report(outcomes);
    rows.push_back(summary_row(name, s));
    ctx.out << name << ": success " << fmt(s.success_rate) << " (" << s.successes << "/" << s.attacked
            << "), median pixel l2 " << fmt(s.pixel_l2.median) << ", median feature l2 "
            << fmt(s.feature_l2.median) << '\n';
  }
  io::write_csv(cfg.output_dir() / "report.csv", summary_header(), rows);
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Feature-space adversarial attack toolkit", "fsat"};
  app.require_subcommand(1);
  app.set_version_flag("--version", io::build_id());

  std::string config_path;
  std::vector<std::string> overrides;
  using Handler = std::function<int(Context&)>;
  const std::vector<std::tuple<std::string, std::string, Handler>> commands = {
      {"train-classifier", "train the target classifier", train_classifier_cmd},
      {"train-decoder", "train the decoder on same-class style pairs", train_decoder_cmd},
      {"attack", "run an attack campaign on test images", attack_cmd},
      {"adv-train", "adversarially fine-tune the classifier", adv_train_cmd},
      {"eval", "clean accuracy of a classifier checkpoint", eval_cmd},
      {"reconstruct", "decoder pass-through images and accuracy drop", reconstruct_cmd},
      {"report", "summarise attack outcome CSVs", report_cmd},
  };
  std::map<CLI::App*, std::pair<std::string, Handler>> handlers;
  for (const auto& [name, help, fn] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config_path, "flat key = value config file");
    sub->add_option("--set", overrides, "override one config key (key=value)")->allow_extra_args(false);
    handlers[sub] = {name, fn};
  }

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::Success& e) {
    // --help (per subcommand) and --version.
    app.exit(e, out, err);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "fsat: " << e.what() << '\n';
    return kExitConfig;
  }

  CLI::App* chosen = app.get_subcommands().front();
  const auto& [name, handler] = handlers.at(chosen);
  try {
    io::RunConfig cfg = config_path.empty() ? io::RunConfig() : io::RunConfig::from_file(config_path);
    for (const auto& o : overrides) cfg.apply_override(o);
    Context ctx{cfg, out};
    const fs::path manifest = io::write_manifest(name, cfg);
    out << "manifest " << manifest.string() << '\n';
    return handler(ctx);
  } catch (const ConfigError& e) {
    err << "fsat " << name << ": config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "fsat " << name << ": " << e.what() << '\n';
    return kExitRuntime;
  }
}

}  // namespace fsat::cli
