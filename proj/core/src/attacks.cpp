#include "fsat/attacks.hpp"

#include <algorithm>
#include <limits>

#include "fsat/optim.hpp"
#include "fsat/rng.hpp"
#include "fsat/style.hpp"

namespace fsat {

std::string to_string(AttackMode mode) {
  switch (mode) {
    case AttackMode::augmentation:
      return "augmentation";
    case AttackMode::interpolation:
      return "interpolation";
    case AttackMode::pgd:
      return "pgd";
  }
  return "unknown";
}

AttackMode parse_attack_mode(std::string_view name) {
  if (name == "augmentation") return AttackMode::augmentation;
  if (name == "interpolation") return AttackMode::interpolation;
  if (name == "pgd") return AttackMode::pgd;
  throw ConfigError("unknown attack mode '" + std::string(name) +
                    "' (expected augmentation, interpolation or pgd)");
}

double AttackConfig::resolved_epsilon() const {
  if (epsilon) return *epsilon;
  if (mode == AttackMode::pgd) return kPgdEpsilon;
  return targeted ? kTargetedEpsilon : kUntargetedEpsilon;
}

double AttackConfig::resolved_pgd_step() const {
  return pgd_step ? *pgd_step : resolved_epsilon() / 4.0;
}

void AttackConfig::validate() const {
  const double eps = resolved_epsilon();
  if (!(eps >= 0.0) || !std::isfinite(eps)) throw ConfigError("attack.epsilon must be finite and >= 0");
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("attack.lr must be finite and >= 0");
  if (!(content_weight >= 0.0) || !std::isfinite(content_weight)) {
    throw ConfigError("attack.lambda must be finite and >= 0");
  }
  if (pgd_step && !(*pgd_step >= 0.0)) throw ConfigError("attack.pgd_step must be >= 0");
  if (batch == 0) throw ConfigError("attack.batch must be positive");
  if (targeted && !target_label) throw ConfigError("targeted attack needs attack.target");
  if (mode == AttackMode::interpolation && k < 1) {
    throw ConfigError("attack.k must be at least 1 (the input's own style is added as a vertex)");
  }
}

Var adversarial_loss(Var logits, std::span<const int> labels, bool targeted,
                     std::span<const int> targets) {
  if (targeted) {
    if (targets.size() != labels.size()) throw UsageError("adversarial_loss: missing targets");
    return ops::softmax_cross_entropy(logits, targets);
  }
  return ops::mul_scalar(ops::softmax_cross_entropy(logits, labels), -1.0);
}

namespace {

struct Problem {
  const Tensor& images;
  std::span<const int> labels;
  std::vector<int> targets;
  const AttackModels& models;
  const AttackConfig& cfg;
  std::size_t n = 0;
};

Problem make_problem(const Tensor& images, std::span<const int> labels,
                     const AttackModels& models, const AttackConfig& cfg) {
  cfg.validate();
  if (models.classifier == nullptr) throw UsageError("attack needs a target classifier");
  if (images.rank() != 4 || images.dim(0) != labels.size()) {
    throw ConfigError("attack: images " + shape_string(images.shape()) + " do not match " +
                      std::to_string(labels.size()) + " labels");
  }
  Problem p{images, labels, {}, models, cfg, labels.size()};
  if (cfg.targeted) {
    const int num_classes = static_cast<int>(models.classifier->spec().num_classes);
    const int t = *cfg.target_label;
    if (t < 0 || t >= num_classes) {
      throw ConfigError("attack.target " + std::to_string(t) + " outside [0, " +
                        std::to_string(num_classes) + ")");
    }
    for (int y : labels) {
      if (y == t) throw ConfigError("attack.target equals the true label of an attacked image");
    }
    p.targets.assign(labels.size(), t);
  }
  return p;
}

bool is_success(const Problem& p, std::size_t i, int predicted) {
  return p.cfg.targeted ? predicted == p.targets[i] : predicted != p.labels[i];
}

// Best-iterate bookkeeping for one image.
struct Track {
  bool success = false;
  std::optional<std::size_t> first_success;
  double adv = std::numeric_limits<double>::infinity();
  double content = 0.0;
  int predicted = 0;
  Tensor image;
};

enum class Keep { lowest_content, latest };

// Successful iterates replace the kept one by `rule`; until the first success the
// iterate with the lowest adversarial loss is kept.
void observe(Track& t, std::size_t step, bool success, double adv, double content, int predicted,
             const double* pixels, std::size_t pixel_count, Keep rule) {
  bool take = false;
  if (success) {
    if (!t.first_success) t.first_success = step;
    take = !t.success || rule == Keep::latest || content < t.content;
    t.success = true;
  } else if (!t.success) {
    take = adv < t.adv;
  }
  if (!take) return;
  t.adv = adv;
  t.content = content;
  t.predicted = predicted;
  if (t.image.size() != pixel_count) t.image = Tensor(Shape{pixel_count});
  std::copy(pixels, pixels + pixel_count, t.image.data());
}

std::vector<AttackOutcome> finish(const Problem& p, std::vector<Track>& tracks) {
  const Shape img_shape{p.images.dim(1), p.images.dim(2), p.images.dim(3)};
  const std::size_t per = shape_size(img_shape);
  std::vector<AttackOutcome> out(p.n);
  for (std::size_t i = 0; i < p.n; ++i) {
    AttackOutcome& o = out[i];
    o.original_image = Tensor(img_shape, std::vector<double>(p.images.data() + i * per,
                                                             p.images.data() + (i + 1) * per));
    o.adversarial_image = tracks[i].image.reshaped(img_shape);
    o.true_label = p.labels[i];
    if (p.cfg.targeted) o.target_label = p.targets[i];
    o.predicted_label = tracks[i].predicted;
    o.success = tracks[i].success;
    o.steps_to_first_success = tracks[i].first_success;
    o.adversarial_loss = tracks[i].adv;
    o.content_loss = tracks[i].content;
    if (p.cfg.measure_distances && p.models.encoder != nullptr) {
      o.distances = measure_distances(o.original_image, o.adversarial_image, *p.models.encoder);
    }
  }
  return out;
}

// Builds the perturbed embedding B^s from the decision-variable leaves.
using Transform = std::function<Var(Tape&, Var embedding, std::span<const Var> vars)>;

struct FeatureSearch {
  std::vector<Tensor> vars;
  std::vector<std::int64_t> clip_dims;
  Transform transform;
  std::function<void(std::vector<Tensor>&)> project;
  std::function<void(std::size_t, const std::vector<Tensor>&)> notify;
};

std::vector<AttackOutcome> run_feature_search(const Problem& p, FeatureSearch& search) {
  if (p.models.decoder == nullptr) throw UsageError("feature-space attack needs a trained decoder");
  if (p.models.encoder == nullptr) throw UsageError("feature-space attack needs the encoder");
  const Encoder& encoder = *p.models.encoder;
  const Tensor embedding = encoder.encode(p.images);
  const std::size_t per = p.images.size() / p.n;
  std::vector<Track> tracks(p.n);
  Adam adam(AdamOptions{.lr = p.cfg.lr});
  std::vector<Tensor*> var_ptrs;
  for (auto& v : search.vars) var_ptrs.push_back(&v);

  for (std::size_t step = 0;; ++step) {
    const bool last = step == p.cfg.steps;
    Tape tape;
    std::vector<Var> leaves;
    for (const auto& v : search.vars) leaves.push_back(tape.leaf(v, !last));
    Var b = tape.constant(embedding);
    Var bs = search.transform(tape, b, leaves);
    const FeatureObjective obj = feature_objective(tape, bs, p.labels, p.models, p.cfg, p.targets);

    const std::vector<int> predicted = argmax_rows(obj.logits.value());
    for (std::size_t i = 0; i < p.n; ++i) {
      observe(tracks[i], step, is_success(p, i, predicted[i]), obj.adversarial.value()[i],
              obj.content.value()[i], predicted[i], obj.images.value().data() + i * per, per,
              Keep::lowest_content);
    }
    if (last) break;

    tape.backward(ops::sum(obj.total));
    std::vector<Tensor> grads;
    for (std::size_t v = 0; v < leaves.size(); ++v) {
      grads.push_back(clip_gradient_inf(tape.grad(leaves[v]), search.clip_dims[v]));
    }
    adam.step(var_ptrs, grads);
    search.project(search.vars);
    if (search.notify) search.notify(step + 1, search.vars);
  }
  return finish(p, tracks);
}

// Clamps x to [c - eps, c + eps] so that |x - c| <= eps also holds in floating
// point; c + eps can round to a point whose difference from c exceeds eps.
double clamp_to_ball(double x, double c, double eps) {
  double y = std::clamp(x, c - eps, c + eps);
  while (std::abs(y - c) > eps) y = std::nextafter(y, c);
  return y;
}

}  // namespace

FeatureObjective feature_objective(Tape& tape, Var perturbed, std::span<const int> labels,
                                   const AttackModels& models, const AttackConfig& cfg,
                                   std::span<const int> targets) {
  if (models.classifier == nullptr || models.encoder == nullptr || models.decoder == nullptr) {
    throw UsageError("feature_objective needs classifier, encoder and decoder");
  }
  const Classifier& model = *models.classifier;
  FeatureObjective o;
  o.images = models.decoder->forward(tape, perturbed);
  EncoderOutput rec = models.encoder->forward(tape, o.images);
  // When M1 is the attack encoder, M(x') is the head applied to f(x').
  o.logits = model.prefix_matches(*models.encoder)
                 ? model.head(tape, rec.embedding, model.bind(tape, false))
                 : model.logits(tape, o.images);
  o.content = content_loss(rec.embedding, perturbed);
  o.adversarial = adversarial_loss(o.logits, labels, cfg.targeted, targets);
  o.total = ops::add(o.adversarial, ops::mul_scalar(o.content, cfg.content_weight));
  return o;
}

StyleStats interpolation_vertices(const Tensor& images, const Tensor& prototypes,
                                  const Encoder& encoder) {
  const StyleStats own = channel_stats(encoder.encode(images));
  const StyleStats proto = channel_stats(encoder.encode(prototypes));
  const std::size_t n = images.dim(0);
  const std::size_t c = own.mu.dim(1);
  const std::size_t k = prototypes.dim(0) + 1;
  StyleStats v{Tensor(Shape{n, k, c}), Tensor(Shape{n, k, c})};
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      const StyleStats& src = j == 0 ? own : proto;
      const std::size_t row = j == 0 ? i : j - 1;
      for (std::size_t ch = 0; ch < c; ++ch) {
        v.mu[(i * k + j) * c + ch] = src.mu[row * c + ch];
        v.sigma[(i * k + j) * c + ch] = src.sigma[row * c + ch];
      }
    }
  }
  return v;
}

std::vector<AttackOutcome> attack_augmentation(const Tensor& images, std::span<const int> labels,
                                               const AttackModels& models, const AttackConfig& cfg,
                                               const AttackObserver& observer) {
  const Problem p = make_problem(images, labels, models, cfg);
  if (p.n == 0) return {};
  if (models.encoder == nullptr) throw UsageError("feature-space attack needs the encoder");
  const std::size_t c = models.encoder->spec().embedding_shape()[0];
  const double eps = cfg.resolved_epsilon();

  FeatureSearch search;
  search.vars = {Tensor(Shape{p.n, c}), Tensor(Shape{p.n, c})};
  search.clip_dims = {static_cast<std::int64_t>(2 * c), static_cast<std::int64_t>(2 * c)};
  search.transform = [](Tape&, Var b, std::span<const Var> v) {
    return augment_transform(b, v[0], v[1]);
  };
  search.project = [eps](std::vector<Tensor>& v) {
    for (auto& t : v) {
      for (double& x : t.values()) x = std::clamp(x, -eps, eps);
    }
  };
  if (observer) {
    search.notify = [&](std::size_t step, const std::vector<Tensor>& v) {
      AttackStep s;
      s.step = step;
      s.mode = AttackMode::augmentation;
      s.epsilon = eps;
      s.tau_mu = &v[0];
      s.tau_sigma = &v[1];
      observer(s);
    };
  }
  return run_feature_search(p, search);
}

std::vector<AttackOutcome> attack_interpolation(const Tensor& images, std::span<const int> labels,
                                                const Tensor& prototypes,
                                                const AttackModels& models,
                                                const AttackConfig& cfg,
                                                const AttackObserver& observer) {
  const Problem p = make_problem(images, labels, models, cfg);
  if (prototypes.rank() != 4 || prototypes.dim(0) == 0) {
    throw UsageError("interpolation attack needs at least one prototype image");
  }
  if (p.n == 0) return {};
  if (models.encoder == nullptr) throw UsageError("feature-space attack needs the encoder");

  const StyleStats vertices = interpolation_vertices(images, prototypes, *models.encoder);
  const std::size_t k = prototypes.dim(0) + 1;

  FeatureSearch search;
  search.vars = {Tensor(Shape{p.n, k}, 1.0 / static_cast<double>(k)),
                 Tensor(Shape{p.n, k}, 1.0 / static_cast<double>(k))};
  search.clip_dims = {static_cast<std::int64_t>(k), static_cast<std::int64_t>(k)};
  search.transform = [&](Tape& tape, Var b, std::span<const Var> v) {
    ChannelStats target = interpolate_style(tape.constant(vertices.mu),
                                            tape.constant(vertices.sigma), v[0], v[1]);
    return adain(b, target);
  };
  search.project = [](std::vector<Tensor>& v) {
    for (auto& t : v) project_simplex_rows(t);
  };
  if (observer) {
    search.notify = [&](std::size_t step, const std::vector<Tensor>& v) {
      AttackStep s;
      s.step = step;
      s.mode = AttackMode::interpolation;
      s.gamma_mu = &v[0];
      s.gamma_sigma = &v[1];
      observer(s);
    };
  }
  return run_feature_search(p, search);
}

std::vector<AttackOutcome> attack_pgd(const Tensor& images, std::span<const int> labels,
                                      const AttackModels& models, const AttackConfig& cfg,
                                      const AttackObserver& observer) {
  const Problem p = make_problem(images, labels, models, cfg);
  if (p.n == 0) return {};
  const Classifier& model = *models.classifier;
  const double eps = cfg.resolved_epsilon();
  const double alpha = cfg.resolved_pgd_step();
  const std::size_t per = images.size() / p.n;

  Tensor x = images;
  std::vector<Track> tracks(p.n);
  for (std::size_t step = 0;; ++step) {
    const bool last = step == cfg.steps;
    Tape tape;
    Var xv = tape.leaf(x, !last);
    Var logits = model.logits(tape, xv);
    Var adv = adversarial_loss(logits, p.labels, cfg.targeted, p.targets);
    const std::vector<int> predicted = argmax_rows(logits.value());
    for (std::size_t i = 0; i < p.n; ++i) {
      observe(tracks[i], step, is_success(p, i, predicted[i]), adv.value()[i], 0.0, predicted[i],
              x.data() + i * per, per, Keep::latest);
    }
    if (last) break;

    tape.backward(ops::sum(adv));
    const Tensor g = tape.grad(xv);
    for (std::size_t j = 0; j < x.size(); ++j) {
      const double s = g[j] > 0.0 ? 1.0 : (g[j] < 0.0 ? -1.0 : 0.0);
      const double moved = clamp_to_ball(x[j] - alpha * s, images[j], eps);
      x[j] = std::clamp(moved, 0.0, 1.0);
    }
    if (observer) {
      AttackStep s;
      s.step = step + 1;
      s.mode = AttackMode::pgd;
      s.epsilon = eps;
      s.images = &x;
      s.origin = &images;
      observer(s);
    }
  }
  return finish(p, tracks);
}

std::vector<AttackOutcome> run_attack(const Tensor& images, std::span<const int> labels,
                                      const AttackModels& models, const AttackConfig& cfg,
                                      const Tensor* prototypes, const AttackObserver& observer) {
  cfg.validate();
  if (images.rank() != 4 || images.dim(0) != labels.size()) {
    throw ConfigError("attack: images " + shape_string(images.shape()) + " do not match " +
                      std::to_string(labels.size()) + " labels");
  }
  if (cfg.mode == AttackMode::interpolation && prototypes == nullptr) {
    throw UsageError("interpolation attack needs prototype images");
  }
  std::vector<AttackOutcome> out;
  out.reserve(labels.size());
  for (std::size_t begin = 0; begin < labels.size(); begin += cfg.batch) {
    const std::size_t end = std::min(labels.size(), begin + cfg.batch);
    const Tensor chunk = slice_rows(images, begin, end);
    const std::span<const int> chunk_labels = labels.subspan(begin, end - begin);
    std::vector<AttackOutcome> part;
    switch (cfg.mode) {
      case AttackMode::augmentation:
        part = attack_augmentation(chunk, chunk_labels, models, cfg, observer);
        break;
      case AttackMode::interpolation:
        part = attack_interpolation(chunk, chunk_labels, *prototypes, models, cfg, observer);
        break;
      case AttackMode::pgd:
        part = attack_pgd(chunk, chunk_labels, models, cfg, observer);
        break;
    }
    for (auto& o : part) out.push_back(std::move(o));
  }
  return out;
}

Tensor choose_prototypes(const Dataset& data, std::size_t k, std::uint64_t seed) {
  if (k > data.size()) {
    throw ConfigError("cannot draw " + std::to_string(k) + " prototypes from " +
                      std::to_string(data.size()) + " images");
  }
  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(derive_seed(seed, 0x70726f74));
  rng.shuffle(order);
  order.resize(k);
  return data.batch(order);
}

}  // namespace fsat
