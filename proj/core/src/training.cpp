#include "fsat/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "fsat/optim.hpp"
#include "fsat/strings.hpp"
#include "fsat/style.hpp"

namespace fsat {

namespace {

std::vector<std::size_t> iota(std::size_t n) {
  std::vector<std::size_t> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = i;
  return v;
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch) {
  std::vector<std::size_t> order = iota(n);
  Rng rng(derive_seed(seed, epoch));
  rng.shuffle(order);
  return order;
}

struct StepResult {
  double loss = 0.0;
  std::size_t correct = 0;
};

// One Adam step on mean cross-entropy.
StepResult classifier_step(Classifier& model, Adam& adam, const Tensor& images,
                           std::span<const int> labels) {
  Tape tape;
  const ParamBinding binding = model.bind(tape, true);
  Var logits = model.logits(tape, tape.constant(images), binding);
  Var loss = ops::mean(ops::softmax_cross_entropy(logits, labels));
  StepResult r;
  r.loss = loss.value().item();
  const std::vector<int> pred = argmax_rows(logits.value());
  for (std::size_t i = 0; i < labels.size(); ++i) r.correct += pred[i] == labels[i] ? 1 : 0;
  tape.backward(loss);
  const std::vector<Tensor> grads = Network::gradients(tape, binding);
  const std::vector<Tensor*> params = model.parameter_tensors();
  adam.step(params, grads);
  return r;
}

[[noreturn]] void diverged(const std::string& what, std::size_t epoch, std::size_t batch,
                           const NumericalError& e) {
  throw NumericalError(what + " diverged at epoch " + std::to_string(epoch) + ", batch " +
                       std::to_string(batch) + ": " + e.what());
}

void check_dataset(const Dataset& data, const std::string& what) {
  if (data.size() == 0) throw ConfigError(what + ": empty dataset");
  if (data.images.rank() != 4 || data.images.dim(0) != data.size()) {
    throw ConfigError(what + ": images do not match labels");
  }
}

}  // namespace

void ClassifierTrainConfig::validate() const {
  if (batch == 0) throw ConfigError("train.batch must be positive");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("train.lr must be positive");
}

std::vector<ClassifierEpoch> train_classifier(Classifier& model, const Dataset& train,
                                              const Dataset* test,
                                              const ClassifierTrainConfig& cfg,
                                              const EpochLog& log) {
  cfg.validate();
  check_dataset(train, "train_classifier");
  Adam adam(AdamOptions{.lr = cfg.lr});
  std::vector<ClassifierEpoch> history;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const std::vector<std::size_t> order = epoch_order(train.size(), cfg.seed, epoch);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    std::size_t batch_no = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch, ++batch_no) {
      const std::size_t end = std::min(order.size(), begin + cfg.batch);
      const std::span<const std::size_t> idx(order.data() + begin, end - begin);
      const std::vector<int> labels = train.batch_labels(idx);
      try {
        const StepResult r = classifier_step(model, adam, train.batch(idx), labels);
        loss_sum += r.loss * static_cast<double>(idx.size());
        correct += r.correct;
      } catch (const NumericalError& e) {
        diverged("classifier training", epoch, batch_no, e);
      }
    }
    ClassifierEpoch rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(train.size());
    rec.train_accuracy = static_cast<double>(correct) / static_cast<double>(train.size());
    if (test != nullptr && test->size() > 0) {
      rec.test_accuracy = accuracy(model.predict(test->images), test->labels);
    }
    if (log) {
      log("epoch " + std::to_string(epoch) + " loss " + format_double(rec.train_loss) +
          " train_acc " + format_double(rec.train_accuracy) +
          (rec.test_accuracy ? " test_acc " + format_double(*rec.test_accuracy) : ""));
    }
    history.push_back(rec);
  }
  return history;
}

SameClassPairSampler::SameClassPairSampler(const Dataset& data, std::uint64_t seed)
    : data_(data), seed_(seed), by_class_(data.class_index()), rng_(derive_seed(seed, 0)) {
  if (data.size() == 0) throw ConfigError("pair sampler: empty dataset");
  start_epoch(0);
}

void SameClassPairSampler::start_epoch(std::size_t epoch) {
  order_ = epoch_order(data_.size(), seed_, 2 * epoch + 1);
  rng_ = Rng(derive_seed(seed_, 2 * epoch + 2));
  cursor_ = 0;
}

std::vector<std::pair<std::size_t, std::size_t>> SameClassPairSampler::next(std::size_t count) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  while (out.size() < count && cursor_ < order_.size()) {
    const std::size_t p = order_[cursor_++];
    const auto& peers = by_class_[static_cast<std::size_t>(data_.labels[p])];
    out.emplace_back(p, peers[rng_.below(peers.size())]);
  }
  return out;
}

void DecoderTrainConfig::validate() const {
  if (batch == 0) throw ConfigError("decoder.batch must be positive");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("decoder.lr must be positive");
}

DecoderLoss decoder_loss(Tape& tape, const Encoder& encoder, const Decoder& decoder,
                         const ParamBinding& binding, const Tensor& content_images,
                         const Tensor& style_images) {
  if (content_images.shape() != style_images.shape()) {
    throw ConfigError("decoder_loss: content and style batches differ in shape");
  }
  EncoderOutput p = encoder.forward(tape, tape.constant(content_images));
  EncoderOutput q = encoder.forward(tape, tape.constant(style_images));
  Var combined = adain(p.embedding, channel_stats(q.embedding));
  Var reconstructed = decoder.forward(tape, combined, binding);
  EncoderOutput r = encoder.forward(tape, reconstructed);
  return {content_loss(r.embedding, combined),
          style_loss(q.style_activations, r.style_activations)};
}

namespace {

struct PairBatch {
  Tensor content;
  Tensor style;
};

PairBatch gather_pairs(const Dataset& data,
                       std::span<const std::pair<std::size_t, std::size_t>> pairs) {
  std::vector<std::size_t> p, q;
  for (const auto& [a, b] : pairs) {
    p.push_back(a);
    q.push_back(b);
  }
  return {data.batch(p), data.batch(q)};
}

double validation_loss(const Decoder& decoder, const Encoder& encoder, const Dataset& data,
                       std::span<const std::pair<std::size_t, std::size_t>> pairs,
                       std::size_t batch) {
  double total = 0.0;
  for (std::size_t begin = 0; begin < pairs.size(); begin += batch) {
    const std::size_t end = std::min(pairs.size(), begin + batch);
    const PairBatch b = gather_pairs(data, pairs.subspan(begin, end - begin));
    Tape tape;
    const DecoderLoss l =
        decoder_loss(tape, encoder, decoder, decoder.bind(tape, false), b.content, b.style);
    for (std::size_t i = 0; i < end - begin; ++i) {
      total += l.content.value()[i] + l.style.value()[i];
    }
  }
  return total / static_cast<double>(pairs.size());
}

}  // namespace

std::vector<DecoderEpoch> train_decoder(Decoder& decoder, const Encoder& encoder,
                                        const Dataset& train, const Dataset* validation,
                                        const DecoderTrainConfig& cfg, const EpochLog& log) {
  cfg.validate();
  check_dataset(train, "train_decoder");
  if (decoder.spec().encoder.cut_block != encoder.spec().cut_block ||
      decoder.spec().encoder.widths != encoder.spec().widths) {
    throw ConfigError("decoder was built for a different encoder");
  }

  std::vector<std::pair<std::size_t, std::size_t>> val_pairs;
  if (validation != nullptr && validation->size() > 0 && cfg.validation_pairs > 0) {
    SameClassPairSampler vs(*validation, derive_seed(cfg.seed, 0x76616c));
    while (val_pairs.size() < cfg.validation_pairs) {
      auto more = vs.next(cfg.validation_pairs - val_pairs.size());
      if (more.empty()) break;
      val_pairs.insert(val_pairs.end(), more.begin(), more.end());
    }
  }

  SameClassPairSampler sampler(train, cfg.seed);
  Adam adam(AdamOptions{.lr = cfg.lr});
  std::vector<DecoderEpoch> history;
  double best = std::numeric_limits<double>::infinity();
  std::vector<NamedTensor> best_params;
  std::size_t since_best = 0;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    sampler.start_epoch(epoch);
    double content_sum = 0.0, style_sum = 0.0;
    std::size_t seen = 0, batch_no = 0;
    for (auto pairs = sampler.next(cfg.batch); !pairs.empty();
         pairs = sampler.next(cfg.batch), ++batch_no) {
      const PairBatch b = gather_pairs(train, pairs);
      try {
        Tape tape;
        const ParamBinding binding = decoder.bind(tape, true);
        const DecoderLoss l = decoder_loss(tape, encoder, decoder, binding, b.content, b.style);
        for (std::size_t i = 0; i < pairs.size(); ++i) {
          content_sum += l.content.value()[i];
          style_sum += l.style.value()[i];
        }
        tape.backward(ops::mean(ops::add(l.content, l.style)));
        const std::vector<Tensor> grads = Network::gradients(tape, binding);
        const std::vector<Tensor*> params = decoder.parameter_tensors();
        adam.step(params, grads);
      } catch (const NumericalError& e) {
        diverged("decoder training", epoch, batch_no, e);
      }
      seen += pairs.size();
    }
    DecoderEpoch rec;
    rec.epoch = epoch;
    rec.content_loss = content_sum / static_cast<double>(seen);
    rec.style_loss = style_sum / static_cast<double>(seen);
    if (!val_pairs.empty()) {
      rec.validation_loss = validation_loss(decoder, encoder, *validation, val_pairs, cfg.batch);
    }
    if (log) {
      log("epoch " + std::to_string(epoch) + " content " + format_double(rec.content_loss) +
          " style " + format_double(rec.style_loss) +
          (rec.validation_loss ? " val " + format_double(*rec.validation_loss) : ""));
    }
    history.push_back(rec);

    if (rec.validation_loss) {
      if (*rec.validation_loss < best) {
        best = *rec.validation_loss;
        best_params.assign(decoder.parameters().begin(), decoder.parameters().end());
        since_best = 0;
      } else if (cfg.patience > 0 && ++since_best >= cfg.patience) {
        if (log) log("early stop after epoch " + std::to_string(epoch));
        break;
      }
    }
  }
  if (!best_params.empty()) decoder.load_parameters(best_params);
  return history;
}

void AdvTrainConfig::validate() const {
  if (batch == 0) throw ConfigError("adv.batch must be positive");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("adv.lr must be positive");
  if (!(mix >= 0.0 && mix <= 1.0)) throw ConfigError("adv.mix must lie in [0, 1]");
  if (attack.targeted) throw ConfigError("adversarial training uses untargeted attacks");
  attack.validate();
}

std::vector<AdvEpoch> adversarial_train(Classifier& model, const Dataset& train,
                                        const Dataset* test, const Encoder& encoder,
                                        const Decoder* decoder, const AdvTrainConfig& cfg,
                                        const EpochLog& log) {
  cfg.validate();
  check_dataset(train, "adversarial_train");
  if (cfg.steps > 0 && cfg.attack.mode != AttackMode::pgd && decoder == nullptr) {
    throw UsageError("feature-space adversarial training needs a trained decoder");
  }
  AttackConfig attack = cfg.attack;
  attack.steps = cfg.steps;
  attack.measure_distances = false;
  attack.batch = std::max<std::size_t>(cfg.batch, 1);

  Tensor prototypes;
  if (attack.mode == AttackMode::interpolation) {
    prototypes = choose_prototypes(train, attack.k, cfg.seed);
  }

  Adam adam(AdamOptions{.lr = cfg.lr});
  std::vector<AdvEpoch> history;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const std::vector<std::size_t> order = epoch_order(train.size(), cfg.seed, epoch);
    double loss_sum = 0.0;
    std::size_t correct = 0, adv_total = 0, adv_correct = 0, batch_no = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch, ++batch_no) {
      const std::size_t end = std::min(order.size(), begin + cfg.batch);
      const std::span<const std::size_t> idx(order.data() + begin, end - begin);
      Tensor images = train.batch(idx);
      const std::vector<int> labels = train.batch_labels(idx);

      const auto n_adv = static_cast<std::size_t>(
          std::llround(cfg.mix * static_cast<double>(idx.size())));
      try {
        if (cfg.steps > 0 && n_adv > 0) {
          const Tensor head = slice_rows(images, 0, n_adv);
          const std::span<const int> head_labels(labels.data(), n_adv);
          const AttackModels models{&model, &encoder, decoder};
          attack.seed = derive_seed(cfg.seed, epoch * 100003 + batch_no);
          const std::vector<AttackOutcome> outcomes =
              run_attack(head, head_labels, models, attack, &prototypes);
          const std::size_t per = images.size() / idx.size();
          for (std::size_t i = 0; i < n_adv; ++i) {
            const Tensor& adv = outcomes[i].adversarial_image;
            std::copy(adv.data(), adv.data() + per, images.data() + i * per);
            adv_correct += outcomes[i].success ? 0 : 1;
          }
          adv_total += n_adv;
        }
        const StepResult r = classifier_step(model, adam, images, labels);
        loss_sum += r.loss * static_cast<double>(idx.size());
        correct += r.correct;
      } catch (const NumericalError& e) {
        diverged("adversarial training", epoch, batch_no, e);
      }
    }
    AdvEpoch rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(train.size());
    rec.train_accuracy = static_cast<double>(correct) / static_cast<double>(train.size());
    rec.adversarial_accuracy =
        adv_total == 0 ? rec.train_accuracy
                       : static_cast<double>(adv_correct) / static_cast<double>(adv_total);
    if (test != nullptr && test->size() > 0) {
      rec.test_accuracy = accuracy(model.predict(test->images), test->labels);
    }
    if (log) {
      log("epoch " + std::to_string(epoch) + " loss " + format_double(rec.train_loss) +
          " train_acc " + format_double(rec.train_accuracy) + " adv_acc " +
          format_double(rec.adversarial_accuracy) +
          (rec.test_accuracy ? " test_acc " + format_double(*rec.test_accuracy) : ""));
    }
    history.push_back(rec);
  }
  return history;
}

}  // namespace fsat
