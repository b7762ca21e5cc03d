#include <algorithm>
#include <cmath>
#include <iostream>
#include <map>
#include <numeric>
#include <random>

#include "simcond/errors.hpp"
#include "simcond/identity_embedder.hpp"

namespace simcond {

namespace detail {

LabelledImages load_labelled(const DatasetManifest& manifest, int resolution) {
  LabelledImages out;
  out.class_subjects = manifest.subjects();
  std::map<std::int64_t, int64_t> index;
  for (std::size_t i = 0; i < out.class_subjects.size(); ++i) index[out.class_subjects[i]] = static_cast<int64_t>(i);
  std::vector<int64_t> labels;
  labels.reserve(manifest.records.size());
  for (const auto& r : manifest.records) labels.push_back(index.at(r.subject_id));
  out.images = load_batch(manifest.resolved_paths(), resolution);
  out.labels = torch::tensor(labels, torch::kInt64);
  return out;
}

EncoderTrainResult train_margin_classifier(const LabelledImages& data, const EncoderConfig& config,
                                           const ClassifierTrainSpec& spec) {
  const int64_t n = data.images.size(0);
  const int64_t classes = static_cast<int64_t>(data.class_subjects.size());
  if (n == 0 || classes < 2) throw ValidationError("need at least two classes to train a classifier");
  if (spec.batch_size < 1 || spec.epochs < 1) throw ValidationError("epochs and batch size must be >= 1");

  auto init = EncoderCheckpoint::initialise(config, spec.seed);
  auto encoder = init.trainable_clone();
  auto net = encoder.net();
  auto weights = torch::randn({classes, config.dim}, torch::TensorOptions().dtype(torch::kFloat32)) * 0.01;
  weights.set_requires_grad(true);

  std::vector<torch::Tensor> params = net->parameters();
  params.push_back(weights);
  torch::optim::SGD opt(params, torch::optim::SGDOptions(spec.learning_rate(1))
                                    .momentum(spec.momentum)
                                    .weight_decay(spec.weight_decay));

  EncoderTrainResult result;
  std::mt19937_64 rng(spec.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<int64_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::uint64_t batch_counter = 0;

  for (int epoch = 1; epoch <= spec.epochs; ++epoch) {
    const double lr = spec.learning_rate(epoch);
    for (auto& group : opt.param_groups()) static_cast<torch::optim::SGDOptions&>(group.options()).lr(lr);
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    int64_t correct = 0, seen = 0, batches = 0;
    for (int64_t start = 0; start < n; start += spec.batch_size) {
      const int64_t end = std::min<int64_t>(start + spec.batch_size, n);
      auto idx = torch::tensor(std::vector<int64_t>(order.begin() + start, order.begin() + end), torch::kInt64);
      auto x = data.images.index_select(0, idx);
      auto y = data.labels.index_select(0, idx);
      if (spec.augment) x = spec.augment(x, spec.seed * 1000003ULL + batch_counter);
      ++batch_counter;
      auto feats = net->forward(x);
      auto loss = cosface_loss_batch(feats, weights, y, spec.margin, spec.scale);
      opt.zero_grad();
      loss.backward();
      opt.step();
      const double l = loss.item<double>();
      if (!std::isfinite(l)) throw NumericError("classifier loss diverged at epoch " + std::to_string(epoch));
      result.batch_losses.push_back(l);
      loss_sum += l;
      ++batches;
      {
        torch::NoGradGuard ng;
        auto pred = cosface_logits(feats, weights, y, 0.0, 1.0).argmax(1);
        correct += pred.eq(y).sum().item<int64_t>();
        seen += end - start;
      }
    }
    if (!torch::isfinite(weights).all().item<bool>()) {
      throw NumericError("classifier head weights became non-finite at epoch " + std::to_string(epoch));
    }
    EpochMetrics m{epoch, loss_sum / static_cast<double>(batches), lr,
                   static_cast<double>(correct) / static_cast<double>(seen)};
    if (spec.verbose) {
      std::cerr << "epoch " << m.epoch << " loss " << m.loss << " lr " << m.learning_rate << " acc "
                << m.train_accuracy << '\n';
    }
    result.epochs.push_back(m);
  }

  encoder.freeze();
  result.encoder = EncoderCheckpoint(config, net, {{"seed", std::to_string(spec.seed)}});
  result.head.weights = weights.detach().clone();
  result.head.margin = spec.margin;
  result.head.scale = spec.scale;
  result.head.class_subjects = data.class_subjects;
  result.train_accuracy = classification_accuracy(result.encoder, result.head, data.images, data.labels);
  return result;
}

}  // namespace detail

double classification_accuracy(const EncoderCheckpoint& encoder, const ClassifierHead& head,
                               const torch::Tensor& images, const torch::Tensor& labels) {
  if (images.size(0) == 0) return 0.0;
  torch::NoGradGuard no_grad;
  auto emb = encoder.embed_all(images);
  auto w = torch::nn::functional::normalize(head.weights.to(emb.scalar_type()),
                                            torch::nn::functional::NormalizeFuncOptions().dim(1));
  auto pred = emb.matmul(w.t()).argmax(1);
  return pred.eq(labels).to(torch::kFloat64).mean().item<double>();
}

EncoderTrainResult train_encoder(const DatasetManifest& corpus, const EncoderConfig& config,
                                 const EncoderTrainConfig& train_config) {
  config.validate();
  if (corpus.records.empty()) throw ValidationError("training corpus is empty");
  const auto counts = corpus.counts_by_subject();
  if (counts.size() < 2) throw ValidationError("training corpus needs at least 2 identities");
  for (const auto& [subject, count] : counts) {
    if (count < 2) throw ValidationError("identity " + std::to_string(subject) + " has fewer than 2 images");
  }
  auto data = detail::load_labelled(corpus, config.resolution);

  detail::ClassifierTrainSpec spec;
  spec.epochs = train_config.epochs;
  spec.batch_size = train_config.batch_size;
  spec.momentum = train_config.momentum;
  spec.weight_decay = train_config.weight_decay;
  spec.margin = train_config.margin;
  spec.scale = train_config.scale;
  spec.seed = train_config.seed;
  spec.verbose = train_config.verbose;
  spec.learning_rate = [cfg = train_config](int epoch) {
    double lr = cfg.learning_rate;
    for (int d : cfg.decay_epochs) {
      if (epoch >= d) lr *= cfg.decay_factor;
    }
    return lr;
  };
  return detail::train_margin_classifier(data, config, spec);
}

}  // namespace simcond
