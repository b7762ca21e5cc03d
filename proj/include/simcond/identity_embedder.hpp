#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "simcond/checkpoint_io.hpp"
#include "simcond/image.hpp"
#include "simcond/manifest.hpp"

namespace simcond {

/// Unit-norm identity feature. Construction always validates (or enforces)
/// the norm, so holders can rely on ||v|| = 1 within 1e-6.
class IdentityEmbedding {
 public:
  IdentityEmbedding() = default;

  /// Normalizes `raw`; throws DegenerateCenterError for a zero vector and
  /// ValidationError for non-finite entries.
  static IdentityEmbedding normalized(std::vector<double> raw);
  /// Accepts an already unit-norm vector; throws ValidationError when the norm
  /// is off by more than `tol`.
  static IdentityEmbedding from_unit(std::vector<double> values, double tol = 1e-4);
  static IdentityEmbedding from_tensor(const torch::Tensor& t);

  std::size_t dim() const noexcept { return values_.size(); }
  std::span<const double> values() const noexcept { return values_; }
  double operator[](std::size_t i) const { return values_[i]; }
  torch::Tensor to_tensor(torch::Dtype dtype = torch::kFloat32) const;

 private:
  explicit IdentityEmbedding(std::vector<double> v) : values_(std::move(v)) {}
  std::vector<double> values_;
};

/// Cosine similarity of two unit vectors: symmetric, exactly 1 for a vector
/// with itself, clamped to [-1, 1]. Inputs whose norm deviates from 1 by more
/// than 1e-4 are rejected with ValidationError.
double cosine_similarity(const IdentityEmbedding& a, const IdentityEmbedding& b);

struct EncoderConfig {
  int dim = 128;
  int resolution = 32;
  int channels = 3;
  // Stem width followed by one stride-2 residual block per further entry.
  std::vector<int> widths{16, 32, 64, 96};
  int groups = 4;

  std::string arch_tag() const;
  void validate() const;
};

class ConvEncoderImpl : public torch::nn::Module {
 public:
  explicit ConvEncoderImpl(const EncoderConfig& config);
  /// Raw (un-normalized) features, shape (N, dim).
  torch::Tensor forward(const torch::Tensor& images);

 private:
  struct Block {
    torch::nn::Conv2d conv1{nullptr}, conv2{nullptr}, shortcut{nullptr};
    torch::nn::GroupNorm norm1{nullptr}, norm2{nullptr};
  };
  torch::nn::Conv2d stem_{nullptr};
  torch::nn::GroupNorm stem_norm_{nullptr};
  std::vector<Block> blocks_;
  torch::nn::Linear project_{nullptr};
};
TORCH_MODULE(ConvEncoder);

/// A frozen face-recognition model E_id plus its configuration. Copies share
/// the underlying parameters; nothing here mutates them after construction.
class EncoderCheckpoint {
 public:
  EncoderCheckpoint() = default;
  EncoderCheckpoint(EncoderConfig config, ConvEncoder net, HeaderFields provenance = {});

  /// Freshly initialised encoder; parameters depend only on (config, seed).
  static EncoderCheckpoint initialise(const EncoderConfig& config, std::uint64_t seed,
                                      torch::Dtype dtype = torch::kFloat32);

  const EncoderConfig& config() const noexcept { return config_; }
  const HeaderFields& provenance() const noexcept { return provenance_; }
  HeaderFields& provenance() noexcept { return provenance_; }
  ConvEncoder net() const { return net_; }
  torch::Dtype dtype() const;

  /// Unit-norm embeddings for an (N, C, H, W) batch at the configured
  /// resolution. Differentiable with respect to the input; the parameters
  /// stay frozen.
  torch::Tensor embed_batch(const torch::Tensor& images) const;
  /// Same as embed_batch but without autograd, processed in chunks.
  torch::Tensor embed_all(const torch::Tensor& images, int chunk = 256) const;

  void save(const std::filesystem::path& blob) const;
  static EncoderCheckpoint load(const std::filesystem::path& blob);

  /// Deep copy with trainable parameters, used by the trainers.
  EncoderCheckpoint trainable_clone() const;
  void freeze();

 private:
  EncoderConfig config_;
  ConvEncoder net_{nullptr};
  HeaderFields provenance_;
};

/// E_id(x) for a single (C, H, W) image. Throws DimensionError when the
/// resolution differs from the encoder's and ValidationError on non-finite or
/// out-of-range pixels.
IdentityEmbedding embed(const Image& image, const EncoderCheckpoint& encoder);

/// Linear classification layer whose rows double as identity centers.
struct ClassifierHead {
  torch::Tensor weights;  // (num_classes, dim)
  double margin = 0.4;
  double scale = 64.0;
  // Subject id represented by each row, in row order.
  std::vector<std::int64_t> class_subjects;

  std::size_t num_classes() const { return static_cast<std::size_t>(weights.size(0)); }
  /// Row index for a subject id; throws MappingError when absent.
  std::size_t class_of(std::int64_t subject_id) const;
  void validate() const;

  // `extra` is merged into the header (e.g. config_digest).
  void save(const std::filesystem::path& blob, const HeaderFields& extra = {}) const;
  static ClassifierHead load(const std::filesystem::path& blob);
};

/// CosFace logits s * (cos(theta_j) - margin * [j == label]) for a batch of
/// features (normalized internally) against the normalized head rows.
torch::Tensor cosface_logits(const torch::Tensor& features, const torch::Tensor& weights,
                             const torch::Tensor& labels, double margin, double scale);
/// Mean cross-entropy of cosface_logits. Differentiable in features and weights.
torch::Tensor cosface_loss_batch(const torch::Tensor& features, const torch::Tensor& weights,
                                 const torch::Tensor& labels, double margin, double scale);

/// Scalar CosFace loss for one embedding. Throws IndexError when `label` is
/// not a valid row.
double cosface_loss(const IdentityEmbedding& embedding, const ClassifierHead& head, std::size_t label);

/// Normalized weight rows in class order. A zero row raises
/// DegenerateCenterError.
std::vector<IdentityEmbedding> identity_centers(const ClassifierHead& head);

struct EncoderTrainConfig {
  int epochs = 12;
  int batch_size = 64;
  double learning_rate = 0.1;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  double margin = 0.4;
  double scale = 64.0;
  // Epochs (1-based) at which the learning rate is multiplied by decay_factor.
  std::vector<int> decay_epochs{8, 11};
  double decay_factor = 0.1;
  std::uint64_t seed = 0;
  bool verbose = false;
};

struct EpochMetrics {
  int epoch = 0;
  double loss = 0.0;
  double learning_rate = 0.0;
  double train_accuracy = 0.0;  // running accuracy over the epoch's batches
};

struct EncoderTrainResult {
  EncoderCheckpoint encoder;
  ClassifierHead head;
  std::vector<EpochMetrics> epochs;
  std::vector<double> batch_losses;
  double train_accuracy = 0.0;  // clean pass over the corpus after training
};

/// Trains the small convolutional trunk with a CosFace head on a labelled
/// corpus. Requires >= 2 subjects with >= 2 images each (ValidationError).
EncoderTrainResult train_encoder(const DatasetManifest& corpus, const EncoderConfig& config,
                                 const EncoderTrainConfig& train_config);

/// Argmax-over-centers accuracy of `encoder`/`head` on labelled images.
double classification_accuracy(const EncoderCheckpoint& encoder, const ClassifierHead& head,
                               const torch::Tensor& images, const torch::Tensor& labels);

namespace detail {

// Shared margin-classifier loop behind train_encoder and train_fr.
struct ClassifierTrainSpec {
  int epochs = 1;
  int batch_size = 64;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  double margin = 0.4;
  double scale = 64.0;
  std::uint64_t seed = 0;
  bool verbose = false;
  std::function<double(int epoch)> learning_rate;  // 1-based epoch
  // Optional per-batch image transform; receives a generator seeded per batch.
  std::function<torch::Tensor(const torch::Tensor&, std::uint64_t batch_seed)> augment;
};

struct LabelledImages {
  torch::Tensor images;  // (N, C, H, W)
  torch::Tensor labels;  // (N,) int64 class indices
  std::vector<std::int64_t> class_subjects;
};

LabelledImages load_labelled(const DatasetManifest& manifest, int resolution);

EncoderTrainResult train_margin_classifier(const LabelledImages& data, const EncoderConfig& config,
                                           const ClassifierTrainSpec& spec);

}  // namespace detail

}  // namespace simcond
