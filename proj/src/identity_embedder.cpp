#include "simcond/identity_embedder.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "simcond/digest.hpp"
#include "simcond/errors.hpp"

namespace simcond {

namespace F = torch::nn::functional;

// ---------------------------------------------------------------------------
// IdentityEmbedding

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

void require_finite(std::span<const double> v) {
  for (double x : v) {
    if (!std::isfinite(x)) throw ValidationError("embedding contains non-finite entries");
  }
}

}  // namespace

IdentityEmbedding IdentityEmbedding::normalized(std::vector<double> raw) {
  require_finite(raw);
  const double norm = std::sqrt(dot(raw, raw));
  if (!(norm > 0.0)) throw DegenerateCenterError("cannot normalize a zero-norm vector");
  for (double& x : raw) x /= norm;
  return IdentityEmbedding(std::move(raw));
}

IdentityEmbedding IdentityEmbedding::from_unit(std::vector<double> values, double tol) {
  require_finite(values);
  const double norm = std::sqrt(dot(values, values));
  if (std::abs(norm - 1.0) > tol) {
    throw ValidationError("embedding norm " + std::to_string(norm) + " is not unit within " + std::to_string(tol));
  }
  return IdentityEmbedding(std::move(values));
}

IdentityEmbedding IdentityEmbedding::from_tensor(const torch::Tensor& t) {
  auto flat = t.detach().to(torch::kFloat64).contiguous().view({-1});
  const double* p = flat.data_ptr<double>();
  return normalized(std::vector<double>(p, p + flat.numel()));
}

torch::Tensor IdentityEmbedding::to_tensor(torch::Dtype dtype) const {
  return torch::tensor(std::vector<double>(values_.begin(), values_.end()), torch::kFloat64).to(dtype);
}

double cosine_similarity(const IdentityEmbedding& a, const IdentityEmbedding& b) {
  if (a.dim() != b.dim()) {
    throw DimensionError("embedding dims differ: " + std::to_string(a.dim()) + " vs " + std::to_string(b.dim()));
  }
  const double aa = dot(a.values(), a.values());
  const double bb = dot(b.values(), b.values());
  if (std::abs(std::sqrt(aa) - 1.0) > 1e-4 || std::abs(std::sqrt(bb) - 1.0) > 1e-4) {
    throw ValidationError("cosine_similarity requires unit-norm inputs");
  }
  // sqrt(fl(x*x)) == x in IEEE arithmetic, so a vector against itself gives
  // exactly 1 without special-casing.
  const double s = dot(a.values(), b.values()) / std::sqrt(aa * bb);
  return std::clamp(s, -1.0, 1.0);
}

// ---------------------------------------------------------------------------
// Encoder

std::string EncoderConfig::arch_tag() const {
  std::ostringstream s;
  s << "convtrunk-w";
  for (std::size_t i = 0; i < widths.size(); ++i) s << (i ? "x" : "") << widths[i];
  s << "-g" << groups << "-d" << dim;
  return s.str();
}

void EncoderConfig::validate() const {
  if (dim < 1) throw ValidationError("encoder dim must be >= 1");
  if (channels < 1) throw ValidationError("encoder channels must be >= 1");
  if (widths.empty()) throw ValidationError("encoder needs at least a stem width");
  const int downsample = 1 << (widths.size() - 1);
  if (resolution < downsample || resolution % downsample != 0) {
    throw ValidationError("encoder resolution " + std::to_string(resolution) + " not divisible by " +
                          std::to_string(downsample));
  }
  for (int w : widths) {
    if (w < 1 || w % std::min(groups, w) != 0) throw ValidationError("encoder width incompatible with group count");
  }
}

namespace {
torch::nn::GroupNorm make_norm(int groups, int channels) {
  return torch::nn::GroupNorm(torch::nn::GroupNormOptions(std::min(groups, channels), channels));
}
}  // namespace

ConvEncoderImpl::ConvEncoderImpl(const EncoderConfig& config) {
  config.validate();
  using torch::nn::Conv2dOptions;
  stem_ = register_module("stem", torch::nn::Conv2d(Conv2dOptions(config.channels, config.widths[0], 3).padding(1)));
  stem_norm_ = register_module("stem_norm", make_norm(config.groups, config.widths[0]));
  int spatial = config.resolution;
  for (std::size_t i = 1; i < config.widths.size(); ++i) {
    const int in = config.widths[i - 1], out = config.widths[i];
    Block b;
    const std::string p = "block" + std::to_string(i);
    b.conv1 = register_module(p + "_conv1", torch::nn::Conv2d(Conv2dOptions(in, out, 3).stride(2).padding(1)));
    b.norm1 = register_module(p + "_norm1", make_norm(config.groups, out));
    b.conv2 = register_module(p + "_conv2", torch::nn::Conv2d(Conv2dOptions(out, out, 3).padding(1)));
    b.norm2 = register_module(p + "_norm2", make_norm(config.groups, out));
    b.shortcut = register_module(p + "_skip", torch::nn::Conv2d(Conv2dOptions(in, out, 1).stride(2)));
    blocks_.push_back(b);
    spatial /= 2;
  }
  project_ = register_module("project", torch::nn::Linear(config.widths.back() * spatial * spatial, config.dim));
}

torch::Tensor ConvEncoderImpl::forward(const torch::Tensor& images) {
  auto h = F::silu(stem_norm_->forward(stem_->forward(images)));
  for (auto& b : blocks_) {
    auto r = F::silu(b.norm1->forward(b.conv1->forward(h)));
    r = b.norm2->forward(b.conv2->forward(r));
    h = F::silu(r + b.shortcut->forward(h));
  }
  return project_->forward(h.flatten(1));
}

EncoderCheckpoint::EncoderCheckpoint(EncoderConfig config, ConvEncoder net, HeaderFields provenance)
    : config_(std::move(config)), net_(std::move(net)), provenance_(std::move(provenance)) {
  freeze();
}

EncoderCheckpoint EncoderCheckpoint::initialise(const EncoderConfig& config, std::uint64_t seed, torch::Dtype dtype) {
  torch::manual_seed(seed);
  ConvEncoder net(config);
  net->to(dtype);
  return EncoderCheckpoint(config, net);
}

torch::Dtype EncoderCheckpoint::dtype() const {
  return net_->parameters().front().scalar_type();
}

void EncoderCheckpoint::freeze() {
  if (!net_) return;
  for (auto& p : net_->parameters()) p.set_requires_grad(false);
  net_->eval();
}

torch::Tensor EncoderCheckpoint::embed_batch(const torch::Tensor& images) const {
  if (!net_) throw ValidationError("encoder checkpoint is empty");
  if (images.dim() != 4 || images.size(1) != config_.channels || images.size(2) != config_.resolution ||
      images.size(3) != config_.resolution) {
    throw DimensionError("encoder expects (N, " + std::to_string(config_.channels) + ", " +
                         std::to_string(config_.resolution) + ", " + std::to_string(config_.resolution) + ")");
  }
  ConvEncoder net = net_;
  auto feats = net->forward(images.to(dtype()));
  return F::normalize(feats, F::NormalizeFuncOptions().dim(1).eps(1e-12));
}

torch::Tensor EncoderCheckpoint::embed_all(const torch::Tensor& images, int chunk) const {
  torch::NoGradGuard no_grad;
  std::vector<torch::Tensor> parts;
  for (int64_t i = 0; i < images.size(0); i += chunk) {
    parts.push_back(embed_batch(images.slice(0, i, std::min<int64_t>(i + chunk, images.size(0)))));
  }
  if (parts.empty()) return torch::empty({0, config_.dim}, torch::TensorOptions().dtype(dtype()));
  return torch::cat(parts, 0);
}

void EncoderCheckpoint::save(const std::filesystem::path& blob) const {
  save_module_state(*net_, blob);
  HeaderFields h = provenance_;
  h["kind"] = "encoder";
  h["format_version"] = "1";
  h["dim"] = std::to_string(config_.dim);
  h["resolution"] = std::to_string(config_.resolution);
  h["channels"] = std::to_string(config_.channels);
  h["groups"] = std::to_string(config_.groups);
  std::string widths;
  for (std::size_t i = 0; i < config_.widths.size(); ++i) widths += (i ? "," : "") + std::to_string(config_.widths[i]);
  h["widths"] = widths;
  h["arch"] = config_.arch_tag();
  h["dtype"] = dtype() == torch::kFloat64 ? "float64" : "float32";
  h["tool_version"] = std::string(kToolVersion);
  write_header(header_path_for(blob), h);
}

EncoderCheckpoint EncoderCheckpoint::load(const std::filesystem::path& blob) {
  auto h = read_header(header_path_for(blob));
  if (require_field(h, "kind") != "encoder") throw IoError(blob.string() + " is not an encoder checkpoint");
  if (require_field(h, "format_version") != "1") throw IoError("unsupported encoder format version");
  EncoderConfig c;
  c.dim = std::stoi(require_field(h, "dim"));
  c.resolution = std::stoi(require_field(h, "resolution"));
  c.channels = std::stoi(require_field(h, "channels"));
  c.groups = std::stoi(require_field(h, "groups"));
  c.widths.clear();
  std::stringstream ws(require_field(h, "widths"));
  for (std::string tok; std::getline(ws, tok, ',');) c.widths.push_back(std::stoi(tok));
  if (require_field(h, "arch") != c.arch_tag()) throw IoError("encoder architecture tag mismatch");
  ConvEncoder net(c);
  if (require_field(h, "dtype") == "float64") net->to(torch::kFloat64);
  load_module_state(*net, blob);
  HeaderFields provenance;
  for (const auto& key : {"config_digest", "seed"}) {
    if (auto it = h.find(key); it != h.end()) provenance[key] = it->second;
  }
  return EncoderCheckpoint(c, net, provenance);
}

EncoderCheckpoint EncoderCheckpoint::trainable_clone() const {
  ConvEncoder net(config_);
  net->to(dtype());
  {
    torch::NoGradGuard no_grad;
    auto src = net_->named_parameters();
    for (auto& p : net->named_parameters()) p.value().copy_(src[p.key()]);
    auto src_buf = net_->named_buffers();
    for (auto& b : net->named_buffers()) b.value().copy_(src_buf[b.key()]);
  }
  EncoderCheckpoint out;
  out.config_ = config_;
  out.net_ = net;
  out.provenance_ = provenance_;
  for (auto& p : out.net_->parameters()) p.set_requires_grad(true);
  out.net_->train();
  return out;
}

IdentityEmbedding embed(const Image& image, const EncoderCheckpoint& encoder) {
  const auto& c = encoder.config();
  const ImageShape expected{c.channels, c.resolution, c.resolution};
  validate_image(image, &expected);
  torch::NoGradGuard no_grad;
  return IdentityEmbedding::from_tensor(encoder.embed_batch(image.unsqueeze(0))[0]);
}

// ---------------------------------------------------------------------------
// Classifier head and CosFace

std::size_t ClassifierHead::class_of(std::int64_t subject_id) const {
  for (std::size_t i = 0; i < class_subjects.size(); ++i) {
    if (class_subjects[i] == subject_id) return i;
  }
  throw MappingError("subject " + std::to_string(subject_id) + " has no class in the head");
}

void ClassifierHead::validate() const {
  if (!weights.defined() || weights.dim() != 2) throw DimensionError("head weights must be (classes, dim)");
  if (!(margin >= 0.0 && margin < 1.0)) throw ValidationError("CosFace margin must lie in [0, 1)");
  if (!(scale > 0.0)) throw ValidationError("CosFace scale must be > 0");
  if (!class_subjects.empty() && class_subjects.size() != num_classes()) {
    throw DimensionError("class_subjects length does not match weight rows");
  }
}

void ClassifierHead::save(const std::filesystem::path& blob, const HeaderFields& extra) const {
  validate();
  std::vector<std::pair<std::string, torch::Tensor>> t;
  t.emplace_back("weights", weights.detach());
  t.emplace_back("margin", torch::tensor({margin}, torch::kFloat64));
  t.emplace_back("scale", torch::tensor({scale}, torch::kFloat64));
  t.emplace_back("class_subjects", torch::tensor(std::vector<int64_t>(class_subjects.begin(), class_subjects.end()),
                                                 torch::kInt64));
  save_tensors(t, blob);
  HeaderFields h = extra;
  h["kind"] = "classifier_head";
  h["format_version"] = "1";
  h["classes"] = std::to_string(num_classes());
  h["dim"] = std::to_string(weights.size(1));
  h["tool_version"] = std::string(kToolVersion);
  write_header(header_path_for(blob), h);
}

ClassifierHead ClassifierHead::load(const std::filesystem::path& blob) {
  auto h = read_header(header_path_for(blob));
  if (require_field(h, "kind") != "classifier_head") throw IoError(blob.string() + " is not a classifier head");
  ClassifierHead head;
  for (auto& [name, t] : load_tensors(blob)) {
    if (name == "weights") head.weights = t;
    else if (name == "margin") head.margin = t.item<double>();
    else if (name == "scale") head.scale = t.item<double>();
    else if (name == "class_subjects") {
      const auto* p = t.data_ptr<int64_t>();
      head.class_subjects.assign(p, p + t.numel());
    }
  }
  head.validate();
  return head;
}

torch::Tensor cosface_logits(const torch::Tensor& features, const torch::Tensor& weights,
                             const torch::Tensor& labels, double margin, double scale) {
  auto f = F::normalize(features, F::NormalizeFuncOptions().dim(1).eps(1e-12));
  auto w = F::normalize(weights, F::NormalizeFuncOptions().dim(1).eps(1e-12));
  auto cos = f.matmul(w.t());
  auto onehot = F::one_hot(labels, weights.size(0)).to(cos.scalar_type());
  return scale * (cos - margin * onehot);
}

torch::Tensor cosface_loss_batch(const torch::Tensor& features, const torch::Tensor& weights,
                                 const torch::Tensor& labels, double margin, double scale) {
  return F::cross_entropy(cosface_logits(features, weights, labels, margin, scale), labels);
}

double cosface_loss(const IdentityEmbedding& embedding, const ClassifierHead& head, std::size_t label) {
  head.validate();
  if (label >= head.num_classes()) {
    throw IndexError("label " + std::to_string(label) + " out of range for " + std::to_string(head.num_classes()) +
                     " classes");
  }
  if (embedding.dim() != static_cast<std::size_t>(head.weights.size(1))) {
    throw DimensionError("embedding dim does not match head");
  }
  torch::NoGradGuard no_grad;
  auto f = embedding.to_tensor(torch::kFloat64).unsqueeze(0);
  auto labels = torch::tensor({static_cast<int64_t>(label)}, torch::kInt64);
  return cosface_loss_batch(f, head.weights.to(torch::kFloat64), labels, head.margin, head.scale).item<double>();
}

std::vector<IdentityEmbedding> identity_centers(const ClassifierHead& head) {
  head.validate();
  auto w = head.weights.detach().to(torch::kFloat64).contiguous();
  std::vector<IdentityEmbedding> centers;
  centers.reserve(head.num_classes());
  const int64_t d = w.size(1);
  for (int64_t i = 0; i < w.size(0); ++i) {
    const double* p = w[i].data_ptr<double>();
    std::vector<double> row(p, p + d);
    double n2 = 0.0;
    for (double x : row) n2 += x * x;
    if (!(n2 > 0.0)) throw DegenerateCenterError("classifier row " + std::to_string(i) + " has zero norm");
    centers.push_back(IdentityEmbedding::normalized(std::move(row)));
  }
  return centers;
}

}  // namespace simcond
