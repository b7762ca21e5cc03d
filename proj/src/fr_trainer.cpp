#include "simcond/fr_trainer.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>

#include "simcond/errors.hpp"

namespace simcond {

namespace F = torch::nn::functional;

AugmentConfig AugmentConfig::identity() {
  AugmentConfig c;
  c.crop_scale_min = c.crop_scale_max = 1.0;
  c.crop_ratio_min = c.crop_ratio_max = 1.0;
  c.flip_probability = 0.0;
  c.brightness = c.contrast = c.saturation = c.hue = 0.0;
  c.erasing_probability = 0.0;
  return c;
}

void AugmentConfig::validate() const {
  auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
  if (!prob(flip_probability) || !prob(erasing_probability)) throw ValidationError("probabilities must lie in [0, 1]");
  if (!(crop_scale_min > 0.0 && crop_scale_min <= crop_scale_max && crop_scale_max <= 1.0)) {
    throw ValidationError("crop scale must satisfy 0 < min <= max <= 1");
  }
  if (!(crop_ratio_min > 0.0 && crop_ratio_min <= crop_ratio_max)) throw ValidationError("invalid crop ratio range");
  if (!(erasing_scale_min > 0.0 && erasing_scale_min <= erasing_scale_max && erasing_scale_max < 1.0)) {
    throw ValidationError("erasing scale must satisfy 0 < min <= max < 1");
  }
  if (!(erasing_ratio_min > 0.0 && erasing_ratio_min <= erasing_ratio_max)) {
    throw ValidationError("invalid erasing ratio range");
  }
  if (brightness < 0 || contrast < 0 || saturation < 0 || hue < 0 || hue > 0.5) {
    throw ValidationError("jitter strengths must be >= 0 (hue <= 0.5)");
  }
}

void FRTrainConfig::validate() const {
  if (!(margin >= 0.0 && margin < 1.0) || !(scale > 0.0)) throw ValidationError("invalid CosFace margin/scale");
  if (epochs < 1 || batch_size < 1) throw ValidationError("epochs and batch size must be >= 1");
  for (std::size_t i = 0; i < decay_epochs.size(); ++i) {
    if (decay_epochs[i] < 1 || decay_epochs[i] >= epochs) throw ValidationError("decay epochs must lie in [1, epochs)");
    if (i > 0 && decay_epochs[i] <= decay_epochs[i - 1]) throw ValidationError("decay epochs must be increasing");
  }
  augment.validate();
  backbone.validate();
}

double fr_learning_rate(const FRTrainConfig& config, int epoch) {
  double lr = config.learning_rate;
  for (int d : config.decay_epochs) {
    if (epoch >= d) lr *= config.decay_factor;
  }
  return lr;
}

namespace {

double uniform(std::mt19937_64& rng, double lo, double hi) {
  if (lo == hi) return lo;
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

int uniform_int(std::mt19937_64& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

torch::Tensor grayscale(const torch::Tensor& rgb01) {
  return (0.299 * rgb01[0] + 0.587 * rgb01[1] + 0.114 * rgb01[2]).unsqueeze(0);
}

torch::Tensor shift_hue(const torch::Tensor& rgb01, double shift) {
  auto r = rgb01[0], g = rgb01[1], b = rgb01[2];
  auto maxc = torch::max(torch::max(r, g), b);
  auto minc = torch::min(torch::min(r, g), b);
  auto delta = maxc - minc;
  auto safe = torch::where(delta > 0, delta, torch::ones_like(delta));
  auto h = torch::where(maxc == r, ((g - b) / safe).remainder(6.0),
                        torch::where(maxc == g, (b - r) / safe + 2.0, (r - g) / safe + 4.0));
  h = torch::where(delta > 0, h / 6.0, torch::zeros_like(h));
  h = (h + shift).remainder(1.0);
  auto s = torch::where(maxc > 0, delta / torch::where(maxc > 0, maxc, torch::ones_like(maxc)), torch::zeros_like(maxc));
  auto v = maxc;
  auto h6 = h * 6.0;
  auto i = h6.floor();
  auto f = h6 - i;
  auto p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
  auto idx = i.remainder(6.0);
  auto pick = [&](const torch::Tensor& a0, const torch::Tensor& a1, const torch::Tensor& a2, const torch::Tensor& a3,
                  const torch::Tensor& a4, const torch::Tensor& a5) {
    return torch::where(idx == 0, a0,
                        torch::where(idx == 1, a1,
                                     torch::where(idx == 2, a2, torch::where(idx == 3, a3, torch::where(idx == 4, a4, a5)))));
  };
  return torch::stack({pick(v, q, p, p, t, v), pick(t, v, v, q, p, p), pick(p, p, t, v, v, q)});
}

}  // namespace

Image augment(const Image& image, const AugmentConfig& config, std::mt19937_64& rng, int out_resolution) {
  config.validate();
  const ImageShape shape = shape_of(image);
  const int H = shape.height, W = shape.width;
  const int out_h = out_resolution > 0 ? out_resolution : H;
  const int out_w = out_resolution > 0 ? out_resolution : W;
  auto x = image;

  // Random resized crop.
  {
    int top = 0, left = 0, ch = H, cw = W;
    bool found = false;
    const double area = static_cast<double>(H) * W;
    for (int attempt = 0; attempt < 10 && !found; ++attempt) {
      const double target = area * uniform(rng, config.crop_scale_min, config.crop_scale_max);
      const double ratio =
          std::exp(uniform(rng, std::log(config.crop_ratio_min), std::log(config.crop_ratio_max)));
      const int w = static_cast<int>(std::lround(std::sqrt(target * ratio)));
      const int h = static_cast<int>(std::lround(std::sqrt(target / ratio)));
      if (w > 0 && h > 0 && w <= W && h <= H) {
        top = uniform_int(rng, 0, H - h);
        left = uniform_int(rng, 0, W - w);
        ch = h;
        cw = w;
        found = true;
      }
    }
    if (!found) {
      // Center crop at the nearest admissible aspect ratio.
      const double in_ratio = static_cast<double>(W) / H;
      if (in_ratio < config.crop_ratio_min) {
        cw = W;
        ch = std::min(H, static_cast<int>(std::lround(W / config.crop_ratio_min)));
      } else if (in_ratio > config.crop_ratio_max) {
        ch = H;
        cw = std::min(W, static_cast<int>(std::lround(H * config.crop_ratio_max)));
      }
      top = (H - ch) / 2;
      left = (W - cw) / 2;
    }
    if (!(ch == H && cw == W && out_h == H && out_w == W)) {
      auto crop = x.slice(1, top, top + ch).slice(2, left, left + cw).unsqueeze(0);
      x = resize_batch(crop, out_h, out_w)[0];
    }
  }

  if (config.flip_probability > 0.0 && uniform(rng, 0.0, 1.0) < config.flip_probability) x = x.flip({2});

  const bool jitter = config.brightness > 0 || config.contrast > 0 || config.saturation > 0 || config.hue > 0;
  if (jitter) {
    auto y = (x + 1.0) * 0.5;
    if (config.brightness > 0) {
      y = (y * uniform(rng, std::max(0.0, 1.0 - config.brightness), 1.0 + config.brightness)).clamp(0.0, 1.0);
    }
    if (config.contrast > 0) {
      const double c = uniform(rng, std::max(0.0, 1.0 - config.contrast), 1.0 + config.contrast);
      auto mean = shape.channels == 3 ? grayscale(y).mean() : y.mean();
      y = (c * y + (1.0 - c) * mean).clamp(0.0, 1.0);
    }
    if (shape.channels == 3 && config.saturation > 0) {
      const double s = uniform(rng, std::max(0.0, 1.0 - config.saturation), 1.0 + config.saturation);
      y = (s * y + (1.0 - s) * grayscale(y)).clamp(0.0, 1.0);
    }
    if (shape.channels == 3 && config.hue > 0) y = shift_hue(y, uniform(rng, -config.hue, config.hue)).clamp(0.0, 1.0);
    x = y * 2.0 - 1.0;
  }

  if (config.erasing_probability > 0.0 && uniform(rng, 0.0, 1.0) < config.erasing_probability) {
    const double area = static_cast<double>(out_h) * out_w;
    for (int attempt = 0; attempt < 10; ++attempt) {
      const double target = area * uniform(rng, config.erasing_scale_min, config.erasing_scale_max);
      const double ratio =
          std::exp(uniform(rng, std::log(config.erasing_ratio_min), std::log(config.erasing_ratio_max)));
      const int h = static_cast<int>(std::lround(std::sqrt(target * ratio)));
      const int w = static_cast<int>(std::lround(std::sqrt(target / ratio)));
      const double actual = static_cast<double>(h) * w;
      if (h < 1 || w < 1 || h >= out_h || w >= out_w) continue;
      if (actual < config.erasing_scale_min * area || actual > config.erasing_scale_max * area) continue;
      const int top = uniform_int(rng, 0, out_h - h);
      const int left = uniform_int(rng, 0, out_w - w);
      std::vector<float> noise(static_cast<std::size_t>(shape.channels) * h * w);
      std::uniform_real_distribution<float> fill(-1.0f, 1.0f);
      for (auto& v : noise) v = fill(rng);
      x = x.clone();
      x.slice(1, top, top + h).slice(2, left, left + w).copy_(
          torch::tensor(noise).view({shape.channels, h, w}).to(x.scalar_type()));
      break;
    }
  }
  return x.clamp(-1.0, 1.0);
}

FRTrainResult train_fr(const DatasetManifest& manifest, const FRTrainConfig& config) {
  config.validate();
  if (manifest.subjects().size() < 2) throw ValidationError("FR training needs at least 2 subjects");
  auto data = detail::load_labelled(manifest, config.backbone.resolution);

  detail::ClassifierTrainSpec spec;
  spec.epochs = config.epochs;
  spec.batch_size = config.batch_size;
  spec.momentum = config.momentum;
  spec.weight_decay = config.weight_decay;
  spec.margin = config.margin;
  spec.scale = config.scale;
  spec.seed = config.seed;
  spec.verbose = config.verbose;
  spec.learning_rate = [config](int epoch) { return fr_learning_rate(config, epoch); };
  spec.augment = [aug = config.augment](const torch::Tensor& batch, std::uint64_t batch_seed) {
    std::mt19937_64 rng(batch_seed);
    std::vector<torch::Tensor> out;
    out.reserve(static_cast<std::size_t>(batch.size(0)));
    for (int64_t i = 0; i < batch.size(0); ++i) out.push_back(augment(batch[i], aug, rng));
    return torch::stack(out);
  };
  auto trained = detail::train_margin_classifier(data, config.backbone, spec);
  return FRTrainResult{trained.encoder, trained.head, trained.epochs, trained.train_accuracy};
}

void write_metrics_csv(const std::filesystem::path& path, const std::vector<EpochMetrics>& epochs) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "epoch,loss,lr,train_acc\n" << std::setprecision(10);
  for (const auto& e : epochs) out << e.epoch << ',' << e.loss << ',' << e.learning_rate << ',' << e.train_accuracy << '\n';
}

}  // namespace simcond
