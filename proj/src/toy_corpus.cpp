#include "simcond/toy_corpus.hpp"

#include <cmath>
#include <random>

#include "simcond/dataset_generator.hpp"
#include "simcond/digest.hpp"
#include "simcond/errors.hpp"

namespace simcond {

void ToyCorpusConfig::validate() const {
  if (n_identities < 2) throw ValidationError("toy corpus needs at least 2 identities");
  if (per_identity < 1) throw ValidationError("toy corpus needs at least 1 image per identity");
  if (resolution < 8 || resolution > 512) throw ValidationError("toy resolution must lie in [8, 512]");
  if (identity_offset < 0) throw ValidationError("identity offset must be >= 0");
}

namespace {

constexpr int kShapes = 3;

struct Shape {
  int kind;  // 0 disk, 1 square, 2 ring, 3 bar
  double cx, cy, size, angle;
  double rgb[3];
};

struct IdentityCode {
  double bg[3];
  double gradient[3];
  double gradient_angle;
  Shape shapes[kShapes];
};

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  return Fnv1a().update_u64(a).update_u64(b).value();
}

IdentityCode identity_code(std::uint64_t seed, std::int64_t identity) {
  std::mt19937_64 rng(mix(seed, static_cast<std::uint64_t>(identity)));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  IdentityCode code{};
  for (int c = 0; c < 3; ++c) {
    code.bg[c] = -0.8 + 1.6 * u(rng);
    code.gradient[c] = -0.4 + 0.8 * u(rng);
  }
  code.gradient_angle = 2.0 * M_PI * u(rng);
  for (auto& s : code.shapes) {
    s.kind = static_cast<int>(u(rng) * 4.0) % 4;
    s.cx = 0.2 + 0.6 * u(rng);
    s.cy = 0.2 + 0.6 * u(rng);
    s.size = 0.12 + 0.18 * u(rng);
    s.angle = M_PI * u(rng);
    for (double& v : s.rgb) v = -1.0 + 2.0 * u(rng);
  }
  return code;
}

}  // namespace

Image render_toy_image(std::uint64_t seed, std::int64_t identity, std::uint64_t variant, int resolution) {
  const IdentityCode code = identity_code(seed, identity);
  std::mt19937_64 rng(mix(mix(seed, static_cast<std::uint64_t>(identity)), variant + 1));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double dx = -0.06 + 0.12 * u(rng);
  const double dy = -0.06 + 0.12 * u(rng);
  const double hue = -0.25 + 0.5 * u(rng);
  const bool occlude = u(rng) < 0.5;
  const double occ_size = 0.15 + 0.1 * u(rng);
  const double occ_x = u(rng) * (1.0 - occ_size);
  const double occ_y = u(rng) * (1.0 - occ_size);
  const double occ_level = -0.5 + u(rng);
  const int blur = static_cast<int>(u(rng) * 3.0) % 3;

  const int R = resolution;
  auto opts = torch::TensorOptions().dtype(torch::kFloat64);
  auto coords = (torch::arange(R, opts) + 0.5) / static_cast<double>(R);
  auto yy = coords.view({R, 1}).expand({R, R});
  auto xx = coords.view({1, R}).expand({R, R});

  std::vector<torch::Tensor> planes;
  const double ga = code.gradient_angle;
  auto ramp = (xx - 0.5) * std::cos(ga) + (yy - 0.5) * std::sin(ga);
  for (int c = 0; c < 3; ++c) planes.push_back(code.bg[c] + code.gradient[c] * ramp);
  auto img = torch::stack(planes);

  for (const auto& s : code.shapes) {
    auto px = xx - (s.cx + dx);
    auto py = yy - (s.cy + dy);
    auto rx = px * std::cos(s.angle) + py * std::sin(s.angle);
    auto ry = -px * std::sin(s.angle) + py * std::cos(s.angle);
    auto r = torch::sqrt(px * px + py * py);
    torch::Tensor mask;
    switch (s.kind) {
      case 0: mask = r < s.size; break;
      case 1: mask = (rx.abs() < s.size * 0.8) & (ry.abs() < s.size * 0.8); break;
      case 2: mask = (r < s.size) & (r > s.size * 0.55); break;
      default: mask = (rx.abs() < s.size * 1.2) & (ry.abs() < s.size * 0.35); break;
    }
    auto color = torch::tensor({s.rgb[0], s.rgb[1], s.rgb[2]}, opts).view({3, 1, 1});
    img = torch::where(mask.unsqueeze(0), color.expand({3, R, R}), img);
  }

  // Hue rotation about the gray axis (Rodrigues).
  {
    const double c = std::cos(hue), s = std::sin(hue), k = (1.0 - c) / 3.0, q = s / std::sqrt(3.0);
    auto rot = torch::tensor({c + k, k - q, k + q, k + q, c + k, k - q, k - q, k + q, c + k}, opts).view({3, 3});
    img = torch::matmul(rot, img.view({3, R * R})).view({3, R, R});
  }

  if (occlude) {
    auto mask = (xx >= occ_x) & (xx < occ_x + occ_size) & (yy >= occ_y) & (yy < occ_y + occ_size);
    img = torch::where(mask.unsqueeze(0), torch::full({3, R, R}, occ_level, opts), img);
  }

  if (blur > 0) {
    auto k1 = torch::tensor({0.25, 0.5, 0.25}, opts);
    auto kernel = torch::outer(k1, k1).view({1, 1, 3, 3}).repeat({3, 1, 1, 1});
    auto batch = img.unsqueeze(0);
    for (int i = 0; i < blur; ++i) {
      batch = torch::nn::functional::pad(batch, torch::nn::functional::PadFuncOptions({1, 1, 1, 1}).mode(torch::kReplicate));
      batch = torch::nn::functional::conv2d(batch, kernel, torch::nn::functional::Conv2dFuncOptions().groups(3));
    }
    img = batch[0];
  }
  return img.clamp(-1.0, 1.0).to(torch::kFloat32);
}

DatasetManifest make_toy_corpus(const ToyCorpusConfig& config, const std::filesystem::path& out_dir) {
  config.validate();
  std::filesystem::create_directories(out_dir);
  Fnv1a d;
  d.update("toy-corpus").update_u64(static_cast<std::uint64_t>(config.n_identities))
      .update_u64(static_cast<std::uint64_t>(config.per_identity))
      .update_u64(static_cast<std::uint64_t>(config.resolution)).update_u64(config.seed)
      .update_u64(static_cast<std::uint64_t>(config.identity_offset));

  DatasetManifest manifest;
  manifest.root = out_dir;
  manifest.header.config_digest = d.hex();
  manifest.header.metadata["generator"] = "toy";
  manifest.header.metadata["resolution"] = std::to_string(config.resolution);
  manifest.header.metadata["seed"] = std::to_string(config.seed);
  manifest.header.metadata["tool_version"] = std::string(kToolVersion);
  for (int i = 0; i < config.n_identities; ++i) {
    const std::int64_t identity = config.identity_offset + i;
    const std::string dir = subject_directory(static_cast<std::size_t>(identity));
    std::filesystem::create_directories(out_dir / dir);
    for (int j = 0; j < config.per_identity; ++j) {
      const std::string rel = dir + "/" + image_filename(static_cast<std::size_t>(j));
      write_png(out_dir / rel, render_toy_image(config.seed, identity, static_cast<std::uint64_t>(j), config.resolution));
      ImageRecord rec;
      rec.subject_id = identity;
      rec.path = rel;
      rec.source = ImageSource::Corpus;
      manifest.records.push_back(std::move(rec));
    }
  }
  write_manifest(out_dir / "manifest.jsonl", manifest);
  return manifest;
}

}  // namespace simcond
