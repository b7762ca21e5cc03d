#pragma once

#include <cstdint>
#include <filesystem>

#include "simcond/image.hpp"
#include "simcond/manifest.hpp"

namespace simcond {

struct ToyCorpusConfig {
  int n_identities = 100;
  int per_identity = 30;
  int resolution = 32;
  std::uint64_t seed = 0;
  // Identity codes are drawn for indices identity_offset .. identity_offset +
  // n_identities - 1, so corpora with different offsets hold different people.
  std::int64_t identity_offset = 0;

  void validate() const;
};

/// Renders identity `identity` (code fixed by seed and index) under nuisance
/// draw `variant`: translation, hue rotation, an optional occluding patch and
/// a blur level. Variant 0 of each identity is not special.
Image render_toy_image(std::uint64_t seed, std::int64_t identity, std::uint64_t variant, int resolution);

/// Writes subject_XXXXX/img_XXXX.png files plus manifest.jsonl under out_dir.
/// Subject ids are identity_offset + i. Output depends only on the config.
DatasetManifest make_toy_corpus(const ToyCorpusConfig& config, const std::filesystem::path& out_dir);

}  // namespace simcond
