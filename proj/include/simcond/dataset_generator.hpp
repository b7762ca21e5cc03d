#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "simcond/ddim_sampler.hpp"
#include "simcond/denoiser.hpp"
#include "simcond/identity_embedder.hpp"
#include "simcond/image.hpp"
#include "simcond/manifest.hpp"
#include "simcond/noise_schedule.hpp"

namespace simcond {

/// Ordered, duplicate-free list of generation similarities in [-1, 1].
class MixSchedule {
 public:
  static MixSchedule from_values(std::vector<double> values);
  const std::vector<double>& values() const noexcept { return values_; }
  std::size_t size() const noexcept { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }
  std::string to_string() const;

 private:
  std::vector<double> values_;
};

/// low, low + interval, ... capped at high; [low] when low == high.
MixSchedule mix_m_schedule(double low, double high, double interval);

/// Greedy filter in input order: a candidate is kept iff its largest cosine
/// similarity to the already-kept ones is <= threshold. Returns kept indices
/// in input order. ValidationError for an empty pool or threshold outside
/// (-1, 1].
std::vector<std::size_t> select_inquiries(const std::vector<IdentityEmbedding>& pool, double threshold);
std::vector<std::size_t> select_inquiries(const std::vector<Image>& pool, const EncoderCheckpoint& encoder,
                                          double threshold);

/// Source of synthetic images for one subject.
class SampleGenerator {
 public:
  virtual ~SampleGenerator() = default;
  /// One image per seed, all at similarity factor m to `inquiry`.
  virtual std::vector<Image> generate(const Image& inquiry, double m, const std::vector<std::uint64_t>& seeds) = 0;
  virtual std::string tag() const = 0;
};

/// DDIM sampling from a trained denoiser.
class DiffusionSampleGenerator : public SampleGenerator {
 public:
  DiffusionSampleGenerator(DenoiserModel model, NoiseSchedule schedule, EncoderCheckpoint encoder, int num_steps = 20,
                           double eta = 0.0, int batch = 25);
  std::vector<Image> generate(const Image& inquiry, double m, const std::vector<std::uint64_t>& seeds) override;
  std::string tag() const override;

 private:
  DenoiserModel model_;
  NoiseSchedule schedule_;
  EncoderCheckpoint encoder_;
  int num_steps_;
  double eta_;
  int batch_;
};

/// Destination for assembled images, addressed by manifest-relative path.
class ImageSink {
 public:
  virtual ~ImageSink() = default;
  virtual void put(const std::string& relative_path, const Image& image) = 0;
};

/// Writes PNG files under a root directory, creating subdirectories.
class PngDirectorySink : public ImageSink {
 public:
  explicit PngDirectorySink(std::filesystem::path root);
  void put(const std::string& relative_path, const Image& image) override;

 private:
  std::filesystem::path root_;
};

/// Drops images; used for volume accounting without touching the disk.
class CountingSink : public ImageSink {
 public:
  void put(const std::string&, const Image&) override { ++count_; }
  std::size_t count() const noexcept { return count_; }

 private:
  std::size_t count_ = 0;
};

struct AssembleConfig {
  int per_subject = 50;
  int oversample = 5;
  std::uint64_t seed = 0;
};

std::string subject_directory(std::size_t subject);
std::string image_filename(std::size_t index);

/// Builds the synthetic dataset: per inquiry, per_subject generated images
/// with m cycled round-robin over `schedule_m`, then `oversample` copies of
/// the inquiry. Image j of subject i uses seed config.seed + i * per_subject
/// + j. A subject whose generation throws is dropped, logged and the
/// manifest marked partial.
DatasetManifest assemble_dataset(const std::vector<Image>& inquiries, SampleGenerator& generator,
                                 const MixSchedule& schedule_m, const AssembleConfig& config, ImageSink& sink,
                                 const std::filesystem::path& root);

/// Convenience wrapper writing PNGs and `out_dir/manifest.jsonl`. IoError
/// when out_dir cannot be written.
DatasetManifest assemble_dataset(const std::vector<Image>& inquiries, const DenoiserModel& model,
                                 const EncoderCheckpoint& encoder, const MixSchedule& schedule_m,
                                 const AssembleConfig& config, const std::filesystem::path& out_dir,
                                 int num_steps = 20);

}  // namespace simcond
