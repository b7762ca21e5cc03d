#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <vector>

#include "simcond/identity_embedder.hpp"
#include "simcond/image.hpp"
#include "simcond/manifest.hpp"

namespace simcond {

struct AugmentConfig {
  double crop_scale_min = 0.9;
  double crop_scale_max = 1.0;
  double crop_ratio_min = 3.0 / 4.0;
  double crop_ratio_max = 4.0 / 3.0;
  double flip_probability = 0.5;
  double brightness = 0.1;
  double contrast = 0.1;
  double saturation = 0.1;
  double hue = 0.1;
  double erasing_probability = 0.5;
  double erasing_scale_min = 0.02;
  double erasing_scale_max = 0.1;
  double erasing_ratio_min = 0.3;
  double erasing_ratio_max = 3.3;

  /// Every transform disabled: augment() returns its input unchanged.
  static AugmentConfig identity();
  void validate() const;
};

struct FRTrainConfig {
  double margin = 0.4;
  double scale = 64.0;
  double learning_rate = 0.1;
  double weight_decay = 5e-4;
  double momentum = 0.9;
  int epochs = 40;
  std::vector<int> decay_epochs{26, 34};
  double decay_factor = 0.1;
  int batch_size = 128;
  AugmentConfig augment;
  EncoderConfig backbone;
  std::uint64_t seed = 0;
  bool verbose = false;

  void validate() const;
};

/// Learning rate in effect during `epoch` (1-based): the base rate times
/// decay_factor for every decay epoch <= epoch.
double fr_learning_rate(const FRTrainConfig& config, int epoch);

/// Random resized crop, horizontal flip, brightness/contrast/saturation/hue
/// jitter and random erasing (uniform-noise fill), in that order. Output has
/// the input's shape (or out_resolution when > 0) and lies in [-1, 1].
Image augment(const Image& image, const AugmentConfig& config, std::mt19937_64& rng, int out_resolution = 0);

struct FRTrainResult {
  EncoderCheckpoint encoder;
  ClassifierHead head;
  std::vector<EpochMetrics> epochs;
  double train_accuracy = 0.0;
};

/// SGD + momentum under CosFace with step decay. ValidationError for fewer
/// than two subjects.
FRTrainResult train_fr(const DatasetManifest& manifest, const FRTrainConfig& config);

/// epoch,loss,lr,train_acc
void write_metrics_csv(const std::filesystem::path& path, const std::vector<EpochMetrics>& epochs);

}  // namespace simcond
