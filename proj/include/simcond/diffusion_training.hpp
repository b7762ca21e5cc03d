#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <random>
#include <vector>

#include "simcond/denoiser.hpp"
#include "simcond/diffusion_losses.hpp"
#include "simcond/identity_embedder.hpp"
#include "simcond/manifest.hpp"
#include "simcond/noise_schedule.hpp"

namespace simcond {

/// low, low + interval, ... capped at high (within 1e-9). A single point when
/// low == high. ValidationError for inverted bounds or interval <= 0.
std::vector<double> arithmetic_grid(double low, double high, double interval);

/// Draws grid points uniformly.
class MGridSampler {
 public:
  MGridSampler(std::vector<double> grid, std::uint64_t seed);
  std::size_t next_index();
  double next() { return grid_[next_index()]; }
  const std::vector<double>& grid() const noexcept { return grid_; }

 private:
  std::vector<double> grid_;
  std::mt19937_64 rng_;
  std::uniform_int_distribution<std::size_t> pick_;
};

struct DiffusionTrainConfig {
  double lambda = 0.05;
  double m_low = -1.0;
  double m_high = 1.0;
  double m_interval = 0.02;
  int epochs = 10;
  int max_steps = 0;  // > 0 caps the total number of optimizer steps
  int batch_size = 32;
  double learning_rate = 1e-4;
  double weight_decay = 1e-2;
  double grad_clip = 1.0;  // <= 0 disables clipping
  std::uint64_t seed = 0;
  SimMatOptions simmat;
  bool verbose = false;

  void validate() const;
};

struct DiffusionEpochLog {
  int epoch = 0;
  int steps = 0;
  double mse = 0.0;
  double simmat = 0.0;
  double total = 0.0;
};

struct DiffusionTrainResult {
  DenoiserModel model;
  std::vector<DiffusionEpochLog> epochs;
  std::vector<double> step_mse;
  std::vector<double> step_total;
};

/// One optimisation objective evaluation: samples nothing, so callers (and
/// the gradient checks) control t, eps and m. Returns the scalar total loss
/// and fills the per-term means when requested.
struct DiffusionLossTerms {
  torch::Tensor total;
  torch::Tensor mse;
  torch::Tensor simmat;
};
DiffusionLossTerms diffusion_objective(const DenoiserModel& model, const EncoderCheckpoint& encoder,
                                       const NoiseSchedule& schedule, const torch::Tensor& x0,
                                       const torch::Tensor& e_x, const torch::Tensor& t, const torch::Tensor& eps,
                                       const torch::Tensor& m, double lambda, const SimMatOptions& options);

/// Trains sigma_theta, F1 and F2 jointly with the encoder frozen. Per batch
/// item: t ~ U{1..T}, eps ~ N(0, I), m ~ U(grid).
DiffusionTrainResult train_diffusion(const torch::Tensor& images, const EncoderCheckpoint& encoder,
                                     const DiffusionTrainConfig& config, const NoiseSchedule& schedule,
                                     const DenoiserConfig& model_config);
DiffusionTrainResult train_diffusion(const DatasetManifest& corpus, const EncoderCheckpoint& encoder,
                                     const DiffusionTrainConfig& config, const NoiseSchedule& schedule,
                                     const DenoiserConfig& model_config);

}  // namespace simcond
