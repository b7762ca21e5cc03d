#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <vector>

#include "simcond/denoiser.hpp"
#include "simcond/identity_embedder.hpp"
#include "simcond/noise_schedule.hpp"

namespace simcond {

struct SamplerConfig {
  int num_steps = 20;
  double eta = 0.0;  // 0 gives the deterministic sampler
  std::uint64_t seed = 0;
  // Clamp each x0_hat to [-1, 1] and recompute eps from it.
  bool clip_x0 = true;

  void validate(int T) const;
};

/// Strictly decreasing timesteps from T down to 1, uniformly strided over
/// [1, T] with both endpoints included.
std::vector<int> ddim_timesteps(int T, int num_steps);

/// x_prev = coef_x0 * x0_hat + coef_eps * eps' + sigma * z.
struct DdimCoefficients {
  double coef_x0 = 0.0;
  double coef_eps = 0.0;
  double sigma = 0.0;
};
DdimCoefficients ddim_coefficients(const NoiseSchedule& schedule, int t, int t_prev, double eta);

/// Standard-normal image drawn from a generator seeded with `seed`.
torch::Tensor initial_noise(int channels, int resolution, std::uint64_t seed, torch::Dtype dtype = torch::kFloat32);

/// Batched sampler: one seed per sample, conditions (C_id rows, m) fixed over
/// all steps. Every random draw of a sample comes from its own seeded
/// generator. Output clamped to [-1, 1].
torch::Tensor ddim_sample_batch(const DenoiserModel& model, const NoiseSchedule& schedule, const torch::Tensor& c_id,
                                const torch::Tensor& m, const std::vector<std::uint64_t>& seeds, int num_steps,
                                double eta, bool clip_x0 = true);

/// One image from pure noise under (c_id, m).
Image ddim_sample(const DenoiserModel& model, const NoiseSchedule& schedule, const IdentityEmbedding& c_id, double m,
                  const SamplerConfig& config);

/// Embeds the inquiry once (resized to the encoder's resolution when needed)
/// and draws n samples with seeds base_seed .. base_seed + n - 1.
std::vector<Image> generate_group(const DenoiserModel& model, const NoiseSchedule& schedule, const Image& inquiry,
                                  const EncoderCheckpoint& encoder, double m, int n, std::uint64_t base_seed,
                                  int num_steps = 20, double eta = 0.0, int batch = 25);

/// Schedule stored in a trained denoiser's header.
NoiseSchedule schedule_from_metadata(const DenoiserModel& model);

}  // namespace simcond
