#pragma once

#include <torch/torch.h>

#include <vector>

namespace simcond {

/// Forward-process variances beta_1..beta_T with alpha_t = 1 - beta_t and
/// alpha_bar_t = prod_{s<=t} alpha_s. Index 0 is the clean image
/// (alpha_bar_0 = 1), so valid noisy timesteps are 1..T.
class NoiseSchedule {
 public:
  NoiseSchedule() = default;
  /// Arbitrary betas in [0, 1). Used for hand-built schedules in tests.
  static NoiseSchedule from_betas(std::vector<double> betas);

  int T() const noexcept { return static_cast<int>(betas_.size()); }
  double beta(int t) const;
  double alpha(int t) const;
  double alpha_bar(int t) const;  // t in [0, T]
  const std::vector<double>& betas() const noexcept { return betas_; }
  const std::vector<double>& alpha_bars() const noexcept { return alpha_bars_; }  // length T + 1

  double beta_start() const { return betas_.front(); }
  double beta_end() const { return betas_.back(); }

  /// alpha_bar gathered for a batch of timesteps, shaped (N, 1, 1, 1).
  torch::Tensor alpha_bar_tensor(const torch::Tensor& t, torch::Dtype dtype) const;

 private:
  std::vector<double> betas_;
  std::vector<double> alpha_bars_;
};

/// Linearly spaced betas. Requires T >= 1 and 0 < beta_start <= beta_end < 1.
NoiseSchedule make_noise_schedule(int T, double beta_start, double beta_end);

/// beta range that gives a T-step linear schedule the same terminal signal
/// level as the 1000-step (1e-4, 0.02) schedule.
std::pair<double, double> scaled_linear_betas(int T);

/// x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps. No clipping. t in [1, T].
torch::Tensor forward_diffuse(const torch::Tensor& x0, int t, const torch::Tensor& eps, const NoiseSchedule& schedule);
torch::Tensor forward_diffuse(const torch::Tensor& x0, const torch::Tensor& t, const torch::Tensor& eps,
                              const NoiseSchedule& schedule);

/// x0_hat = (x_t - sqrt(1 - abar_t) eps_hat) / sqrt(abar_t). t in [1, T].
torch::Tensor estimate_x0(const torch::Tensor& x_t, const torch::Tensor& eps_hat, int t,
                          const NoiseSchedule& schedule);
torch::Tensor estimate_x0(const torch::Tensor& x_t, const torch::Tensor& eps_hat, const torch::Tensor& t,
                          const NoiseSchedule& schedule);

}  // namespace simcond
