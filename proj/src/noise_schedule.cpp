#include "simcond/noise_schedule.hpp"

#include <cmath>

#include "simcond/errors.hpp"

namespace simcond {

NoiseSchedule NoiseSchedule::from_betas(std::vector<double> betas) {
  if (betas.empty()) throw ValidationError("noise schedule needs T >= 1");
  NoiseSchedule s;
  s.alpha_bars_.reserve(betas.size() + 1);
  s.alpha_bars_.push_back(1.0);
  double running = 1.0;
  for (double b : betas) {
    if (!(b >= 0.0 && b < 1.0)) throw ValidationError("beta values must lie in [0, 1)");
    running *= 1.0 - b;
    s.alpha_bars_.push_back(running);
  }
  s.betas_ = std::move(betas);
  return s;
}

double NoiseSchedule::beta(int t) const {
  if (t < 1 || t > T()) throw IndexError("timestep " + std::to_string(t) + " outside [1, " + std::to_string(T()) + "]");
  return betas_[t - 1];
}

double NoiseSchedule::alpha(int t) const { return 1.0 - beta(t); }

double NoiseSchedule::alpha_bar(int t) const {
  if (t < 0 || t > T()) throw IndexError("timestep " + std::to_string(t) + " outside [0, " + std::to_string(T()) + "]");
  return alpha_bars_[t];
}

torch::Tensor NoiseSchedule::alpha_bar_tensor(const torch::Tensor& t, torch::Dtype dtype) const {
  auto table = torch::tensor(alpha_bars_, torch::kFloat64);
  auto idx = t.to(torch::kInt64).view({-1});
  if (idx.numel() > 0 && (idx.min().item<int64_t>() < 0 || idx.max().item<int64_t>() > T())) {
    throw IndexError("timestep outside [0, " + std::to_string(T()) + "]");
  }
  return table.index_select(0, idx).to(dtype).view({-1, 1, 1, 1});
}

NoiseSchedule make_noise_schedule(int T, double beta_start, double beta_end) {
  if (T < 1) throw ValidationError("noise schedule needs T >= 1");
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0)) {
    throw ValidationError("beta bounds must satisfy 0 < beta_start <= beta_end < 1");
  }
  std::vector<double> betas(T);
  for (int i = 0; i < T; ++i) {
    const double frac = T == 1 ? 0.0 : static_cast<double>(i) / (T - 1);
    betas[i] = beta_start + frac * (beta_end - beta_start);
  }
  return NoiseSchedule::from_betas(std::move(betas));
}

std::pair<double, double> scaled_linear_betas(int T) {
  if (T < 1) throw ValidationError("T must be >= 1");
  const double scale = 1000.0 / T;
  return {std::min(1e-4 * scale, 0.5), std::min(0.02 * scale, 0.999)};
}

namespace {

void check_t(int t, const NoiseSchedule& s) {
  if (t < 1 || t > s.T()) throw IndexError("timestep " + std::to_string(t) + " outside [1, " + std::to_string(s.T()) + "]");
}

void check_t(const torch::Tensor& t, const NoiseSchedule& s) {
  if (t.numel() == 0) return;
  if (t.min().item<int64_t>() < 1 || t.max().item<int64_t>() > s.T()) {
    throw IndexError("timestep outside [1, " + std::to_string(s.T()) + "]");
  }
}

void check_same_shape(const torch::Tensor& a, const torch::Tensor& b) {
  if (a.sizes() != b.sizes()) throw DimensionError("tensor shapes differ");
}

}  // namespace

torch::Tensor forward_diffuse(const torch::Tensor& x0, int t, const torch::Tensor& eps, const NoiseSchedule& schedule) {
  check_t(t, schedule);
  check_same_shape(x0, eps);
  const double ab = schedule.alpha_bar(t);
  return std::sqrt(ab) * x0 + std::sqrt(1.0 - ab) * eps;
}

torch::Tensor forward_diffuse(const torch::Tensor& x0, const torch::Tensor& t, const torch::Tensor& eps,
                              const NoiseSchedule& schedule) {
  check_t(t, schedule);
  check_same_shape(x0, eps);
  if (x0.dim() != 4 || t.numel() != x0.size(0)) throw DimensionError("batched forward_diffuse needs one t per image");
  auto ab = schedule.alpha_bar_tensor(t, x0.scalar_type());
  return ab.sqrt() * x0 + (1.0 - ab).sqrt() * eps;
}

torch::Tensor estimate_x0(const torch::Tensor& x_t, const torch::Tensor& eps_hat, int t,
                          const NoiseSchedule& schedule) {
  check_t(t, schedule);
  check_same_shape(x_t, eps_hat);
  const double ab = schedule.alpha_bar(t);
  if (!(ab > 0.0)) throw NumericError("alpha_bar is not positive at t=" + std::to_string(t));
  return (x_t - std::sqrt(1.0 - ab) * eps_hat) / std::sqrt(ab);
}

torch::Tensor estimate_x0(const torch::Tensor& x_t, const torch::Tensor& eps_hat, const torch::Tensor& t,
                          const NoiseSchedule& schedule) {
  check_t(t, schedule);
  check_same_shape(x_t, eps_hat);
  if (x_t.dim() != 4 || t.numel() != x_t.size(0)) throw DimensionError("batched estimate_x0 needs one t per image");
  auto ab = schedule.alpha_bar_tensor(t, x_t.scalar_type());
  if (!(ab.min().item<double>() > 0.0)) throw NumericError("alpha_bar is not positive");
  return (x_t - (1.0 - ab).sqrt() * eps_hat) / ab.sqrt();
}

}  // namespace simcond
