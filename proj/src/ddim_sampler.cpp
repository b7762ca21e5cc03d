#include "simcond/ddim_sampler.hpp"

#include <cmath>

#include "simcond/errors.hpp"

namespace simcond {

void SamplerConfig::validate(int T) const {
  if (num_steps < 1) throw ValidationError("num_steps must be >= 1");
  if (num_steps > T) {
    throw ValidationError("num_steps " + std::to_string(num_steps) + " exceeds T=" + std::to_string(T));
  }
  if (!(eta >= 0.0)) throw ValidationError("eta must be >= 0");
}

std::vector<int> ddim_timesteps(int T, int num_steps) {
  SamplerConfig{num_steps, 0.0, 0}.validate(T);
  std::vector<int> steps(num_steps);
  if (num_steps == 1) {
    steps[0] = T;
    return steps;
  }
  const double stride = static_cast<double>(T - 1) / (num_steps - 1);
  for (int k = 0; k < num_steps; ++k) {
    steps[num_steps - 1 - k] = static_cast<int>(std::lround(1.0 + k * stride));
  }
  return steps;
}

DdimCoefficients ddim_coefficients(const NoiseSchedule& schedule, int t, int t_prev, double eta) {
  if (t_prev >= t) throw ValidationError("DDIM step must move to an earlier timestep");
  const double ab_t = schedule.alpha_bar(t);
  const double ab_prev = schedule.alpha_bar(t_prev);
  const double sigma = eta * std::sqrt((1.0 - ab_prev) / (1.0 - ab_t)) * std::sqrt(1.0 - ab_t / ab_prev);
  const double residual = std::max(1.0 - ab_prev - sigma * sigma, 0.0);
  return {std::sqrt(ab_prev), std::sqrt(residual), sigma};
}

torch::Tensor initial_noise(int channels, int resolution, std::uint64_t seed, torch::Dtype dtype) {
  auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
  return torch::randn({channels, resolution, resolution}, gen, torch::TensorOptions().dtype(dtype));
}

torch::Tensor ddim_sample_batch(const DenoiserModel& model, const NoiseSchedule& schedule, const torch::Tensor& c_id,
                                const torch::Tensor& m, const std::vector<std::uint64_t>& seeds, int num_steps,
                                double eta, bool clip_x0) {
  SamplerConfig{num_steps, eta, 0}.validate(schedule.T());
  const auto n = static_cast<int64_t>(seeds.size());
  if (c_id.size(0) != n || m.numel() != n) throw DimensionError("one C_id row and one m per seed are required");
  torch::NoGradGuard no_grad;
  const auto& cfg = model.config();
  auto dtype = model.dtype();
  auto net = model.net();

  std::vector<at::Generator> gens;
  std::vector<torch::Tensor> noise;
  gens.reserve(n);
  for (auto s : seeds) {
    gens.push_back(at::make_generator<at::CPUGeneratorImpl>(s));
    noise.push_back(torch::randn({cfg.channels, cfg.resolution, cfg.resolution}, gens.back(),
                                 torch::TensorOptions().dtype(dtype)));
  }
  auto x = torch::stack(noise);
  auto c_att = net->condition(c_id.to(dtype), m.to(dtype));

  const auto steps = ddim_timesteps(schedule.T(), num_steps);
  for (std::size_t k = 0; k < steps.size(); ++k) {
    const int t = steps[k];
    const int t_prev = k + 1 < steps.size() ? steps[k + 1] : 0;
    auto tt = torch::full({n}, t, torch::kInt64);
    auto eps_hat = net->forward(x, tt, c_att);
    auto x0_hat = estimate_x0(x, eps_hat, t, schedule);
    if (clip_x0) {
      // Keep the direction term consistent with the clipped estimate.
      const double ab = schedule.alpha_bar(t);
      x0_hat = x0_hat.clamp(-1.0, 1.0);
      eps_hat = (x - std::sqrt(ab) * x0_hat) / std::sqrt(1.0 - ab);
    }
    const auto c = ddim_coefficients(schedule, t, t_prev, eta);
    x = c.coef_x0 * x0_hat + c.coef_eps * eps_hat;
    if (c.sigma > 0.0) {
      std::vector<torch::Tensor> z;
      for (auto& g : gens) {
        z.push_back(torch::randn({cfg.channels, cfg.resolution, cfg.resolution}, g, torch::TensorOptions().dtype(dtype)));
      }
      x = x + c.sigma * torch::stack(z);
    }
  }
  return x.clamp(-1.0, 1.0);
}

Image ddim_sample(const DenoiserModel& model, const NoiseSchedule& schedule, const IdentityEmbedding& c_id, double m,
                  const SamplerConfig& config) {
  config.validate(schedule.T());
  if (!(m >= -1.0 && m <= 1.0)) throw ValidationError("similarity factor m outside [-1, 1]");
  auto dtype = model.dtype();
  return ddim_sample_batch(model, schedule, c_id.to_tensor(dtype).unsqueeze(0), torch::tensor({m}, dtype),
                           {config.seed}, config.num_steps, config.eta, config.clip_x0)[0];
}

std::vector<Image> generate_group(const DenoiserModel& model, const NoiseSchedule& schedule, const Image& inquiry,
                                  const EncoderCheckpoint& encoder, double m, int n, std::uint64_t base_seed,
                                  int num_steps, double eta, int batch) {
  if (n < 1) throw ValidationError("group size must be >= 1");
  if (!(m >= -1.0 && m <= 1.0)) throw ValidationError("similarity factor m outside [-1, 1]");
  const int er = encoder.config().resolution;
  auto query = resize_batch(inquiry.unsqueeze(0), er, er)[0];
  const auto c_id = embed(query, encoder);
  auto dtype = model.dtype();
  auto row = c_id.to_tensor(dtype).unsqueeze(0);
  std::vector<Image> out;
  out.reserve(n);
  for (int start = 0; start < n; start += batch) {
    const int b = std::min(batch, n - start);
    std::vector<std::uint64_t> seeds(b);
    for (int i = 0; i < b; ++i) seeds[i] = base_seed + static_cast<std::uint64_t>(start + i);
    auto imgs = ddim_sample_batch(model, schedule, row.expand({b, row.size(1)}), torch::full({b}, m, dtype), seeds,
                                  num_steps, eta);
    for (int i = 0; i < b; ++i) out.push_back(imgs[i]);
  }
  return out;
}

NoiseSchedule schedule_from_metadata(const DenoiserModel& model) {
  const auto& meta = model.metadata();
  const int T = std::stoi(require_field(meta, "T"));
  return make_noise_schedule(T, std::stod(require_field(meta, "beta_start")), std::stod(require_field(meta, "beta_end")));
}

}  // namespace simcond
