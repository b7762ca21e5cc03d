#include "simcond/diffusion_training.hpp"

#include <cmath>
#include <iostream>
#include <numeric>
#include <sstream>

#include "simcond/errors.hpp"

namespace simcond {

std::vector<double> arithmetic_grid(double low, double high, double interval) {
  if (!std::isfinite(low) || !std::isfinite(high) || !std::isfinite(interval)) {
    throw ValidationError("grid bounds must be finite");
  }
  if (low > high) throw ValidationError("grid bounds are inverted");
  if (!(interval > 0.0)) throw ValidationError("grid interval must be > 0");
  const auto count = static_cast<std::size_t>(std::floor((high - low) / interval + 1e-9)) + 1;
  std::vector<double> grid;
  grid.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    // Round away accumulated binary error so e.g. -1 + 50*0.02 prints as 0.
    const double v = std::round((low + static_cast<double>(k) * interval) * 1e12) / 1e12;
    grid.push_back(std::min(v, high));
  }
  return grid;
}

MGridSampler::MGridSampler(std::vector<double> grid, std::uint64_t seed)
    : grid_(std::move(grid)), rng_(seed), pick_(0, grid_.empty() ? 0 : grid_.size() - 1) {
  if (grid_.empty()) throw ValidationError("m grid is empty");
}

std::size_t MGridSampler::next_index() { return pick_(rng_); }

void DiffusionTrainConfig::validate() const {
  if (!(lambda >= 0.0)) throw ValidationError("lambda must be >= 0");
  if (m_low < -1.0 || m_high > 1.0) throw ValidationError("training m range must lie within [-1, 1]");
  arithmetic_grid(m_low, m_high, m_interval);
  if (epochs < 1 || batch_size < 1) throw ValidationError("epochs and batch size must be >= 1");
  if (!(learning_rate > 0.0)) throw ValidationError("learning rate must be > 0");
}

DiffusionLossTerms diffusion_objective(const DenoiserModel& model, const EncoderCheckpoint& encoder,
                                       const NoiseSchedule& schedule, const torch::Tensor& x0,
                                       const torch::Tensor& e_x, const torch::Tensor& t, const torch::Tensor& eps,
                                       const torch::Tensor& m, double lambda, const SimMatOptions& options) {
  auto net = model.net();
  auto x_t = forward_diffuse(x0, t, eps, schedule);
  auto c_att = net->condition(e_x, m);
  auto eps_hat = net->forward(x_t, t, c_att);
  auto mse = mse_loss_tensor(eps_hat, eps);
  auto x0_hat = estimate_x0(x_t, eps_hat, t, schedule);
  auto simmat = simmat_loss_batch(e_x, x0_hat, m, t, schedule.T(), encoder, options).mean();
  return {mse + lambda * simmat, mse, simmat};
}

DiffusionTrainResult train_diffusion(const torch::Tensor& images, const EncoderCheckpoint& encoder,
                                     const DiffusionTrainConfig& config, const NoiseSchedule& schedule,
                                     const DenoiserConfig& model_config) {
  config.validate();
  model_config.validate();
  if (images.dim() != 4 || images.size(0) == 0) throw ValidationError("diffusion training corpus is empty");
  if (model_config.id_dim != encoder.config().dim) {
    throw DimensionError("denoiser id_dim does not match the encoder embedding dim");
  }
  const auto n = images.size(0);
  auto dtype = torch::kFloat32;

  // E(x) never changes (the encoder is frozen), so compute it once.
  const int er = encoder.config().resolution;
  auto e_all = encoder.embed_all(resize_batch(images, er, er)).to(dtype);
  auto x_all = resize_batch(images, model_config.resolution, model_config.resolution).to(dtype);

  auto model = DenoiserModel::initialise(model_config, config.seed, dtype);
  auto net = model.net();
  net->train();
  torch::optim::AdamW opt(net->parameters(), torch::optim::AdamWOptions(config.learning_rate)
                                                 .weight_decay(config.weight_decay));

  MGridSampler m_sampler(arithmetic_grid(config.m_low, config.m_high, config.m_interval), config.seed + 1);
  std::mt19937_64 rng(config.seed + 2);
  std::uniform_int_distribution<int64_t> t_dist(1, schedule.T());
  auto gen = at::make_generator<at::CPUGeneratorImpl>(config.seed + 3);

  std::vector<int64_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  DiffusionTrainResult result;
  int total_steps = 0;
  bool done = false;
  for (int epoch = 1; epoch <= config.epochs && !done; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    DiffusionEpochLog log{epoch, 0, 0.0, 0.0, 0.0};
    for (int64_t start = 0; start < n; start += config.batch_size) {
      const int64_t end = std::min<int64_t>(start + config.batch_size, n);
      const int64_t b = end - start;
      auto idx = torch::tensor(std::vector<int64_t>(order.begin() + start, order.begin() + end), torch::kInt64);
      std::vector<int64_t> ts(b);
      std::vector<double> ms(b);
      for (int64_t i = 0; i < b; ++i) {
        ts[i] = t_dist(rng);
        ms[i] = m_sampler.next();
      }
      auto x0 = x_all.index_select(0, idx);
      auto e_x = e_all.index_select(0, idx);
      auto t = torch::tensor(ts, torch::kInt64);
      auto m = torch::tensor(ms, torch::kFloat64).to(dtype);
      auto eps = torch::randn(x0.sizes(), gen, torch::TensorOptions().dtype(dtype));

      auto terms = diffusion_objective(model, encoder, schedule, x0, e_x, t, eps, m, config.lambda, config.simmat);
      opt.zero_grad();
      terms.total.backward();
      if (config.grad_clip > 0.0) torch::nn::utils::clip_grad_norm_(net->parameters(), config.grad_clip);
      opt.step();

      const double mse = terms.mse.item<double>();
      const double sm = terms.simmat.item<double>();
      const double tot = terms.total.item<double>();
      if (!std::isfinite(tot)) throw NumericError("diffusion loss diverged at epoch " + std::to_string(epoch));
      result.step_mse.push_back(mse);
      result.step_total.push_back(tot);
      log.mse += mse;
      log.simmat += sm;
      log.total += tot;
      ++log.steps;
      ++total_steps;
      if (config.max_steps > 0 && total_steps >= config.max_steps) {
        done = true;
        break;
      }
    }
    log.mse /= log.steps;
    log.simmat /= log.steps;
    log.total /= log.steps;
    if (config.verbose) {
      std::cerr << "diffusion epoch " << log.epoch << " steps " << log.steps << " mse " << log.mse << " simmat "
                << log.simmat << " total " << log.total << std::endl;
    }
    result.epochs.push_back(log);
  }
  net->eval();
  for (auto& p : net->parameters()) p.set_requires_grad(false);

  auto& meta = model.metadata();
  meta["T"] = std::to_string(schedule.T());
  meta["beta_start"] = format_real(schedule.beta_start());
  meta["beta_end"] = format_real(schedule.beta_end());
  meta["m_grid"] = format_real(config.m_low) + ":" + format_real(config.m_interval) + ":" + format_real(config.m_high);
  meta["lambda"] = format_real(config.lambda);
  meta["seed"] = std::to_string(config.seed);
  result.model = model;
  return result;
}

DiffusionTrainResult train_diffusion(const DatasetManifest& corpus, const EncoderCheckpoint& encoder,
                                     const DiffusionTrainConfig& config, const NoiseSchedule& schedule,
                                     const DenoiserConfig& model_config) {
  if (corpus.records.empty()) throw ValidationError("diffusion training corpus is empty");
  return train_diffusion(load_batch(corpus.resolved_paths()), encoder, config, schedule, model_config);
}

}  // namespace simcond
