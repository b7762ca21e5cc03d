#include "simcond/diffusion_losses.hpp"

#include <cmath>

#include "simcond/errors.hpp"

namespace simcond {

torch::Tensor mse_loss_tensor(const torch::Tensor& eps_hat, const torch::Tensor& eps) {
  if (eps_hat.sizes() != eps.sizes()) throw DimensionError("mse_loss operands differ in shape");
  return (eps_hat - eps).pow(2).mean();
}

double mse_loss(const torch::Tensor& eps_hat, const torch::Tensor& eps) {
  torch::NoGradGuard no_grad;
  return mse_loss_tensor(eps_hat.to(torch::kFloat64), eps.to(torch::kFloat64)).item<double>();
}

namespace {
void check_t(int t, int T) {
  if (T < 1) throw ValidationError("T must be >= 1");
  if (t < 0 || t > T) throw IndexError("timestep " + std::to_string(t) + " outside [0, " + std::to_string(T) + "]");
}
}  // namespace

double simmat_from_similarity(double s, double m, int t, int T, SimMatNorm norm) {
  check_t(t, T);
  const double gamma = static_cast<double>(t) / T;
  auto rho = [norm](double r) { return norm == SimMatNorm::Squared ? r * r : std::abs(r); };
  return (1.0 - gamma) * rho(1.0 - s) + gamma * rho(m - s);
}

torch::Tensor encoder_view(const torch::Tensor& x0_hat, const EncoderCheckpoint& encoder, bool clamp) {
  auto x = x0_hat;
  if (clamp) x = x + (x.clamp(-1.0, 1.0) - x).detach();
  const int r = encoder.config().resolution;
  return resize_batch(x, r, r);
}

torch::Tensor simmat_loss_batch(const torch::Tensor& e_x, const torch::Tensor& x0_hat, const torch::Tensor& m,
                                const torch::Tensor& t, int T, const EncoderCheckpoint& encoder,
                                const SimMatOptions& options) {
  if (T < 1) throw ValidationError("T must be >= 1");
  if (t.numel() > 0 && (t.min().item<int64_t>() < 0 || t.max().item<int64_t>() > T)) {
    throw IndexError("timestep outside [0, " + std::to_string(T) + "]");
  }
  const auto n = x0_hat.size(0);
  if (e_x.size(0) != n || m.numel() != n || t.numel() != n) throw DimensionError("simmat batch sizes disagree");
  auto e_hat = encoder.embed_batch(encoder_view(x0_hat, encoder, options.clamp_x0));
  auto dtype = e_hat.scalar_type();
  auto s = (e_x.to(dtype) * e_hat).sum(1);
  auto gamma = t.to(dtype).view({-1}) / static_cast<double>(T);
  auto rec = 1.0 - s;
  auto sim = m.to(dtype).view({-1}) - s;
  if (options.norm == SimMatNorm::Squared) {
    rec = rec.pow(2);
    sim = sim.pow(2);
  } else {
    rec = rec.abs();
    sim = sim.abs();
  }
  return (1.0 - gamma) * rec + gamma * sim;
}

double simmat_loss(const Image& x, const Image& x0_hat, double m, int t, int T, const EncoderCheckpoint& encoder,
                   const SimMatOptions& options) {
  check_t(t, T);
  if (x.sizes() != x0_hat.sizes()) throw DimensionError("x and x0_hat differ in shape");
  torch::NoGradGuard no_grad;
  auto dtype = encoder.dtype();
  auto e_x = encoder.embed_batch(encoder_view(x.unsqueeze(0).to(dtype), encoder, false));
  auto out = simmat_loss_batch(e_x, x0_hat.unsqueeze(0).to(dtype), torch::tensor({m}, dtype),
                               torch::tensor({static_cast<int64_t>(t)}, torch::kInt64), T, encoder, options);
  return out.item<double>();
}

double total_loss(double mse, double simmat, double lambda) {
  if (!std::isfinite(mse) || !std::isfinite(simmat) || !std::isfinite(lambda)) {
    throw ValidationError("total_loss inputs must be finite");
  }
  if (lambda < 0.0) throw ValidationError("lambda must be >= 0");
  return mse + lambda * simmat;
}

}  // namespace simcond
