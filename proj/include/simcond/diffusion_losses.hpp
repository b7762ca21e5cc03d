#pragma once

#include <torch/torch.h>

#include "simcond/identity_embedder.hpp"
#include "simcond/image.hpp"

namespace simcond {

// How the scalar residuals |1 - s| and |m - s| are penalised. Squared is the
// default; Absolute keeps the plain magnitude.
enum class SimMatNorm { Squared, Absolute };

struct SimMatOptions {
  SimMatNorm norm = SimMatNorm::Squared;
  // Clamp x0_hat to [-1, 1] before the encoder, passing gradients straight
  // through the clamp.
  bool clamp_x0 = true;
};

/// Mean of squared elementwise differences. DimensionError on shape mismatch.
double mse_loss(const torch::Tensor& eps_hat, const torch::Tensor& eps);
torch::Tensor mse_loss_tensor(const torch::Tensor& eps_hat, const torch::Tensor& eps);

/// (1 - t/T) * rho(1 - s) + (t/T) * rho(m - s), rho = square or abs.
double simmat_from_similarity(double s, double m, int t, int T, SimMatNorm norm = SimMatNorm::Squared);

/// Clamps (straight-through, optional) and resizes x0_hat to the encoder's
/// input resolution. Differentiable.
torch::Tensor encoder_view(const torch::Tensor& x0_hat, const EncoderCheckpoint& encoder, bool clamp);

/// Per-item L_SimMat for a batch. `e_x` holds the unit embeddings E(x) of the
/// clean images (N, D); x0_hat is (N, C, H, W) and carries gradients; m and t
/// are (N,). Returns (N,).
torch::Tensor simmat_loss_batch(const torch::Tensor& e_x, const torch::Tensor& x0_hat, const torch::Tensor& m,
                                const torch::Tensor& t, int T, const EncoderCheckpoint& encoder,
                                const SimMatOptions& options = {});

/// Single-image L_SimMat with s = cos(E(x), E(x0_hat)). IndexError unless
/// 0 <= t <= T.
double simmat_loss(const Image& x, const Image& x0_hat, double m, int t, int T, const EncoderCheckpoint& encoder,
                   const SimMatOptions& options = {});

/// L = L_MSE + lambda * L_SimMat. ValidationError for non-finite input or
/// negative lambda.
double total_loss(double mse, double simmat, double lambda);

}  // namespace simcond
