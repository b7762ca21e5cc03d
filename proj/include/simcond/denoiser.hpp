#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <vector>

#include "simcond/checkpoint_io.hpp"
#include "simcond/identity_embedder.hpp"
#include "simcond/image.hpp"

namespace simcond {

struct DenoiserConfig {
  int channels = 3;
  int resolution = 32;
  // One UNet level per entry; every level but the last halves the resolution.
  std::vector<int> widths{32, 64, 64};
  int groups = 8;
  int time_dim = 64;
  int id_dim = 128;  // must equal the identity encoder's embedding dim
  // C_att is reshaped into cond_tokens keys of width cond_token_width for
  // cross-attention; condition_width() is its flat length.
  int cond_tokens = 4;
  int cond_token_width = 32;

  int condition_width() const { return cond_tokens * cond_token_width; }
  void validate() const;
};

namespace detail {

class TimestepEmbeddingImpl : public torch::nn::Module {
 public:
  explicit TimestepEmbeddingImpl(int dim);
  torch::Tensor forward(const torch::Tensor& t);

 private:
  int dim_;
  torch::nn::Linear fc1_{nullptr}, fc2_{nullptr};
};
TORCH_MODULE(TimestepEmbedding);

// Residual block with AdaGN timestep injection: GN(h) * (1 + s(t)) + b(t).
class ResBlockImpl : public torch::nn::Module {
 public:
  ResBlockImpl(int in, int out, int time_dim, int groups);
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& temb);

 private:
  torch::nn::GroupNorm norm1_{nullptr}, norm2_{nullptr};
  torch::nn::Conv2d conv1_{nullptr}, conv2_{nullptr}, skip_{nullptr};
  torch::nn::Linear ada_{nullptr};
};
TORCH_MODULE(ResBlock);

// Single-head cross-attention from spatial positions to condition tokens.
class CrossAttentionImpl : public torch::nn::Module {
 public:
  CrossAttentionImpl(int channels, int token_width, int groups);
  torch::Tensor forward(const torch::Tensor& h, const torch::Tensor& tokens);

 private:
  torch::nn::GroupNorm norm_{nullptr};
  torch::nn::Linear q_{nullptr}, k_{nullptr}, v_{nullptr}, out_{nullptr};
};
TORCH_MODULE(CrossAttention);

}  // namespace detail

/// sigma_theta together with the condition projections F1 and F2.
class DenoiserNetImpl : public torch::nn::Module {
 public:
  explicit DenoiserNetImpl(const DenoiserConfig& config);

  /// C_att = F2(cat(C_id, F1(m))) for a batch: c_id (N, id_dim), m (N,).
  torch::Tensor condition(const torch::Tensor& c_id, const torch::Tensor& m);
  /// Predicted noise for x_t (N, C, H, W), integer timesteps t (N,) and
  /// c_att (N, condition_width).
  torch::Tensor forward(const torch::Tensor& x_t, const torch::Tensor& t, const torch::Tensor& c_att);

  const DenoiserConfig& config() const { return config_; }

 private:
  DenoiserConfig config_;
  torch::nn::Linear sim_proj_{nullptr};   // F1
  torch::nn::Linear cond_proj_{nullptr};  // F2
  detail::TimestepEmbedding time_embed_{nullptr};
  torch::nn::Conv2d in_conv_{nullptr}, out_conv_{nullptr};
  torch::nn::GroupNorm out_norm_{nullptr};
  std::vector<detail::ResBlock> down_res_, up_res_;
  std::vector<detail::CrossAttention> down_attn_, up_attn_;
  std::vector<torch::nn::Conv2d> downsample_, upsample_;
  detail::ResBlock mid_res_{nullptr};
  detail::CrossAttention mid_attn_{nullptr};
};
TORCH_MODULE(DenoiserNet);

/// Trained (or freshly initialised) denoiser plus the metadata recorded in
/// its checkpoint header (schedule parameters, training m-grid, digest).
class DenoiserModel {
 public:
  DenoiserModel() = default;
  DenoiserModel(DenoiserConfig config, DenoiserNet net, HeaderFields metadata = {});

  static DenoiserModel initialise(const DenoiserConfig& config, std::uint64_t seed,
                                  torch::Dtype dtype = torch::kFloat32);

  const DenoiserConfig& config() const noexcept { return config_; }
  DenoiserNet net() const { return net_; }
  torch::Dtype dtype() const;
  const HeaderFields& metadata() const noexcept { return metadata_; }
  HeaderFields& metadata() noexcept { return metadata_; }
  std::int64_t parameter_count() const;

  void save(const std::filesystem::path& blob) const;
  static DenoiserModel load(const std::filesystem::path& blob);

 private:
  DenoiserConfig config_;
  DenoiserNet net_{nullptr};
  HeaderFields metadata_;
};

struct ConditioningBundle {
  IdentityEmbedding c_id;
  double m = 0.0;
  std::vector<double> c_att;
  int t = 0;
};

/// Builds (C_id, m, C_att). m outside [-1, 1] is a ValidationError; nothing
/// is clamped.
ConditioningBundle build_conditions(const IdentityEmbedding& embedding, double m, const DenoiserModel& model,
                                    int t = 0);

/// Predicted noise eps' for one (C, H, W) image. Throws DimensionError on
/// shape or condition-width mismatch.
Image denoise(const Image& x_t, const ConditioningBundle& bundle, const DenoiserModel& model);

/// Validates m values of a batch.
void check_m_range(const torch::Tensor& m);

}  // namespace simcond
