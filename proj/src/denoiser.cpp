#include "simcond/denoiser.hpp"

#include <cmath>
#include <sstream>

#include "simcond/digest.hpp"
#include "simcond/errors.hpp"

namespace simcond {

namespace F = torch::nn::functional;

void DenoiserConfig::validate() const {
  if (channels < 1 || resolution < 1) throw ValidationError("denoiser channels/resolution must be >= 1");
  if (widths.empty()) throw ValidationError("denoiser needs at least one level");
  const int down = 1 << (widths.size() - 1);
  if (resolution % down != 0) throw ValidationError("denoiser resolution not divisible by 2^(levels-1)");
  for (int w : widths) {
    if (w < 1 || w % std::min(groups, w) != 0) throw ValidationError("denoiser width incompatible with group count");
  }
  if (time_dim < 2 || time_dim % 2 != 0) throw ValidationError("time_dim must be even and >= 2");
  if (id_dim < 1 || cond_tokens < 1 || cond_token_width < 1) throw ValidationError("condition sizes must be >= 1");
}

namespace detail {

namespace {
torch::nn::GroupNorm group_norm(int groups, int channels) {
  return torch::nn::GroupNorm(torch::nn::GroupNormOptions(std::min(groups, channels), channels));
}
torch::nn::Conv2d conv3(int in, int out, int stride = 1) {
  return torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 3).stride(stride).padding(1));
}
}  // namespace

TimestepEmbeddingImpl::TimestepEmbeddingImpl(int dim) : dim_(dim) {
  fc1_ = register_module("fc1", torch::nn::Linear(dim, dim));
  fc2_ = register_module("fc2", torch::nn::Linear(dim, dim));
}

torch::Tensor TimestepEmbeddingImpl::forward(const torch::Tensor& t) {
  const int half = dim_ / 2;
  auto dtype = fc1_->weight.scalar_type();
  auto freqs = torch::exp(-std::log(10000.0) * torch::arange(half, torch::TensorOptions().dtype(dtype)) / half);
  auto args = t.to(dtype).view({-1, 1}) * freqs.view({1, -1});
  auto emb = torch::cat({torch::sin(args), torch::cos(args)}, 1);
  return fc2_->forward(F::silu(fc1_->forward(emb)));
}

ResBlockImpl::ResBlockImpl(int in, int out, int time_dim, int groups) {
  norm1_ = register_module("norm1", group_norm(groups, in));
  conv1_ = register_module("conv1", conv3(in, out));
  norm2_ = register_module("norm2", group_norm(groups, out));
  conv2_ = register_module("conv2", conv3(out, out));
  ada_ = register_module("ada", torch::nn::Linear(time_dim, 2 * out));
  if (in != out) skip_ = register_module("skip", torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 1)));
}

torch::Tensor ResBlockImpl::forward(const torch::Tensor& x, const torch::Tensor& temb) {
  auto h = conv1_->forward(F::silu(norm1_->forward(x)));
  auto ss = ada_->forward(F::silu(temb)).unsqueeze(-1).unsqueeze(-1).chunk(2, 1);
  h = norm2_->forward(h) * (1 + ss[0]) + ss[1];
  h = conv2_->forward(F::silu(h));
  return (skip_ ? skip_->forward(x) : x) + h;
}

CrossAttentionImpl::CrossAttentionImpl(int channels, int token_width, int groups) {
  norm_ = register_module("norm", group_norm(groups, channels));
  q_ = register_module("q", torch::nn::Linear(channels, channels));
  k_ = register_module("k", torch::nn::Linear(token_width, channels));
  v_ = register_module("v", torch::nn::Linear(token_width, channels));
  out_ = register_module("out", torch::nn::Linear(channels, channels));
}

torch::Tensor CrossAttentionImpl::forward(const torch::Tensor& h, const torch::Tensor& tokens) {
  const auto n = h.size(0), c = h.size(1), hh = h.size(2), ww = h.size(3);
  auto x = norm_->forward(h).flatten(2).transpose(1, 2);  // (N, HW, C)
  auto q = q_->forward(x);
  auto k = k_->forward(tokens);  // (N, K, C)
  auto v = v_->forward(tokens);
  auto attn = torch::softmax(q.matmul(k.transpose(1, 2)) / std::sqrt(static_cast<double>(c)), -1);
  auto o = out_->forward(attn.matmul(v));  // (N, HW, C)
  return h + o.transpose(1, 2).reshape({n, c, hh, ww});
}

}  // namespace detail

DenoiserNetImpl::DenoiserNetImpl(const DenoiserConfig& config) : config_(config) {
  config.validate();
  const int wc = config.condition_width();
  sim_proj_ = register_module("sim_proj", torch::nn::Linear(1, wc));
  cond_proj_ = register_module("cond_proj", torch::nn::Linear(config.id_dim + wc, wc));
  time_embed_ = register_module("time_embed", detail::TimestepEmbedding(config.time_dim));
  const auto& w = config.widths;
  const int levels = static_cast<int>(w.size());
  in_conv_ = register_module("in_conv", torch::nn::Conv2d(torch::nn::Conv2dOptions(config.channels, w[0], 3).padding(1)));
  int prev = w[0];
  for (int i = 0; i < levels; ++i) {
    const std::string s = std::to_string(i);
    down_res_.push_back(register_module("down_res" + s, detail::ResBlock(prev, w[i], config.time_dim, config.groups)));
    down_attn_.push_back(
        register_module("down_attn" + s, detail::CrossAttention(w[i], config.cond_token_width, config.groups)));
    if (i + 1 < levels) {
      downsample_.push_back(register_module(
          "downsample" + s, torch::nn::Conv2d(torch::nn::Conv2dOptions(w[i], w[i], 3).stride(2).padding(1))));
    }
    prev = w[i];
  }
  mid_res_ = register_module("mid_res", detail::ResBlock(prev, prev, config.time_dim, config.groups));
  mid_attn_ = register_module("mid_attn", detail::CrossAttention(prev, config.cond_token_width, config.groups));
  for (int i = levels - 1; i >= 0; --i) {
    const std::string s = std::to_string(i);
    up_res_.push_back(register_module("up_res" + s, detail::ResBlock(2 * w[i], w[i], config.time_dim, config.groups)));
    up_attn_.push_back(
        register_module("up_attn" + s, detail::CrossAttention(w[i], config.cond_token_width, config.groups)));
    if (i > 0) {
      upsample_.push_back(register_module(
          "upsample" + s, torch::nn::Conv2d(torch::nn::Conv2dOptions(w[i], w[i - 1], 3).padding(1))));
    }
  }
  out_norm_ = register_module("out_norm", torch::nn::GroupNorm(torch::nn::GroupNormOptions(
                                              std::min(config.groups, w[0]), w[0])));
  out_conv_ = register_module("out_conv", torch::nn::Conv2d(torch::nn::Conv2dOptions(w[0], config.channels, 3).padding(1)));
}

void check_m_range(const torch::Tensor& m) {
  if (m.numel() == 0) return;
  if (!torch::isfinite(m).all().item<bool>() || m.min().item<double>() < -1.0 || m.max().item<double>() > 1.0) {
    throw ValidationError("similarity factor m must lie in [-1, 1]");
  }
}

torch::Tensor DenoiserNetImpl::condition(const torch::Tensor& c_id, const torch::Tensor& m) {
  check_m_range(m);
  if (c_id.dim() != 2 || c_id.size(1) != config_.id_dim) {
    throw DimensionError("C_id must be (N, " + std::to_string(config_.id_dim) + ")");
  }
  auto dtype = sim_proj_->weight.scalar_type();
  auto c_sim = sim_proj_->forward(m.to(dtype).view({-1, 1}));
  return cond_proj_->forward(torch::cat({c_id.to(dtype), c_sim}, 1));
}

torch::Tensor DenoiserNetImpl::forward(const torch::Tensor& x_t, const torch::Tensor& t, const torch::Tensor& c_att) {
  if (x_t.dim() != 4 || x_t.size(1) != config_.channels || x_t.size(2) != config_.resolution ||
      x_t.size(3) != config_.resolution) {
    throw DimensionError("denoiser input must be (N, " + std::to_string(config_.channels) + ", " +
                         std::to_string(config_.resolution) + ", " + std::to_string(config_.resolution) + ")");
  }
  if (c_att.dim() != 2 || c_att.size(0) != x_t.size(0) || c_att.size(1) != config_.condition_width()) {
    throw DimensionError("C_att must be (N, " + std::to_string(config_.condition_width()) + ")");
  }
  if (t.numel() != x_t.size(0)) throw DimensionError("one timestep per image is required");
  auto temb = time_embed_->forward(t);
  auto tokens = c_att.view({c_att.size(0), config_.cond_tokens, config_.cond_token_width});

  auto h = in_conv_->forward(x_t);
  std::vector<torch::Tensor> skips;
  const std::size_t levels = down_res_.size();
  for (std::size_t i = 0; i < levels; ++i) {
    h = down_attn_[i]->forward(down_res_[i]->forward(h, temb), tokens);
    skips.push_back(h);
    if (i + 1 < levels) h = downsample_[i]->forward(h);
  }
  h = mid_attn_->forward(mid_res_->forward(h, temb), tokens);
  for (std::size_t j = 0; j < levels; ++j) {
    const std::size_t i = levels - 1 - j;
    h = torch::cat({h, skips[i]}, 1);
    h = up_attn_[j]->forward(up_res_[j]->forward(h, temb), tokens);
    if (i > 0) {
      h = F::interpolate(h, F::InterpolateFuncOptions().scale_factor(std::vector<double>{2.0, 2.0}).mode(torch::kNearest));
      h = upsample_[j]->forward(h);
    }
  }
  return out_conv_->forward(F::silu(out_norm_->forward(h)));
}

DenoiserModel::DenoiserModel(DenoiserConfig config, DenoiserNet net, HeaderFields metadata)
    : config_(std::move(config)), net_(std::move(net)), metadata_(std::move(metadata)) {}

DenoiserModel DenoiserModel::initialise(const DenoiserConfig& config, std::uint64_t seed, torch::Dtype dtype) {
  torch::manual_seed(seed);
  DenoiserNet net(config);
  net->to(dtype);
  return DenoiserModel(config, net);
}

torch::Dtype DenoiserModel::dtype() const { return net_->parameters().front().scalar_type(); }

std::int64_t DenoiserModel::parameter_count() const {
  std::int64_t n = 0;
  for (const auto& p : net_->parameters()) n += p.numel();
  return n;
}

void DenoiserModel::save(const std::filesystem::path& blob) const {
  save_module_state(*net_, blob);
  HeaderFields h = metadata_;
  h["kind"] = "denoiser";
  h["format_version"] = "1";
  h["channels"] = std::to_string(config_.channels);
  h["resolution"] = std::to_string(config_.resolution);
  std::string widths;
  for (std::size_t i = 0; i < config_.widths.size(); ++i) widths += (i ? "," : "") + std::to_string(config_.widths[i]);
  h["widths"] = widths;
  h["groups"] = std::to_string(config_.groups);
  h["time_dim"] = std::to_string(config_.time_dim);
  h["id_dim"] = std::to_string(config_.id_dim);
  h["cond_tokens"] = std::to_string(config_.cond_tokens);
  h["cond_token_width"] = std::to_string(config_.cond_token_width);
  h["condition_width"] = std::to_string(config_.condition_width());
  h["dtype"] = dtype() == torch::kFloat64 ? "float64" : "float32";
  h["tool_version"] = std::string(kToolVersion);
  write_header(header_path_for(blob), h);
}

DenoiserModel DenoiserModel::load(const std::filesystem::path& blob) {
  auto h = read_header(header_path_for(blob));
  if (require_field(h, "kind") != "denoiser") throw IoError(blob.string() + " is not a denoiser checkpoint");
  if (require_field(h, "format_version") != "1") throw IoError("unsupported denoiser format version");
  DenoiserConfig c;
  c.channels = std::stoi(require_field(h, "channels"));
  c.resolution = std::stoi(require_field(h, "resolution"));
  c.widths.clear();
  std::stringstream ws(require_field(h, "widths"));
  for (std::string tok; std::getline(ws, tok, ',');) c.widths.push_back(std::stoi(tok));
  c.groups = std::stoi(require_field(h, "groups"));
  c.time_dim = std::stoi(require_field(h, "time_dim"));
  c.id_dim = std::stoi(require_field(h, "id_dim"));
  c.cond_tokens = std::stoi(require_field(h, "cond_tokens"));
  c.cond_token_width = std::stoi(require_field(h, "cond_token_width"));
  DenoiserNet net(c);
  if (require_field(h, "dtype") == "float64") net->to(torch::kFloat64);
  load_module_state(*net, blob);
  net->eval();
  HeaderFields meta;
  for (const auto& [k, v] : h) {
    if (k != "kind" && k != "format_version" && k != "dtype") meta[k] = v;
  }
  return DenoiserModel(c, net, meta);
}

ConditioningBundle build_conditions(const IdentityEmbedding& embedding, double m, const DenoiserModel& model, int t) {
  if (!(m >= -1.0 && m <= 1.0)) throw ValidationError("similarity factor m=" + std::to_string(m) + " outside [-1, 1]");
  if (t < 0) throw ValidationError("timestep must be >= 0");
  if (embedding.dim() != static_cast<std::size_t>(model.config().id_dim)) {
    throw DimensionError("identity embedding dim does not match the denoiser's id_dim");
  }
  torch::NoGradGuard no_grad;
  auto dtype = model.dtype();
  auto c_att = model.net()->condition(embedding.to_tensor(dtype).unsqueeze(0), torch::tensor({m}, dtype));
  auto flat = c_att[0].to(torch::kFloat64).contiguous();
  const double* p = flat.data_ptr<double>();
  return ConditioningBundle{embedding, m, std::vector<double>(p, p + flat.numel()), t};
}

Image denoise(const Image& x_t, const ConditioningBundle& bundle, const DenoiserModel& model) {
  const auto& c = model.config();
  const ImageShape expected{c.channels, c.resolution, c.resolution};
  if (!(shape_of(x_t) == expected)) throw DimensionError("denoise input shape does not match the model");
  if (bundle.c_att.size() != static_cast<std::size_t>(c.condition_width())) {
    throw DimensionError("C_att length does not match the model's condition width");
  }
  torch::NoGradGuard no_grad;
  auto dtype = model.dtype();
  auto c_att = torch::tensor(bundle.c_att, torch::kFloat64).to(dtype).unsqueeze(0);
  auto t = torch::tensor({static_cast<int64_t>(bundle.t)}, torch::kInt64);
  return model.net()->forward(x_t.to(dtype).unsqueeze(0), t, c_att)[0];
}

}  // namespace simcond
