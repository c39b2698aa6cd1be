#include "hmdr/networks.hpp"

#include <algorithm>

#include "hmdr/errors.hpp"

namespace hmdr {

namespace F = torch::nn::functional;

namespace {

void require_video(const torch::Tensor& t, int64_t channels, const char* name) {
  if (!t.defined() || t.dim() != 5 || t.size(2) != channels) {
    throw ConfigError(std::string(name) + " must be N x T x " + std::to_string(channels) + " x H x W");
  }
}

}  // namespace

void GeneratorInput::validate() const {
  require_video(masked_frames, 3, "masked_frames");
  require_video(mask, 1, "mask");
  require_video(landmark_maps, 1, "landmark_maps");
  if (!reference.defined() || reference.dim() != 4 || reference.size(1) != 3) {
    throw ConfigError("reference must be N x 3 x H x W");
  }
  const auto n = masked_frames.size(0), t = masked_frames.size(1);
  const auto h = masked_frames.size(3), w = masked_frames.size(4);
  for (const auto* v : {&mask, &landmark_maps}) {
    if (v->size(0) != n || v->size(1) != t || v->size(3) != h || v->size(4) != w) {
      throw ConfigError("generator input components disagree on N, T, H or W");
    }
  }
  if (reference.size(0) != n || reference.size(2) != h || reference.size(3) != w) {
    throw ConfigError("reference image disagrees with the clip on N, H or W");
  }
  // Reference may only carry pixels inside the (union over time of the) mask.
  auto outside = (std::get<0>(mask.max(1)) < 0.5).to(reference.dtype());
  if ((reference * outside).abs().max().item<double>() != 0.0) {
    throw ConfigError("reference image has nonzero pixels outside the mask");
  }
}

torch::Tensor GeneratorInput::stacked() const {
  const auto t = masked_frames.size(1);
  auto ref = reference.unsqueeze(1).expand({-1, t, -1, -1, -1});
  return torch::cat({masked_frames, mask, landmark_maps, ref}, 2);
}

void GeneratorConfig::validate() const {
  if (input_channels < 1 || base_channels < 1 || max_channels < base_channels) {
    throw ConfigError("generator channel widths must be positive with max >= base");
  }
  if (!(negative_slope >= 0.0)) throw ConfigError("LeakyReLU slope must be >= 0");
  shift.validate();
  for (auto d : dilations) {
    if (d < 1) throw ConfigError("dilation rates must be >= 1");
  }
}

std::vector<GeneratorLayer> GeneratorConfig::layer_plan() const {
  validate();
  const int64_t c1 = base_channels;
  const int64_t c2 = std::min(2 * base_channels, max_channels);
  const int64_t c4 = std::min(4 * base_channels, max_channels);

  auto layer = [&](LayerStage stage, int64_t in, int64_t out, int64_t kernel, int64_t stride = 1,
                   int64_t dilation = 1, bool upsample = false, bool activation = true) {
    GatedConvOptions o;
    o.in_channels = in;
    o.out_channels = out;
    o.kernel_size = kernel;
    o.stride = stride;
    o.dilation = dilation;
    o.upsample = upsample;
    o.activation = activation;
    o.negative_slope = negative_slope;
    o.shift = shift;
    return GeneratorLayer{stage, o};
  };

  using S = LayerStage;
  std::vector<GeneratorLayer> plan;
  plan.push_back(layer(S::kDownsampling, input_channels, c1, 5));
  plan.push_back(layer(S::kDownsampling, c1, c2, 4, 2));
  plan.push_back(layer(S::kDownsampling, c2, c4, 4, 2));
  plan.push_back(layer(S::kDownsampling, c4, c4, 3));
  for (auto d : dilations) plan.push_back(layer(S::kDilation, c4, c4, 3, 1, d));
  plan.push_back(layer(S::kUpsampling, c4, c4, 3));
  plan.push_back(layer(S::kUpsampling, c4, c2, 3, 1, 1, true));
  plan.push_back(layer(S::kUpsampling, c2, c2, 3));
  plan.push_back(layer(S::kUpsampling, c2, c1, 3, 1, 1, true));
  plan.push_back(layer(S::kUpsampling, c1, 3, 3, 1, 1, false, false));
  return plan;
}

GeneratorImpl::GeneratorImpl(const GeneratorConfig& config) : config_(config) {
  const auto plan = config_.layer_plan();
  for (std::size_t i = 0; i < plan.size(); ++i) {
    layers_.push_back(register_module("gated_" + std::to_string(i), GatedTsmConv(plan[i].conv)));
  }
  // First attention follows the first stride-2 layer, the second sits right
  // before the first dilated layer.
  for (std::size_t i = 0; i < plan.size(); ++i) {
    if (plan[i].conv.stride == 2) {
      attention_down_index_ = i;
      break;
    }
  }
  for (std::size_t i = 0; i < plan.size(); ++i) {
    if (plan[i].stage == LayerStage::kDilation) {
      attention_dilation_index_ = i - 1;
      break;
    }
  }
  if (config_.attention_after_downsample) {
    attention_down_ = register_module(
        "attention_down",
        SelfAttention(plan[attention_down_index_].conv.out_channels, config_.attention_reduction));
  }
  if (config_.attention_before_dilation) {
    attention_dilation_ = register_module(
        "attention_dilation",
        SelfAttention(plan[attention_dilation_index_].conv.out_channels, config_.attention_reduction));
  }
}

torch::Tensor GeneratorImpl::forward(const GeneratorInput& input) {
  input.validate();
  return forward(input.stacked());
}

torch::Tensor GeneratorImpl::forward(const torch::Tensor& stacked) {
  if (!stacked.defined() || stacked.dim() != 5 || stacked.size(2) != config_.input_channels) {
    throw ConfigError("generator expects N x T x " + std::to_string(config_.input_channels) +
                      " x H x W input");
  }
  const auto h = stacked.size(3), w = stacked.size(4);
  if (h % GeneratorConfig::kDownsamplingFactor != 0 || w % GeneratorConfig::kDownsamplingFactor != 0) {
    throw ConfigError("frame size " + std::to_string(h) + "x" + std::to_string(w) +
                      " is not a multiple of the generator down-sampling factor");
  }
  auto x = stacked;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    x = layers_[i]->forward(x);
    if (i == attention_down_index_ && attention_down_) x = attention_down_->forward(x);
    if (i == attention_dilation_index_ && attention_dilation_) x = attention_dilation_->forward(x);
  }
  return (torch::tanh(x) + 1.0) * 0.5;
}

SpectralConv2dImpl::SpectralConv2dImpl(const torch::nn::Conv2dOptions& options, bool spectral_norm)
    : options_(options), spectral_norm_(spectral_norm) {
  // Borrow the default Conv2d initialisation.
  torch::nn::Conv2d init(options);
  weight = register_parameter("weight", init->weight.detach().clone());
  bias = register_parameter("bias", init->bias.detach().clone());
  // Shaped like one output map on the first forward pass.
  u = register_buffer("u", torch::empty({0}));
}

torch::Tensor SpectralConv2dImpl::convolve(const torch::Tensor& x, const torch::Tensor& w,
                                           const torch::Tensor& b) const {
  return F::conv2d(x, w,
                   F::Conv2dFuncOptions()
                       .bias(b)
                       .stride(options_.stride())
                       .padding(std::get<torch::ExpandingArray<2>>(options_.padding()))
                       .dilation(options_.dilation()));
}

torch::Tensor SpectralConv2dImpl::adjoint(const torch::Tensor& y, const torch::Tensor& w, int64_t height,
                                          int64_t width) const {
  const auto stride = *options_.stride();
  const auto pad = *std::get<torch::ExpandingArray<2>>(options_.padding());
  const auto dil = *options_.dilation();
  const int64_t k_h = w.size(2), k_w = w.size(3);
  const int64_t full_h = (y.size(2) - 1) * stride[0] - 2 * pad[0] + dil[0] * (k_h - 1) + 1;
  const int64_t full_w = (y.size(3) - 1) * stride[1] - 2 * pad[1] + dil[1] * (k_w - 1) + 1;
  return F::conv_transpose2d(y, w,
                             F::ConvTranspose2dFuncOptions()
                                 .stride(options_.stride())
                                 .padding(pad)
                                 .output_padding({height - full_h, width - full_w})
                                 .dilation(options_.dilation()));
}

torch::Tensor SpectralConv2dImpl::normalized_weight(int64_t height, int64_t width) {
  if (!spectral_norm_) return weight;
  torch::Tensor v;
  {
    torch::NoGradGuard no_grad;
    const auto w = weight.detach();
    const auto stride = *options_.stride();
    const auto pad = *std::get<torch::ExpandingArray<2>>(options_.padding());
    const auto dil = *options_.dilation();
    const std::vector<int64_t> out_shape{1, w.size(0),
                                         (height + 2 * pad[0] - dil[0] * (w.size(2) - 1) - 1) / stride[0] + 1,
                                         (width + 2 * pad[1] - dil[1] * (w.size(3) - 1) - 1) / stride[1] + 1};
    if (u.sizes() != torch::IntArrayRef(out_shape)) {
      auto u0 = torch::randn(out_shape, w.options());
      u.set_(u0 / (u0.norm() + 1e-12));
    }
    v = adjoint(u, w, height, width);
    v = v / (v.norm() + 1e-12);
    if (is_training()) {
      auto u_next = convolve(v, w, {});
      u.copy_(u_next / (u_next.norm() + 1e-12));
      v = adjoint(u, w, height, width);
      v = v / (v.norm() + 1e-12);
    }
  }
  // u is updated in place by later forwards, so the graph keeps a copy.
  auto sigma = (u.clone() * convolve(v, weight, {})).sum();
  return weight / sigma;
}

torch::Tensor SpectralConv2dImpl::forward(const torch::Tensor& x) {
  return convolve(x, normalized_weight(x.size(2), x.size(3)), bias);
}

void DiscriminatorConfig::validate() const {
  if (input_channels < 1 || base_channels < 1 || max_channels < 1 || kernel_size < 1) {
    throw ConfigError("discriminator widths and kernel size must be positive");
  }
  for (auto s : strides) {
    if (s < 1) throw ConfigError("discriminator strides must be >= 1");
  }
  shift.validate();
}

std::vector<int64_t> DiscriminatorConfig::channel_plan() const {
  const auto cap = [&](int64_t c) { return std::min(c, max_channels); };
  return {cap(base_channels), cap(2 * base_channels), cap(4 * base_channels),
          cap(4 * base_channels), cap(4 * base_channels), 1};
}

int64_t DiscriminatorConfig::output_size(int64_t input_size) const {
  const int64_t pad = (kernel_size - 1) / 2;
  int64_t size = input_size;
  for (auto s : strides) size = (size + 2 * pad - kernel_size) / s + 1;
  return size;
}

DiscriminatorImpl::DiscriminatorImpl(const DiscriminatorConfig& config) : config_(config) {
  config_.validate();
  const auto widths = config_.channel_plan();
  int64_t in = config_.input_channels;
  for (std::size_t i = 0; i < DiscriminatorConfig::kLayerCount; ++i) {
    auto options = torch::nn::Conv2dOptions(in, widths[i], config_.kernel_size)
                       .stride(config_.strides[i])
                       .padding((config_.kernel_size - 1) / 2);
    layers_.push_back(
        register_module("conv_" + std::to_string(i), SpectralConv2d(options, config_.spectral_norm)));
    in = widths[i];
  }
}

torch::Tensor DiscriminatorImpl::forward(const torch::Tensor& frames, const torch::Tensor& mask) {
  require_video(frames, 3, "discriminator frames");
  require_video(mask, 1, "discriminator mask");
  if (frames.size(0) != mask.size(0) || frames.size(1) != mask.size(1) ||
      frames.size(3) != mask.size(3) || frames.size(4) != mask.size(4)) {
    throw ConfigError("discriminator frames and mask disagree on N, T, H or W");
  }
  const int64_t n = frames.size(0), t = frames.size(1);
  auto x = torch::cat({frames, mask}, 2);
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    x = temporal_shift(x, config_.shift);
    auto y = layers_[i]->forward(x.reshape({n * t, x.size(2), x.size(3), x.size(4)}));
    if (i + 1 < layers_.size()) {
      y = F::leaky_relu(y, F::LeakyReLUFuncOptions().negative_slope(config_.negative_slope));
    }
    x = y.view({n, t, y.size(1), y.size(2), y.size(3)});
  }
  return x.squeeze(2);
}

torch::Tensor composite_output(const torch::Tensor& raw, const torch::Tensor& input_frames,
                               const torch::Tensor& mask) {
  if (raw.sizes() != input_frames.sizes()) {
    throw ConfigError("composite_output: raw and input shapes differ");
  }
  if (mask.dim() != raw.dim()) throw ConfigError("composite_output: mask rank differs from frames");
  for (int64_t d = 0; d < raw.dim(); ++d) {
    if (mask.size(d) != raw.size(d) && mask.size(d) != 1) {
      throw ConfigError("composite_output: mask shape does not broadcast to the frames");
    }
  }
  return mask * raw + (1.0 - mask) * input_frames;
}

int64_t parameter_count(const torch::nn::Module& module) {
  int64_t total = 0;
  for (const auto& p : module.parameters()) total += p.numel();
  return total;
}

}  // namespace hmdr
