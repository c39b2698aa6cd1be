#pragma once

#include <torch/torch.h>

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "hmdr/attention.hpp"
#include "hmdr/temporal_shift.hpp"

namespace hmdr {

// Per-frame channel slots of the generator input.
namespace input_layout {
inline constexpr int64_t kMaskedRgb = 0;
inline constexpr int64_t kMask = 3;
inline constexpr int64_t kLandmarks = 4;
inline constexpr int64_t kReference = 5;
inline constexpr int64_t kChannels = 8;
}  // namespace input_layout

/// Conditioning for one batch of clips. All video tensors are N x T x C x H x W.
struct GeneratorInput {
  torch::Tensor masked_frames;  // C = 3, occluded pixels zeroed
  torch::Tensor mask;           // C = 1, 1 = occluded
  torch::Tensor landmark_maps;  // C = 1
  torch::Tensor reference;      // N x 3 x H x W, zero outside the mask

  /// Shapes agree and reference pixels outside the mask are exactly zero.
  void validate() const;

  /// N x T x 8 x H x W, reference broadcast along time.
  torch::Tensor stacked() const;
};

enum class LayerStage { kDownsampling, kDilation, kUpsampling };

struct GeneratorLayer {
  LayerStage stage;
  GatedConvOptions conv;
};

struct GeneratorConfig {
  int64_t input_channels = input_layout::kChannels;
  int64_t base_channels = 32;
  int64_t max_channels = 256;
  double negative_slope = 0.2;
  ShiftSpec shift{0.25, ShiftDirection::kOnline, true};
  bool attention_after_downsample = true;
  bool attention_before_dilation = true;
  std::array<int64_t, 4> dilations{2, 4, 8, 16};
  int64_t attention_reduction = 8;

  void validate() const;
  /// The 13 gated TSM convolutions in forward order.
  std::vector<GeneratorLayer> layer_plan() const;
  /// Total spatial down-sampling; H and W must be multiples of it.
  static constexpr int64_t kDownsamplingFactor = 4;
  static constexpr std::size_t kLayerCount = 13;
};

/// Gated TSM encoder / dilated bottleneck / decoder with two self-attention
/// blocks and no skip connections. Output in [0, 1] via (tanh + 1) / 2.
class GeneratorImpl : public torch::nn::Module {
 public:
  explicit GeneratorImpl(const GeneratorConfig& config = {});

  torch::Tensor forward(const GeneratorInput& input);
  /// N x T x 8 x H x W -> N x T x 3 x H x W.
  torch::Tensor forward(const torch::Tensor& stacked);

  const GeneratorConfig& config() const { return config_; }
  const std::vector<GatedTsmConv>& layers() const { return layers_; }
  SelfAttention& attention_after_downsample() { return attention_down_; }
  SelfAttention& attention_before_dilation() { return attention_dilation_; }

 private:
  GeneratorConfig config_;
  std::vector<GatedTsmConv> layers_;
  SelfAttention attention_down_{nullptr};
  SelfAttention attention_dilation_{nullptr};
  std::size_t attention_down_index_ = 0;
  std::size_t attention_dilation_index_ = 0;
};
TORCH_MODULE(Generator);

/// Conv2d whose weight is divided by the spectral norm of the convolution
/// operator at the current input size (not of the reshaped kernel matrix),
/// estimated with one power iteration per training-mode forward pass.
class SpectralConv2dImpl : public torch::nn::Module {
 public:
  SpectralConv2dImpl(const torch::nn::Conv2dOptions& options, bool spectral_norm);

  torch::Tensor forward(const torch::Tensor& x);
  torch::Tensor normalized_weight(int64_t height, int64_t width);

  torch::Tensor weight;
  torch::Tensor bias;
  torch::Tensor u;  // buffer, left singular vector estimate, 1 x C_out x h x w

 private:
  torch::Tensor convolve(const torch::Tensor& x, const torch::Tensor& w, const torch::Tensor& b) const;
  /// Transpose of the convolution, producing a 1 x C_in x height x width map.
  torch::Tensor adjoint(const torch::Tensor& y, const torch::Tensor& w, int64_t height, int64_t width) const;

  torch::nn::Conv2dOptions options_;
  bool spectral_norm_;
};
TORCH_MODULE(SpectralConv2d);

struct DiscriminatorConfig {
  int64_t input_channels = 4;  // RGB + mask
  int64_t base_channels = 32;
  int64_t max_channels = 128;
  int64_t kernel_size = 5;
  std::array<int64_t, 6> strides{2, 2, 2, 2, 1, 1};
  double negative_slope = 0.2;
  ShiftSpec shift{0.25, ShiftDirection::kBidirectional, false};
  bool spectral_norm = true;

  void validate() const;
  std::vector<int64_t> channel_plan() const;
  /// Patch-map spatial size produced for an input side length.
  int64_t output_size(int64_t input_size) const;
  static constexpr std::size_t kLayerCount = 6;
};

/// Six TSM 2D convolutions producing an N x T x h' x w' patch score map.
class DiscriminatorImpl : public torch::nn::Module {
 public:
  explicit DiscriminatorImpl(const DiscriminatorConfig& config = {});

  /// frames N x T x 3 x H x W, mask N x T x 1 x H x W.
  torch::Tensor forward(const torch::Tensor& frames, const torch::Tensor& mask);

  const DiscriminatorConfig& config() const { return config_; }
  const std::vector<SpectralConv2d>& layers() const { return layers_; }

 private:
  DiscriminatorConfig config_;
  std::vector<SpectralConv2d> layers_;
};
TORCH_MODULE(Discriminator);

/// mask * raw + (1 - mask) * input; outside the mask the input is returned
/// unchanged.
torch::Tensor composite_output(const torch::Tensor& raw, const torch::Tensor& input_frames,
                               const torch::Tensor& mask);

int64_t parameter_count(const torch::nn::Module& module);

}  // namespace hmdr
