#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace hmdr {

/// Three temporal taps applied to x[i-1], x[i] and x[i+1].
struct ShiftKernel {
  double w1 = 0.0;
  double w2 = 1.0;
  double w3 = 0.0;
};

/// 3-tap convolution of a 1-D sequence computed as an explicit shift step
/// (x displaced by -1, 0, +1 with zero fill) followed by a multiply-accumulate.
/// Throws std::invalid_argument on empty input or non-finite values.
std::vector<double> shift_decompose_1d(std::span<const double> x, const ShiftKernel& w);

enum class ShiftDirection {
  kBidirectional,  // k channels from t-1, k channels from t+1
  kOnline,         // 2k channels from t-1, nothing from the future
};

std::string to_string(ShiftDirection direction);
ShiftDirection shift_direction_from_string(const std::string& name);

struct ShiftSpec {
  // Fraction of all channels that get displaced; split evenly between the
  // two directions for bidirectional shifting.
  double shift_fraction = 0.25;
  ShiftDirection direction = ShiftDirection::kOnline;
  bool learnable = false;

  void validate() const;

  /// k = floor(shift_fraction * C / 2). Online shifting moves 2k channels
  /// from the past, bidirectional moves k each way.
  int64_t channels_per_direction(int64_t channels) const;
};

/// Hard temporal shift of an N x T x C x H x W feature map. Vacated frames
/// are zero-filled. Throws ConfigError when k is out of range.
torch::Tensor temporal_shift(const torch::Tensor& features, int64_t k, ShiftDirection direction);
torch::Tensor temporal_shift(const torch::Tensor& features, const ShiftSpec& spec);

/// Learnable shift: every shifted channel is replaced by a temporal 3-tap
/// (bidirectional) or 2-tap over {t-1, t} (online) mix of its neighbours.
/// `kernels` has shape [2k, 3] or [2k, 2] respectively; unshifted channels
/// pass through.
torch::Tensor learnable_temporal_shift(const torch::Tensor& features, const torch::Tensor& kernels,
                                       int64_t k, ShiftDirection direction);

/// Kernels reproducing the hard shift exactly; the initial learnable state.
torch::Tensor hard_shift_kernels(int64_t k, ShiftDirection direction,
                                 torch::Dtype dtype = torch::kFloat32);

struct GatedConvOptions {
  int64_t in_channels = 0;
  int64_t out_channels = 0;
  int64_t kernel_size = 3;
  int64_t stride = 1;
  int64_t dilation = 1;
  // Bilinear x2 interpolation before the convolution (up-sampling layers).
  bool upsample = false;
  // LeakyReLU on the feature branch; disabled on the output layer.
  bool activation = true;
  double negative_slope = 0.2;
  ShiftSpec shift;
};

/// Gated convolution over temporally shifted channels:
///   y = act(conv_f(shift(x))) * sigmoid(conv_g(shift(x)))
/// Input and output are N x T x C x H x W.
class GatedTsmConvImpl : public torch::nn::Module {
 public:
  explicit GatedTsmConvImpl(const GatedConvOptions& options);

  torch::Tensor forward(const torch::Tensor& features);

  torch::Tensor shift(const torch::Tensor& features) const;
  /// Spatial part only (conv, activation, gating) on an already shifted map.
  torch::Tensor gate_and_convolve(const torch::Tensor& shifted);

  const GatedConvOptions& options() const { return options_; }

  torch::nn::Conv2d feature_conv{nullptr};
  torch::nn::Conv2d gate_conv{nullptr};
  // [2k, taps]; undefined unless options.shift.learnable.
  torch::Tensor shift_kernels;

 private:
  GatedConvOptions options_;
};
TORCH_MODULE(GatedTsmConv);

}  // namespace hmdr
