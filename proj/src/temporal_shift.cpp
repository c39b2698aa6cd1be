#include "hmdr/temporal_shift.hpp"

#include <cmath>
#include <stdexcept>

#include "hmdr/errors.hpp"

namespace hmdr {

namespace F = torch::nn::functional;

std::vector<double> shift_decompose_1d(std::span<const double> x, const ShiftKernel& w) {
  if (x.empty()) throw std::invalid_argument("shift_decompose_1d: empty sequence");
  for (double v : x) {
    if (!std::isfinite(v)) throw std::invalid_argument("shift_decompose_1d: non-finite input");
  }
  if (!std::isfinite(w.w1) || !std::isfinite(w.w2) || !std::isfinite(w.w3)) {
    throw std::invalid_argument("shift_decompose_1d: non-finite kernel tap");
  }

  const std::size_t n = x.size();
  // Shift step: no multiplications, just displaced copies with zero fill.
  std::vector<double> prev(n, 0.0), cur(x.begin(), x.end()), next(n, 0.0);
  for (std::size_t i = 1; i < n; ++i) prev[i] = x[i - 1];
  for (std::size_t i = 0; i + 1 < n; ++i) next[i] = x[i + 1];

  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = w.w1 * prev[i] + w.w2 * cur[i] + w.w3 * next[i];
  return y;
}

std::string to_string(ShiftDirection direction) {
  return direction == ShiftDirection::kOnline ? "online" : "bidirectional";
}

ShiftDirection shift_direction_from_string(const std::string& name) {
  if (name == "online") return ShiftDirection::kOnline;
  if (name == "bidirectional") return ShiftDirection::kBidirectional;
  throw ConfigError("unknown shift direction '" + name + "' (expected online|bidirectional)");
}

void ShiftSpec::validate() const {
  if (!(shift_fraction > 0.0 && shift_fraction <= 1.0)) {
    throw ConfigError("shift_fraction must lie in (0, 1], got " + std::to_string(shift_fraction));
  }
}

int64_t ShiftSpec::channels_per_direction(int64_t channels) const {
  validate();
  if (channels < 1) throw ConfigError("feature map needs at least one channel");
  return static_cast<int64_t>(std::floor(shift_fraction * static_cast<double>(channels) / 2.0));
}

namespace {

void check_feature_map(const torch::Tensor& f) {
  if (!f.defined() || f.dim() != 5) {
    throw ConfigError("expected an N x T x C x H x W feature map");
  }
  if (f.size(1) < 1 || f.size(2) < 1) throw ConfigError("feature map needs T >= 1 and C >= 1");
}

void check_shift_count(int64_t k, int64_t channels, ShiftDirection direction) {
  if (k < 0 || 2 * k > channels) {
    throw ConfigError("invalid shift: k=" + std::to_string(k) + " for " + std::to_string(channels) +
                      " channels (" + to_string(direction) + ")");
  }
}

// out[:, t] = x[:, t-1], zero at t = 0.
torch::Tensor from_past(const torch::Tensor& x) {
  const int64_t t = x.size(1);
  if (t == 1) return torch::zeros_like(x);
  return torch::cat({torch::zeros_like(x.narrow(1, 0, 1)), x.narrow(1, 0, t - 1)}, 1);
}

// out[:, t] = x[:, t+1], zero at t = T-1.
torch::Tensor from_future(const torch::Tensor& x) {
  const int64_t t = x.size(1);
  if (t == 1) return torch::zeros_like(x);
  return torch::cat({x.narrow(1, 1, t - 1), torch::zeros_like(x.narrow(1, 0, 1))}, 1);
}

}  // namespace

torch::Tensor temporal_shift(const torch::Tensor& features, int64_t k, ShiftDirection direction) {
  check_feature_map(features);
  const int64_t c = features.size(2);
  check_shift_count(k, c, direction);
  if (k == 0) return features;

  std::vector<torch::Tensor> parts;
  if (direction == ShiftDirection::kOnline) {
    parts.push_back(from_past(features.narrow(2, 0, 2 * k)));
  } else {
    parts.push_back(from_past(features.narrow(2, 0, k)));
    parts.push_back(from_future(features.narrow(2, k, k)));
  }
  if (2 * k < c) parts.push_back(features.narrow(2, 2 * k, c - 2 * k));
  return torch::cat(parts, 2);
}

torch::Tensor temporal_shift(const torch::Tensor& features, const ShiftSpec& spec) {
  check_feature_map(features);
  return temporal_shift(features, spec.channels_per_direction(features.size(2)), spec.direction);
}

torch::Tensor hard_shift_kernels(int64_t k, ShiftDirection direction, torch::Dtype dtype) {
  if (direction == ShiftDirection::kOnline) {
    auto kernels = torch::zeros({2 * k, 2}, torch::TensorOptions().dtype(dtype));
    if (k > 0) kernels.select(1, 0).fill_(1.0);
    return kernels;
  }
  auto kernels = torch::zeros({2 * k, 3}, torch::TensorOptions().dtype(dtype));
  if (k > 0) {
    kernels.narrow(0, 0, k).select(1, 0).fill_(1.0);
    kernels.narrow(0, k, k).select(1, 2).fill_(1.0);
  }
  return kernels;
}

torch::Tensor learnable_temporal_shift(const torch::Tensor& features, const torch::Tensor& kernels,
                                       int64_t k, ShiftDirection direction) {
  check_feature_map(features);
  const int64_t c = features.size(2);
  check_shift_count(k, c, direction);
  if (k == 0) return features;

  const int64_t taps = direction == ShiftDirection::kOnline ? 2 : 3;
  if (kernels.dim() != 2 || kernels.size(0) != 2 * k || kernels.size(1) != taps) {
    throw ConfigError("learnable shift kernels must have shape [" + std::to_string(2 * k) + ", " +
                      std::to_string(taps) + "]");
  }

  // Shift step on the affected channels, then a per-channel multiply-accumulate.
  auto shifted = features.narrow(2, 0, 2 * k);
  auto tap = [&](int64_t i) { return kernels.select(1, i).view({1, 1, 2 * k, 1, 1}); };
  auto mixed = tap(0) * from_past(shifted) + tap(1) * shifted;
  if (taps == 3) mixed = mixed + tap(2) * from_future(shifted);

  if (2 * k == c) return mixed;
  return torch::cat({mixed, features.narrow(2, 2 * k, c - 2 * k)}, 2);
}

GatedTsmConvImpl::GatedTsmConvImpl(const GatedConvOptions& options) : options_(options) {
  if (options.in_channels < 1 || options.out_channels < 1) {
    throw ConfigError("gated conv needs positive channel counts");
  }
  if (options.kernel_size < 1 || options.stride < 1 || options.dilation < 1) {
    throw ConfigError("gated conv needs positive kernel size, stride and dilation");
  }
  options.shift.validate();

  const int64_t padding = options.dilation * (options.kernel_size - 1) / 2;
  auto conv_options = torch::nn::Conv2dOptions(options.in_channels, options.out_channels,
                                               options.kernel_size)
                          .stride(options.stride)
                          .padding(padding)
                          .dilation(options.dilation);
  feature_conv = register_module("feature_conv", torch::nn::Conv2d(conv_options));
  gate_conv = register_module("gate_conv", torch::nn::Conv2d(conv_options));
  {
    // He init, doubled to offset the ~0.5 gate at initialisation.
    torch::NoGradGuard no_grad;
    const double fan_in = static_cast<double>(options.in_channels * options.kernel_size * options.kernel_size);
    const double slope = options.negative_slope;
    const double gain = options.activation ? std::sqrt(2.0 / (1.0 + slope * slope)) : 1.0;
    feature_conv->weight.normal_(0.0, 2.0 * gain / std::sqrt(fan_in));
    feature_conv->bias.zero_();
  }

  if (options.shift.learnable) {
    const int64_t k = options.shift.channels_per_direction(options.in_channels);
    shift_kernels = register_parameter("shift_kernels", hard_shift_kernels(k, options.shift.direction));
  }
}

torch::Tensor GatedTsmConvImpl::shift(const torch::Tensor& features) const {
  const int64_t k = options_.shift.channels_per_direction(options_.in_channels);
  if (options_.shift.learnable) {
    return learnable_temporal_shift(features, shift_kernels, k, options_.shift.direction);
  }
  return temporal_shift(features, k, options_.shift.direction);
}

torch::Tensor GatedTsmConvImpl::gate_and_convolve(const torch::Tensor& shifted) {
  const int64_t n = shifted.size(0), t = shifted.size(1);
  auto x = shifted.reshape({n * t, shifted.size(2), shifted.size(3), shifted.size(4)});
  if (options_.upsample) {
    x = F::interpolate(x, F::InterpolateFuncOptions()
                              .scale_factor(std::vector<double>{2.0, 2.0})
                              .mode(torch::kBilinear)
                              .align_corners(false));
  }
  auto feature = feature_conv->forward(x);
  if (options_.activation) {
    feature = F::leaky_relu(feature, F::LeakyReLUFuncOptions().negative_slope(options_.negative_slope));
  }
  auto y = feature * torch::sigmoid(gate_conv->forward(x));
  return y.view({n, t, y.size(1), y.size(2), y.size(3)});
}

torch::Tensor GatedTsmConvImpl::forward(const torch::Tensor& features) {
  check_feature_map(features);
  if (features.size(2) != options_.in_channels) {
    throw ConfigError("gated conv expects " + std::to_string(options_.in_channels) +
                      " channels, got " + std::to_string(features.size(2)));
  }
  return gate_and_convolve(shift(features));
}

}  // namespace hmdr
