#include "hmdr/attention.hpp"

#include <algorithm>

#include "hmdr/errors.hpp"

namespace hmdr {

SelfAttentionImpl::SelfAttentionImpl(int64_t channels, int64_t reduction) : channels_(channels) {
  if (channels < 1 || reduction < 1) throw ConfigError("self-attention needs positive channels");
  const int64_t reduced = std::max<int64_t>(1, channels / reduction);
  query = register_module("query", torch::nn::Conv2d(torch::nn::Conv2dOptions(channels, reduced, 1)));
  key = register_module("key", torch::nn::Conv2d(torch::nn::Conv2dOptions(channels, reduced, 1)));
  value = register_module("value", torch::nn::Conv2d(torch::nn::Conv2dOptions(channels, channels, 1)));
  gamma = register_parameter("gamma", torch::zeros({1}));
}

torch::Tensor SelfAttentionImpl::forward(const torch::Tensor& features) {
  AttentionMaps maps;
  return forward(features, maps);
}

torch::Tensor SelfAttentionImpl::forward(const torch::Tensor& features, AttentionMaps& maps) {
  if (!features.defined() || features.dim() != 5) {
    throw ConfigError("self-attention expects an N x T x C x H x W feature map");
  }
  if (features.size(2) != channels_) {
    throw ConfigError("self-attention built for " + std::to_string(channels_) + " channels, got " +
                      std::to_string(features.size(2)));
  }
  const int64_t n = features.size(0), t = features.size(1), c = features.size(2);
  const int64_t h = features.size(3), w = features.size(4);
  const int64_t b = n * t, p = h * w;

  auto x = features.reshape({b, c, h, w});
  maps.q = query->forward(x).view({b, -1, p}).transpose(1, 2);
  maps.k = key->forward(x).view({b, -1, p});
  maps.v = value->forward(x).view({b, c, p});
  maps.s = torch::bmm(maps.q, maps.k);
  if (!torch::isfinite(maps.s).all().item<bool>()) {
    throw NumericalError("self-attention produced non-finite scores (max |s| = " +
                         std::to_string(maps.s.abs().max().item<double>()) + ")");
  }
  maps.a = torch::softmax(maps.s, /*dim=*/2);
  // y[:, :, i] = sum_j a[i, j] v[:, j]
  auto y = torch::bmm(maps.v, maps.a.transpose(1, 2));
  maps.y_a = y.view({n, t, c, h, w});
  return features + gamma * maps.y_a;
}

AttentionStats attention_rollout_stats(const AttentionMaps& maps) {
  if (!maps.a.defined() || maps.a.dim() != 3) {
    throw std::invalid_argument("attention_rollout_stats: expected a [B, P, P] attention tensor");
  }
  AttentionStats stats;
  auto a = maps.a.detach();
  // 0 * log 0 is taken as 0.
  auto terms = torch::where(a > 0, a * torch::log(a), torch::zeros_like(a));
  stats.row_entropy = -terms.sum(2);
  stats.entropy = stats.row_entropy.mean(1);
  stats.peak = a.argmax(2);
  return stats;
}

}  // namespace hmdr
