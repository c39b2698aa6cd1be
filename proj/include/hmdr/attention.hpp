#pragma once

#include <torch/torch.h>

#include <cstdint>

namespace hmdr {

/// Intermediate tensors of one self-attention pass. Frames are folded into
/// the batch axis: B = N * T, P = H * W positions.
struct AttentionMaps {
  torch::Tensor q;    // [B, P, Cq]
  torch::Tensor k;    // [B, Cq, P]
  torch::Tensor v;    // [B, C, P]
  torch::Tensor s;    // [B, P, P] raw scores, row = query position
  torch::Tensor a;    // [B, P, P] softmax over the key axis
  torch::Tensor y_a;  // [N, T, C, H, W]
};

/// Spatial self-attention applied per frame, residual with a learnable gain:
///   out = x + gamma * (softmax(Q K^T) V)
/// Q, K, V come from 1x1 convolutions; gamma starts at 0.
class SelfAttentionImpl : public torch::nn::Module {
 public:
  explicit SelfAttentionImpl(int64_t channels, int64_t reduction = 8);

  torch::Tensor forward(const torch::Tensor& features);
  torch::Tensor forward(const torch::Tensor& features, AttentionMaps& maps);

  int64_t channels() const { return channels_; }

  torch::nn::Conv2d query{nullptr};
  torch::nn::Conv2d key{nullptr};
  torch::nn::Conv2d value{nullptr};
  torch::Tensor gamma;

 private:
  int64_t channels_;
};
TORCH_MODULE(SelfAttention);

struct AttentionStats {
  torch::Tensor row_entropy;  // [B, P] entropy of each query's distribution (nats)
  torch::Tensor entropy;      // [B] mean row entropy per frame
  torch::Tensor peak;         // [B, P] argmax key index per query position
};

AttentionStats attention_rollout_stats(const AttentionMaps& maps);

}  // namespace hmdr
