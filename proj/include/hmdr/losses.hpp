#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace hmdr {

/// Maps an RGB frame batch [B, 3, H, W] to an ordered list of feature
/// tensors [B, C_s, H_s, W_s]. Implementations are deterministic and frozen.
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual std::vector<torch::Tensor> extract(const torch::Tensor& frames) const = 0;
  virtual std::string descriptor() const = 0;
};

inline constexpr int64_t kExpressionClasses = 8;

/// Maps an RGB frame batch [B, 3, H, W] to per-frame scores [B, 8] over
/// surprise, angry, sad, contempt, disgust, fear, neutral, happy.
class ExpressionScorer {
 public:
  virtual ~ExpressionScorer() = default;
  virtual torch::Tensor score(const torch::Tensor& frames) const = 0;
  virtual std::string descriptor() const = 0;
};

struct LossWeights {
  double adv = 1.0;
  double fer = 2.0;
  double style = 10.0;
  double vgg = 1.0;
  double recon = 1.0;

  void validate() const;
};

template <typename T>
struct LossTerms {
  T adv{};
  T fer{};
  T style{};
  T vgg{};
  T recon{};
};

// Clip arguments are [..., 3, H, W] tensors (T x 3 x H x W or
// N x T x 3 x H x W); leading axes are flattened into frames.

torch::Tensor recon_loss(const torch::Tensor& output, const torch::Tensor& ground_truth);
torch::Tensor vgg_loss(const torch::Tensor& output, const torch::Tensor& ground_truth,
                       const FeatureExtractor& extractor);
torch::Tensor style_loss(const torch::Tensor& output, const torch::Tensor& ground_truth,
                         const FeatureExtractor& extractor);
/// Channel Gram matrix of [B, C, H, W] features divided by C * H * W.
torch::Tensor gram_matrix(const torch::Tensor& features);
/// Critic loss mean(fake) - mean(real) (labels -1 real, +1 fake).
torch::Tensor adv_loss_d(const torch::Tensor& real_scores, const torch::Tensor& fake_scores);
/// Generator loss -mean(fake).
torch::Tensor adv_loss_g(const torch::Tensor& fake_scores);
/// Mean over frames of the mean absolute difference between the 8-way
/// expression scores of `inputs` and `outputs`.
torch::Tensor fer_loss(const torch::Tensor& inputs, const torch::Tensor& outputs,
                       const ExpressionScorer& scorer);

double total_loss(const LossTerms<double>& terms, const LossWeights& weights);
torch::Tensor total_loss(const LossTerms<torch::Tensor>& terms, const LossWeights& weights);

/// Flattens [..., 3, H, W] to [B, 3, H, W].
torch::Tensor as_frame_batch(const torch::Tensor& clip);

}  // namespace hmdr
