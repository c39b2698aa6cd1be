#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "hmdr/losses.hpp"

namespace hmdr {

struct ExtractorConfig {
  // identity | random-projection | torchscript
  std::string kind = "random-projection";
  uint64_t seed = 1234;
  std::vector<int64_t> stage_channels{8, 8};
  std::string weights_path;
};

struct ScorerConfig {
  // constant | random-projection | torchscript
  std::string kind = "random-projection";
  uint64_t seed = 4321;
  std::string weights_path;
};

/// One stage returning the frames themselves; reduces vgg_loss to L1.
class IdentityExtractor final : public FeatureExtractor {
 public:
  std::vector<torch::Tensor> extract(const torch::Tensor& frames) const override;
  std::string descriptor() const override { return "identity"; }
};

/// Frozen random 3x3 convolutions, LeakyReLU and 2x average pooling per
/// stage. Weights depend only on the seed.
class RandomProjectionExtractor final : public FeatureExtractor {
 public:
  RandomProjectionExtractor(uint64_t seed, std::vector<int64_t> stage_channels);
  std::vector<torch::Tensor> extract(const torch::Tensor& frames) const override;
  std::string descriptor() const override;

  const std::vector<torch::Tensor>& weights() const { return weights_; }

 private:
  uint64_t seed_;
  std::vector<torch::Tensor> weights_;  // [C_out, C_in, 3, 3], float64
};

class ConstantScorer final : public ExpressionScorer {
 public:
  explicit ConstantScorer(std::vector<double> scores);
  torch::Tensor score(const torch::Tensor& frames) const override;
  std::string descriptor() const override { return "constant"; }

 private:
  std::vector<double> scores_;
};

/// Frozen random conv features, global pooling, a random linear map and a
/// softmax over the 8 expression classes.
class RandomProjectionScorer final : public ExpressionScorer {
 public:
  explicit RandomProjectionScorer(uint64_t seed);
  torch::Tensor score(const torch::Tensor& frames) const override;
  std::string descriptor() const override;

 private:
  uint64_t seed_;
  torch::Tensor conv1_, conv2_, linear_;
};

/// Adapters for pretrained networks exported with TorchScript. The
/// extractor module returns a tensor or a tuple/list of tensors; the scorer
/// returns [B, 8].
std::unique_ptr<FeatureExtractor> load_torchscript_extractor(const std::string& path);
std::unique_ptr<ExpressionScorer> load_torchscript_scorer(const std::string& path);

std::shared_ptr<FeatureExtractor> make_feature_extractor(const ExtractorConfig& config);
std::shared_ptr<ExpressionScorer> make_expression_scorer(const ScorerConfig& config);

}  // namespace hmdr
