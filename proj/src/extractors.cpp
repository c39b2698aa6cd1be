#include "hmdr/extractors.hpp"

#include <torch/script.h>

#include <cmath>
#include <mutex>

#include "hmdr/errors.hpp"

namespace hmdr {

namespace F = torch::nn::functional;

namespace {

torch::Tensor seeded_normal(torch::Generator& gen, at::IntArrayRef shape, double scale) {
  return torch::randn(shape, gen, torch::TensorOptions().dtype(torch::kFloat64)) * scale;
}

torch::Tensor conv3x3(const torch::Tensor& x, const torch::Tensor& w, int64_t stride = 1) {
  return F::conv2d(x, w.to(x.dtype()), F::Conv2dFuncOptions().padding(1).stride(stride));
}

torch::Tensor leaky(const torch::Tensor& x) {
  return F::leaky_relu(x, F::LeakyReLUFuncOptions().negative_slope(0.2));
}

void check_frames(const torch::Tensor& frames) {
  if (!frames.defined() || frames.dim() != 4 || frames.size(1) != 3) {
    throw ConfigError("expected a [B, 3, H, W] frame batch");
  }
}

class TorchScriptExtractor final : public FeatureExtractor {
 public:
  TorchScriptExtractor(torch::jit::Module module, std::string path)
      : module_(std::move(module)), path_(std::move(path)) {
    module_.eval();
  }

  std::vector<torch::Tensor> extract(const torch::Tensor& frames) const override {
    check_frames(frames);
    torch::IValue out;
    {
      // jit modules do not declare thread-safety.
      std::lock_guard<std::mutex> lock(mutex_);
      out = module_.forward({frames});
    }
    std::vector<torch::Tensor> stages;
    if (out.isTensor()) {
      stages.push_back(out.toTensor());
    } else if (out.isTuple()) {
      for (const auto& v : out.toTupleRef().elements()) stages.push_back(v.toTensor());
    } else if (out.isList()) {
      for (const auto& v : out.toListRef()) stages.push_back(v.toTensor());
    } else {
      throw ConfigError("torchscript extractor must return a tensor, tuple or list");
    }
    return stages;
  }

  std::string descriptor() const override { return "torchscript:" + path_; }

 private:
  mutable torch::jit::Module module_;
  mutable std::mutex mutex_;
  std::string path_;
};

class TorchScriptScorer final : public ExpressionScorer {
 public:
  TorchScriptScorer(torch::jit::Module module, std::string path)
      : module_(std::move(module)), path_(std::move(path)) {
    module_.eval();
  }

  torch::Tensor score(const torch::Tensor& frames) const override {
    check_frames(frames);
    std::lock_guard<std::mutex> lock(mutex_);
    auto out = module_.forward({frames});
    if (!out.isTensor()) throw ConfigError("torchscript scorer must return a tensor");
    return out.toTensor();
  }

  std::string descriptor() const override { return "torchscript:" + path_; }

 private:
  mutable torch::jit::Module module_;
  mutable std::mutex mutex_;
  std::string path_;
};

torch::jit::Module load_module(const std::string& path) {
  try {
    return torch::jit::load(path);
  } catch (const std::exception& e) {
    throw ConfigError("cannot load torchscript module '" + path + "': " + e.what());
  }
}

}  // namespace

std::vector<torch::Tensor> IdentityExtractor::extract(const torch::Tensor& frames) const {
  check_frames(frames);
  return {frames};
}

RandomProjectionExtractor::RandomProjectionExtractor(uint64_t seed, std::vector<int64_t> stage_channels)
    : seed_(seed) {
  if (stage_channels.empty()) throw ConfigError("random-projection extractor needs >= 1 stage");
  auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
  int64_t in = 3;
  for (auto c : stage_channels) {
    if (c < 1) throw ConfigError("random-projection stage widths must be positive");
    weights_.push_back(seeded_normal(gen, {c, in, 3, 3}, 1.0 / std::sqrt(9.0 * in)));
    in = c;
  }
}

std::vector<torch::Tensor> RandomProjectionExtractor::extract(const torch::Tensor& frames) const {
  check_frames(frames);
  std::vector<torch::Tensor> stages;
  auto x = frames;
  for (const auto& w : weights_) {
    x = leaky(conv3x3(x, w));
    if (x.size(2) >= 2 && x.size(3) >= 2) x = F::avg_pool2d(x, F::AvgPool2dFuncOptions(2));
    stages.push_back(x);
  }
  return stages;
}

std::string RandomProjectionExtractor::descriptor() const {
  std::string d = "random-projection(seed=" + std::to_string(seed_) + ",stages=";
  for (std::size_t i = 0; i < weights_.size(); ++i) {
    d += (i ? "/" : "") + std::to_string(weights_[i].size(0));
  }
  return d + ")";
}

ConstantScorer::ConstantScorer(std::vector<double> scores) : scores_(std::move(scores)) {}

torch::Tensor ConstantScorer::score(const torch::Tensor& frames) const {
  check_frames(frames);
  auto row = torch::tensor(scores_, torch::TensorOptions().dtype(torch::kFloat64)).to(frames.dtype());
  return row.unsqueeze(0).expand({frames.size(0), -1}).contiguous();
}

RandomProjectionScorer::RandomProjectionScorer(uint64_t seed) : seed_(seed) {
  auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
  conv1_ = seeded_normal(gen, {8, 3, 3, 3}, 1.0 / std::sqrt(27.0));
  conv2_ = seeded_normal(gen, {16, 8, 3, 3}, 1.0 / std::sqrt(72.0));
  linear_ = seeded_normal(gen, {kExpressionClasses, 16}, 4.0 / std::sqrt(16.0));
}

torch::Tensor RandomProjectionScorer::score(const torch::Tensor& frames) const {
  check_frames(frames);
  auto x = leaky(conv3x3(frames, conv1_, 2));
  x = leaky(conv3x3(x, conv2_, 2));
  auto pooled = x.mean({2, 3});
  auto logits = torch::matmul(pooled, linear_.to(pooled.dtype()).t());
  return torch::softmax(logits, 1);
}

std::string RandomProjectionScorer::descriptor() const {
  return "random-projection-scorer(seed=" + std::to_string(seed_) + ")";
}

std::unique_ptr<FeatureExtractor> load_torchscript_extractor(const std::string& path) {
  return std::make_unique<TorchScriptExtractor>(load_module(path), path);
}

std::unique_ptr<ExpressionScorer> load_torchscript_scorer(const std::string& path) {
  return std::make_unique<TorchScriptScorer>(load_module(path), path);
}

std::shared_ptr<FeatureExtractor> make_feature_extractor(const ExtractorConfig& config) {
  if (config.kind == "identity") return std::make_shared<IdentityExtractor>();
  if (config.kind == "random-projection") {
    return std::make_shared<RandomProjectionExtractor>(config.seed, config.stage_channels);
  }
  if (config.kind == "torchscript") return load_torchscript_extractor(config.weights_path);
  throw ConfigError("unknown feature extractor kind '" + config.kind + "'");
}

std::shared_ptr<ExpressionScorer> make_expression_scorer(const ScorerConfig& config) {
  if (config.kind == "constant") {
    return std::make_shared<ConstantScorer>(std::vector<double>(kExpressionClasses, 1.0 / 8.0));
  }
  if (config.kind == "random-projection") return std::make_shared<RandomProjectionScorer>(config.seed);
  if (config.kind == "torchscript") return load_torchscript_scorer(config.weights_path);
  throw ConfigError("unknown expression scorer kind '" + config.kind + "'");
}

}  // namespace hmdr
