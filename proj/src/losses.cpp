#include "hmdr/losses.hpp"

#include <cmath>

#include "hmdr/errors.hpp"

namespace hmdr {

namespace {

void require_same_shape(const torch::Tensor& a, const torch::Tensor& b, const char* what) {
  if (!a.defined() || !b.defined() || a.sizes() != b.sizes()) {
    throw ConfigError(std::string(what) + ": shape mismatch");
  }
}

void require_finite(const torch::Tensor& t, const char* what) {
  if (!torch::isfinite(t).all().item<bool>()) {
    throw NumericalError(std::string(what) + ": non-finite scores");
  }
}

std::vector<torch::Tensor> run_extractor(const FeatureExtractor& extractor, const torch::Tensor& frames) {
  try {
    return extractor.extract(frames);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError("feature extractor '" + extractor.descriptor() + "' failed: " + e.what());
  }
}

}  // namespace

void LossWeights::validate() const {
  for (double w : {adv, fer, style, vgg, recon}) {
    if (!std::isfinite(w) || w < 0.0) throw ConfigError("loss weights must be finite and >= 0");
  }
}

torch::Tensor as_frame_batch(const torch::Tensor& clip) {
  if (!clip.defined() || clip.dim() < 4 || clip.size(-3) != 3) {
    throw ConfigError("expected RGB frames shaped [..., 3, H, W]");
  }
  return clip.reshape({-1, 3, clip.size(-2), clip.size(-1)});
}

torch::Tensor recon_loss(const torch::Tensor& output, const torch::Tensor& ground_truth) {
  require_same_shape(output, ground_truth, "recon_loss");
  return (output - ground_truth).abs().mean();
}

torch::Tensor vgg_loss(const torch::Tensor& output, const torch::Tensor& ground_truth,
                       const FeatureExtractor& extractor) {
  require_same_shape(output, ground_truth, "vgg_loss");
  const auto fo = run_extractor(extractor, as_frame_batch(output));
  const auto fg = run_extractor(extractor, as_frame_batch(ground_truth));
  if (fo.empty() || fo.size() != fg.size()) throw ConfigError("feature extractor returned no stages");
  auto total = torch::zeros({}, output.options());
  for (std::size_t s = 0; s < fo.size(); ++s) total = total + (fo[s] - fg[s]).abs().mean();
  return total;
}

torch::Tensor gram_matrix(const torch::Tensor& features) {
  if (features.dim() != 4) throw ConfigError("gram_matrix expects [B, C, H, W] features");
  const auto b = features.size(0), c = features.size(1);
  const auto hw = features.size(2) * features.size(3);
  auto f = features.reshape({b, c, hw});
  return torch::bmm(f, f.transpose(1, 2)) / static_cast<double>(c * hw);
}

torch::Tensor style_loss(const torch::Tensor& output, const torch::Tensor& ground_truth,
                         const FeatureExtractor& extractor) {
  require_same_shape(output, ground_truth, "style_loss");
  const auto fo = run_extractor(extractor, as_frame_batch(output));
  const auto fg = run_extractor(extractor, as_frame_batch(ground_truth));
  if (fo.empty() || fo.size() != fg.size()) throw ConfigError("feature extractor returned no stages");
  auto total = torch::zeros({}, output.options());
  for (std::size_t s = 0; s < fo.size(); ++s) {
    total = total + (gram_matrix(fo[s]) - gram_matrix(fg[s])).abs().mean();
  }
  return total;
}

torch::Tensor adv_loss_d(const torch::Tensor& real_scores, const torch::Tensor& fake_scores) {
  require_finite(real_scores, "adv_loss_d");
  require_finite(fake_scores, "adv_loss_d");
  return (fake_scores * 1.0).mean() + (real_scores * -1.0).mean();
}

torch::Tensor adv_loss_g(const torch::Tensor& fake_scores) {
  require_finite(fake_scores, "adv_loss_g");
  return -fake_scores.mean();
}

torch::Tensor fer_loss(const torch::Tensor& inputs, const torch::Tensor& outputs,
                       const ExpressionScorer& scorer) {
  require_same_shape(inputs, outputs, "fer_loss");
  const auto si = scorer.score(as_frame_batch(inputs));
  const auto so = scorer.score(as_frame_batch(outputs));
  if (si.dim() != 2 || si.size(1) != kExpressionClasses || so.sizes() != si.sizes()) {
    throw ConfigError("expression scorer '" + scorer.descriptor() + "' must return [B, 8] scores");
  }
  return (si - so).abs().mean(1).mean();
}

double total_loss(const LossTerms<double>& t, const LossWeights& w) {
  for (double v : {t.adv, t.fer, t.style, t.vgg, t.recon}) {
    if (!std::isfinite(v)) throw NumericalError("total_loss: non-finite loss component");
  }
  return w.adv * t.adv + w.style * t.style + w.vgg * t.vgg + w.fer * t.fer + w.recon * t.recon;
}

torch::Tensor total_loss(const LossTerms<torch::Tensor>& t, const LossWeights& w) {
  return w.adv * t.adv + w.style * t.style + w.vgg * t.vgg + w.fer * t.fer + w.recon * t.recon;
}

}  // namespace hmdr
