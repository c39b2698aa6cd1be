#pragma once

#include <torch/torch.h>

#include <nlohmann/json.hpp>

#include <filesystem>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "hmdr/data.hpp"
#include "hmdr/losses.hpp"

namespace hmdr {

// Frame tensors are [..., C, H, W] in [0, peak]; everything is reduced in
// float64.

double mse(const torch::Tensor& a, const torch::Tensor& b);
/// Mean squared difference over pixels where mask == 1. `mask` is [..., 1, H, W]
/// broadcastable against the frames.
double masked_mse(const torch::Tensor& a, const torch::Tensor& b, const torch::Tensor& mask);

/// Returned in place of PSNR when the images are identical.
inline constexpr double kPsnrIdentical = std::numeric_limits<double>::infinity();
double psnr_from_mse(double mse, double peak = 1.0);
double psnr(const torch::Tensor& a, const torch::Tensor& b, double peak = 1.0);

struct SsimOptions {
  int window = 11;
  double sigma = 1.5;
  double peak = 1.0;
  double k1 = 0.01;
  double k2 = 0.03;
};

/// Normalised 1-D Gaussian taps (float64).
torch::Tensor gaussian_window(int size, double sigma);
/// Mean of the local SSIM map over valid window positions, channels and
/// frames. Throws std::invalid_argument when the image is smaller than the window.
double ssim(const torch::Tensor& a, const torch::Tensor& b, const SsimOptions& options = {});

/// Per-position unit-normalised features, squared difference summed over
/// channels with unit weights, spatial mean, summed over stages, averaged over
/// frames. Identical in form to the learned metric with its linear heads set to 1.
double lpips(const torch::Tensor& a, const torch::Tensor& b, const FeatureExtractor& extractor);

/// [N, d] float64: last extractor stage, global average pooled.
torch::Tensor fid_features(const torch::Tensor& frames, const FeatureExtractor& extractor);
/// tr((a b)^{1/2}) for symmetric PSD a and b, via the eigendecomposition of
/// the symmetric product sqrt(a) b sqrt(a) with negative eigenvalues clamped.
double trace_sqrt_product(const torch::Tensor& a, const torch::Tensor& b);
double frechet_distance(const torch::Tensor& mu_a, const torch::Tensor& cov_a, const torch::Tensor& mu_b,
                        const torch::Tensor& cov_b);
/// Feature sets [N, d]; each needs at least d + 1 rows.
double fid_from_features(const torch::Tensor& a, const torch::Tensor& b);
double fid(const torch::Tensor& frames_a, const torch::Tensor& frames_b, const FeatureExtractor& extractor);

enum class RegionMode { kFullFrame, kMaskedRegion };
std::string to_string(RegionMode mode);
RegionMode region_mode_from_string(const std::string& name);

struct MetricValues {
  double mse = 0.0;
  double psnr = 0.0;
  double ssim = 0.0;
  double lpips = 0.0;
  std::optional<double> fid;  // empty when a clip has too few frames
};

struct ClipMetrics {
  std::string clip;
  int64_t frames = 0;
  MetricValues values;
};

struct ModelReport {
  std::string label;
  std::vector<ClipMetrics> clips;
  MetricValues aggregate;
};

struct MetricsReport {
  std::string extractor;
  std::string mask_descriptor;
  RegionMode mode = RegionMode::kFullFrame;
  std::vector<ModelReport> models;
};

/// Scores one clip. In masked mode MSE/PSNR use mask == 1 pixels and
/// SSIM/LPIPS/FID use the mask's bounding box.
MetricValues evaluate_clip(const torch::Tensor& prediction, const torch::Tensor& ground_truth,
                           const torch::Tensor& mask, RegionMode mode, const FeatureExtractor& extractor);

/// Clip means for MSE, PSNR, SSIM and LPIPS; FID over the pooled frames of all clips.
void aggregate(ModelReport& model, const std::vector<torch::Tensor>& predictions,
               const std::vector<torch::Tensor>& ground_truths, const torch::Tensor& mask, RegionMode mode,
               const FeatureExtractor& extractor);

/// Fixed-width table, one row per model, arrows marking metric direction.
std::string render_report(const MetricsReport& report);
/// Per-clip table for one model.
std::string render_clip_table(const ModelReport& model);
nlohmann::json report_to_json(const MetricsReport& report);
/// One bar chart PNG per metric; returns the written files.
std::vector<std::filesystem::path> render_plots(const MetricsReport& report, const std::filesystem::path& dir);

struct EvaluationRequest {
  std::filesystem::path ground_truth;
  std::vector<std::pair<std::string, std::filesystem::path>> predictions;  // label, dir
  std::optional<std::filesystem::path> mask_file;
  MaskGeometry geometry;
  RegionMode mode = RegionMode::kFullFrame;
};

/// Clips are either frame_*.png files directly in the directory or one
/// sub-directory per clip; prediction directories must mirror the ground
/// truth file for file.
MetricsReport evaluate_directories(const EvaluationRequest& request, const FeatureExtractor& extractor);

}  // namespace hmdr
