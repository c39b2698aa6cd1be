#include "hmdr/metrics.hpp"

#include <Eigen/Dense>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <map>
#include <set>
#include <sstream>

#include "hmdr/errors.hpp"
#include "hmdr/image_io.hpp"

namespace hmdr {

namespace fs = std::filesystem;
namespace F = torch::nn::functional;
using nlohmann::json;

namespace {

void require_same_shape(const torch::Tensor& a, const torch::Tensor& b, const char* what) {
  if (!a.defined() || !b.defined() || a.sizes() != b.sizes()) {
    throw std::invalid_argument(std::string(what) + ": shape mismatch");
  }
}

torch::Tensor f64(const torch::Tensor& t) { return t.detach().to(torch::kFloat64); }

Eigen::MatrixXd to_eigen(const torch::Tensor& t) {
  auto c = f64(t).contiguous();
  if (c.dim() != 2 || c.size(0) != c.size(1)) throw std::invalid_argument("expected a square matrix");
  Eigen::MatrixXd m(c.size(0), c.size(1));
  auto acc = c.accessor<double, 2>();
  for (int64_t i = 0; i < c.size(0); ++i) {
    for (int64_t j = 0; j < c.size(1); ++j) m(i, j) = acc[i][j];
  }
  return m;
}

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m + m.transpose()));
  const Eigen::VectorXd root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose();
}

// Row / column bounds of mask == 1, as [top, height, left, width].
std::array<int64_t, 4> mask_bbox(const torch::Tensor& mask) {
  auto plane = mask.reshape({-1, mask.size(-2), mask.size(-1)}).amax(0) > 0.5;
  auto rows = torch::nonzero(plane.any(1)).flatten();
  auto cols = torch::nonzero(plane.any(0)).flatten();
  if (rows.numel() == 0) throw DataError("masked-region scoring needs a non-empty mask");
  const int64_t top = rows.min().item<int64_t>(), bottom = rows.max().item<int64_t>();
  const int64_t left = cols.min().item<int64_t>(), right = cols.max().item<int64_t>();
  return {top, bottom - top + 1, left, right - left + 1};
}

torch::Tensor crop(const torch::Tensor& frames, const std::array<int64_t, 4>& box) {
  return frames.narrow(-2, box[0], box[1]).narrow(-1, box[2], box[3]);
}

bool enough_for_fid(int64_t frames, int64_t dim) { return frames >= dim + 1; }

std::string format_value(double v, int decimals) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", decimals, v);
  return buf;
}

json value_json(double v) {
  if (std::isfinite(v)) return v;
  return std::isinf(v) ? json(v > 0 ? "inf" : "-inf") : json(nullptr);
}

json metrics_json(const MetricValues& m) {
  return {{"mse", value_json(m.mse)},
          {"psnr", value_json(m.psnr)},
          {"ssim", value_json(m.ssim)},
          {"lpips", value_json(m.lpips)},
          {"fid", m.fid ? value_json(*m.fid) : json(nullptr)}};
}

struct Column {
  const char* name;
  const char* arrow;
  int decimals;
};

constexpr std::array<Column, 5> kColumns{{
    {"MSE", "↓", 4}, {"PSNR", "↑", 2}, {"SSIM", "↑", 4}, {"LPIPS", "↓", 4}, {"FID", "↓", 4}}};
constexpr int kValueWidth = 10;

std::string pad_right(const std::string& s, std::size_t width) {
  return s.size() >= width ? s : s + std::string(width - s.size(), ' ');
}

std::string pad_left(const std::string& s, std::size_t width) {
  return s.size() >= width ? s : std::string(width - s.size(), ' ') + s;
}

std::string table(const std::string& first, const std::vector<std::pair<std::string, MetricValues>>& rows) {
  std::size_t label_width = first.size();
  for (const auto& r : rows) label_width = std::max(label_width, r.first.size());
  label_width += 2;
  std::ostringstream os;
  os << pad_right(first, label_width);
  for (const auto& c : kColumns) {
    // The arrow is one column wide but three bytes long.
    os << std::string(kValueWidth - std::strlen(c.name) - 1, ' ') << c.name << c.arrow;
  }
  os << '\n';
  for (const auto& [label, m] : rows) {
    os << pad_right(label, label_width);
    const double values[] = {m.mse, m.psnr, m.ssim, m.lpips};
    for (std::size_t i = 0; i < 4; ++i) os << pad_left(format_value(values[i], kColumns[i].decimals), kValueWidth);
    os << pad_left(m.fid ? format_value(*m.fid, kColumns[4].decimals) : "n/a", kValueWidth) << '\n';
  }
  return os.str();
}

struct ClipSet {
  std::vector<std::string> names;  // "." when frames sit directly in the root
};

ClipSet discover_clips(const fs::path& root) {
  if (!fs::is_directory(root)) throw DataError("ground-truth directory not found: " + root.string());
  ClipSet set;
  if (!list_frame_files(root).empty()) {
    set.names.push_back(".");
    return set;
  }
  for (const auto& e : fs::directory_iterator(root)) {
    if (e.is_directory() && !list_frame_files(e.path()).empty()) set.names.push_back(e.path().filename().string());
  }
  std::sort(set.names.begin(), set.names.end());
  if (set.names.empty()) throw DataError("no frame_*.png files under " + root.string());
  return set;
}

}  // namespace

double mse(const torch::Tensor& a, const torch::Tensor& b) {
  require_same_shape(a, b, "mse");
  return (f64(a) - f64(b)).pow(2).mean().item<double>();
}

double masked_mse(const torch::Tensor& a, const torch::Tensor& b, const torch::Tensor& mask) {
  require_same_shape(a, b, "masked_mse");
  const auto m = f64(mask).expand_as(a);
  const double count = m.sum().item<double>();
  if (count <= 0.0) throw DataError("masked_mse needs a non-empty mask");
  return ((f64(a) - f64(b)).pow(2) * m).sum().item<double>() / count;
}

double psnr_from_mse(double m, double peak) {
  if (!(peak > 0.0)) throw std::invalid_argument("psnr peak must be > 0");
  if (m < 0.0 || std::isnan(m)) throw std::invalid_argument("psnr needs mse >= 0");
  if (m == 0.0) return kPsnrIdentical;
  return 10.0 * std::log10(peak * peak / m);
}

double psnr(const torch::Tensor& a, const torch::Tensor& b, double peak) {
  return psnr_from_mse(mse(a, b), peak);
}

torch::Tensor gaussian_window(int size, double sigma) {
  if (size < 1 || !(sigma > 0.0)) throw std::invalid_argument("gaussian window needs size >= 1, sigma > 0");
  auto x = torch::arange(size, torch::kFloat64) - (size - 1) / 2.0;
  auto g = torch::exp(-(x * x) / (2.0 * sigma * sigma));
  return g / g.sum();
}

double ssim(const torch::Tensor& a, const torch::Tensor& b, const SsimOptions& o) {
  require_same_shape(a, b, "ssim");
  if (a.dim() < 3) throw std::invalid_argument("ssim expects [..., C, H, W]");
  const int64_t h = a.size(-2), w = a.size(-1);
  if (h < o.window || w < o.window) {
    throw std::invalid_argument("ssim: image " + std::to_string(h) + "x" + std::to_string(w) +
                                " is smaller than the " + std::to_string(o.window) + "x" +
                                std::to_string(o.window) + " window");
  }
  const auto g = gaussian_window(o.window, o.sigma);
  const auto kernel = torch::outer(g, g).view({1, 1, o.window, o.window});
  auto x = f64(a).reshape({-1, 1, h, w});
  auto y = f64(b).reshape({-1, 1, h, w});
  auto filt = [&](const torch::Tensor& t) { return F::conv2d(t, kernel); };
  const auto mu_x = filt(x), mu_y = filt(y);
  const auto sxx = filt(x * x) - mu_x * mu_x;
  const auto syy = filt(y * y) - mu_y * mu_y;
  const auto sxy = filt(x * y) - mu_x * mu_y;
  const double c1 = std::pow(o.k1 * o.peak, 2), c2 = std::pow(o.k2 * o.peak, 2);
  const auto map = ((2 * mu_x * mu_y + c1) * (2 * sxy + c2)) / ((mu_x * mu_x + mu_y * mu_y + c1) * (sxx + syy + c2));
  return map.mean().item<double>();
}

double lpips(const torch::Tensor& a, const torch::Tensor& b, const FeatureExtractor& extractor) {
  require_same_shape(a, b, "lpips");
  const auto fa = extractor.extract(as_frame_batch(f64(a)));
  const auto fb = extractor.extract(as_frame_batch(f64(b)));
  if (fa.size() != fb.size() || fa.empty()) throw ConfigError("feature extractor returned no stages");
  constexpr double kEps = 1e-10;
  auto unit = [](const torch::Tensor& f) { return f / (f.pow(2).sum(1, true).sqrt() + kEps); };
  torch::Tensor per_frame = torch::zeros({fa.front().size(0)}, torch::kFloat64);
  for (std::size_t s = 0; s < fa.size(); ++s) {
    const auto d = (unit(fa[s].to(torch::kFloat64)) - unit(fb[s].to(torch::kFloat64))).pow(2).sum(1);
    per_frame += d.mean({1, 2});
  }
  return per_frame.mean().item<double>();
}

torch::Tensor fid_features(const torch::Tensor& frames, const FeatureExtractor& extractor) {
  const auto stages = extractor.extract(as_frame_batch(f64(frames)));
  if (stages.empty()) throw ConfigError("feature extractor returned no stages");
  const auto& last = stages.back();
  if (last.dim() == 2) return last.to(torch::kFloat64);
  return last.to(torch::kFloat64).mean({2, 3});
}

double trace_sqrt_product(const torch::Tensor& a, const torch::Tensor& b) {
  const auto ea = to_eigen(a), eb = to_eigen(b);
  if (ea.rows() != eb.rows()) throw std::invalid_argument("covariance sizes differ");
  const auto root_a = psd_sqrt(ea);
  const Eigen::MatrixXd m = root_a * eb * root_a;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m + m.transpose()), Eigen::EigenvaluesOnly);
  return es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
}

double frechet_distance(const torch::Tensor& mu_a, const torch::Tensor& cov_a, const torch::Tensor& mu_b,
                        const torch::Tensor& cov_b) {
  const double mean_term = (f64(mu_a) - f64(mu_b)).pow(2).sum().item<double>();
  const double traces = f64(cov_a).trace().item<double>() + f64(cov_b).trace().item<double>();
  const double d = mean_term + traces - 2.0 * trace_sqrt_product(cov_a, cov_b);
  // Rounding can leave a tiny negative value for identical inputs.
  return std::max(d, 0.0);
}

double fid_from_features(const torch::Tensor& a, const torch::Tensor& b) {
  if (a.dim() != 2 || b.dim() != 2 || a.size(1) != b.size(1)) {
    throw std::invalid_argument("fid expects [N, d] feature sets of equal dimension");
  }
  const int64_t d = a.size(1);
  for (const auto* s : {&a, &b}) {
    if (!enough_for_fid(s->size(0), d)) {
      throw std::invalid_argument("fid needs at least d + 1 = " + std::to_string(d + 1) + " samples per set, got " +
                                  std::to_string(s->size(0)));
    }
  }
  auto stats = [](const torch::Tensor& x) {
    auto x64 = f64(x);
    auto mu = x64.mean(0);
    auto c = x64 - mu;
    return std::pair{mu, c.t().mm(c) / static_cast<double>(x.size(0) - 1)};
  };
  const auto [mu_a, cov_a] = stats(a);
  const auto [mu_b, cov_b] = stats(b);
  return frechet_distance(mu_a, cov_a, mu_b, cov_b);
}

double fid(const torch::Tensor& frames_a, const torch::Tensor& frames_b, const FeatureExtractor& extractor) {
  return fid_from_features(fid_features(frames_a, extractor), fid_features(frames_b, extractor));
}

std::string to_string(RegionMode mode) { return mode == RegionMode::kFullFrame ? "full" : "masked"; }

RegionMode region_mode_from_string(const std::string& name) {
  if (name == "full") return RegionMode::kFullFrame;
  if (name == "masked") return RegionMode::kMaskedRegion;
  throw ConfigError("unknown region mode '" + name + "' (expected full|masked)");
}

MetricValues evaluate_clip(const torch::Tensor& prediction, const torch::Tensor& ground_truth,
                           const torch::Tensor& mask, RegionMode mode, const FeatureExtractor& extractor) {
  require_same_shape(prediction, ground_truth, "evaluate_clip");
  MetricValues m;
  torch::Tensor p = prediction, g = ground_truth;
  if (mode == RegionMode::kMaskedRegion) {
    m.mse = masked_mse(p, g, mask);
    const auto box = mask_bbox(mask);
    p = crop(p, box);
    g = crop(g, box);
  } else {
    m.mse = mse(p, g);
  }
  m.psnr = psnr_from_mse(m.mse);
  m.ssim = ssim(p, g);
  m.lpips = lpips(p, g, extractor);
  const auto fp = fid_features(p, extractor);
  if (enough_for_fid(fp.size(0), fp.size(1))) m.fid = fid_from_features(fp, fid_features(g, extractor));
  return m;
}

void aggregate(ModelReport& model, const std::vector<torch::Tensor>& predictions,
               const std::vector<torch::Tensor>& ground_truths, const torch::Tensor& mask, RegionMode mode,
               const FeatureExtractor& extractor) {
  model.aggregate = {};
  if (model.clips.empty()) return;
  const double n = static_cast<double>(model.clips.size());
  for (const auto& c : model.clips) {
    model.aggregate.mse += c.values.mse / n;
    model.aggregate.psnr += c.values.psnr / n;
    model.aggregate.ssim += c.values.ssim / n;
    model.aggregate.lpips += c.values.lpips / n;
  }
  if (model.clips.size() == 1) {
    model.aggregate = model.clips.front().values;
    return;
  }
  std::vector<torch::Tensor> fp, fg;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    auto p = predictions[i], g = ground_truths[i];
    if (mode == RegionMode::kMaskedRegion) {
      const auto box = mask_bbox(mask);
      p = crop(p, box);
      g = crop(g, box);
    }
    fp.push_back(fid_features(p, extractor));
    fg.push_back(fid_features(g, extractor));
  }
  const auto a = torch::cat(fp), b = torch::cat(fg);
  if (enough_for_fid(a.size(0), a.size(1))) model.aggregate.fid = fid_from_features(a, b);
}

std::string render_report(const MetricsReport& report) {
  std::ostringstream os;
  os << "Extractor: " << report.extractor << '\n';
  os << "Region: " << (report.mode == RegionMode::kFullFrame ? "full frame" : "masked region only")
     << "  Mask: " << report.mask_descriptor << '\n';
  std::vector<std::pair<std::string, MetricValues>> rows;
  for (const auto& m : report.models) rows.emplace_back(m.label, m.aggregate);
  os << table("Model", rows);
  return os.str();
}

std::string render_clip_table(const ModelReport& model) {
  std::vector<std::pair<std::string, MetricValues>> rows;
  for (const auto& c : model.clips) rows.emplace_back(c.clip, c.values);
  return table("Clip", rows);
}

json report_to_json(const MetricsReport& report) {
  json models = json::array();
  for (const auto& m : report.models) {
    json clips = json::array();
    for (const auto& c : m.clips) {
      json cj = metrics_json(c.values);
      cj["clip"] = c.clip;
      cj["frames"] = c.frames;
      clips.push_back(cj);
    }
    models.push_back({{"label", m.label}, {"aggregate", metrics_json(m.aggregate)}, {"clips", clips}});
  }
  return {{"format", "hmdr-report"},
          {"version", 1},
          {"extractor", report.extractor},
          {"mask", report.mask_descriptor},
          {"region", to_string(report.mode)},
          {"models", models}};
}

std::vector<fs::path> render_plots(const MetricsReport& report, const fs::path& dir) {
  fs::create_directories(dir);
  std::vector<fs::path> written;
  constexpr int kW = 480, kH = 320, kMargin = 40;
  for (std::size_t ci = 0; ci < kColumns.size(); ++ci) {
    std::vector<std::pair<std::string, double>> bars;
    for (const auto& m : report.models) {
      const auto& a = m.aggregate;
      const double v = ci == 0 ? a.mse : ci == 1 ? a.psnr : ci == 2 ? a.ssim : ci == 3 ? a.lpips
                                                                                        : a.fid.value_or(NAN);
      if (std::isfinite(v)) bars.emplace_back(m.label, v);
    }
    cv::Mat img(kH, kW, CV_8UC3, cv::Scalar(255, 255, 255));
    cv::putText(img, kColumns[ci].name, {kMargin, 24}, cv::FONT_HERSHEY_SIMPLEX, 0.6, {0, 0, 0}, 1, cv::LINE_AA);
    double vmax = 0.0;
    for (const auto& b : bars) vmax = std::max(vmax, std::abs(b.second));
    const int slot = bars.empty() ? 0 : (kW - 2 * kMargin) / static_cast<int>(bars.size());
    for (std::size_t i = 0; i < bars.size(); ++i) {
      const int x0 = kMargin + static_cast<int>(i) * slot + slot / 6;
      const int x1 = kMargin + static_cast<int>(i + 1) * slot - slot / 6;
      const double frac = vmax > 0 ? std::abs(bars[i].second) / vmax : 0.0;
      const int top = kH - kMargin - static_cast<int>(frac * (kH - 3 * kMargin));
      cv::rectangle(img, {x0, top}, {x1, kH - kMargin}, cv::Scalar(180, 120, 60), cv::FILLED);
      cv::putText(img, bars[i].first, {x0, kH - kMargin / 2}, cv::FONT_HERSHEY_SIMPLEX, 0.4, {0, 0, 0}, 1,
                  cv::LINE_AA);
      cv::putText(img, format_value(bars[i].second, kColumns[ci].decimals), {x0, top - 4},
                  cv::FONT_HERSHEY_SIMPLEX, 0.4, {0, 0, 0}, 1, cv::LINE_AA);
    }
    std::string name = kColumns[ci].name;
    std::transform(name.begin(), name.end(), name.begin(), [](unsigned char c) { return std::tolower(c); });
    const auto path = dir / (name + ".png");
    if (!cv::imwrite(path.string(), img)) throw DataError("cannot write plot " + path.string());
    written.push_back(path);
  }
  return written;
}

MetricsReport evaluate_directories(const EvaluationRequest& request, const FeatureExtractor& extractor) {
  if (request.predictions.empty()) throw ConfigError("evaluate needs at least one prediction directory");
  const auto clips = discover_clips(request.ground_truth);

  // Alignment first, so every offender is reported before any scoring.
  std::vector<std::string> offenders;
  for (const auto& [label, dir] : request.predictions) {
    if (!fs::is_directory(dir)) {
      offenders.push_back(label + ": directory not found " + dir.string());
      continue;
    }
    for (const auto& clip : clips.names) {
      const auto gt_names = list_frame_files(request.ground_truth / clip);
      const auto pd = dir / clip;
      const auto pred_names = fs::is_directory(pd) ? list_frame_files(pd) : std::vector<std::string>{};
      const std::set<std::string> gs(gt_names.begin(), gt_names.end()), ps(pred_names.begin(), pred_names.end());
      for (const auto& n : gs) {
        if (!ps.count(n)) offenders.push_back(label + ": missing " + (fs::path(clip) / n).lexically_normal().string());
      }
      for (const auto& n : ps) {
        if (!gs.count(n)) offenders.push_back(label + ": unexpected " + (fs::path(clip) / n).lexically_normal().string());
      }
    }
  }
  if (!offenders.empty()) {
    std::ostringstream os;
    os << "prediction and ground-truth frames are misaligned (" << offenders.size() << " offenders):";
    for (const auto& o : offenders) os << "\n  " << o;
    throw DataError(os.str());
  }

  std::vector<torch::Tensor> gts;
  for (const auto& clip : clips.names) gts.push_back(read_clip(request.ground_truth / clip).frames);
  const int64_t h = gts.front().size(2), w = gts.front().size(3);
  for (std::size_t i = 0; i < gts.size(); ++i) {
    if (gts[i].size(2) != h || gts[i].size(3) != w) throw DataError("clip '" + clips.names[i] + "' has a different frame size");
  }

  MetricsReport report;
  report.extractor = extractor.descriptor();
  report.mode = request.mode;
  torch::Tensor mask;
  if (request.mask_file) {
    mask = read_mask_image(*request.mask_file);
    if (mask.size(1) != h || mask.size(2) != w) throw DataError("mask size does not match the frames");
    report.mask_descriptor = "file " + request.mask_file->filename().string();
  } else {
    mask = make_hmd_mask(h, w, request.geometry).masks[0];
    report.mask_descriptor = request.geometry.describe();
  }

  for (const auto& [label, dir] : request.predictions) {
    ModelReport model;
    model.label = label;
    std::vector<torch::Tensor> preds;
    for (std::size_t i = 0; i < clips.names.size(); ++i) {
      auto pred = read_clip(dir / clips.names[i]).frames;
      if (pred.sizes() != gts[i].sizes()) {
        throw DataError(label + ": clip '" + clips.names[i] + "' frame size differs from the ground truth");
      }
      ClipMetrics cm;
      cm.clip = clips.names[i] == "." ? fs::path(request.ground_truth).filename().string() : clips.names[i];
      cm.frames = pred.size(0);
      cm.values = evaluate_clip(pred, gts[i], mask, request.mode, extractor);
      model.clips.push_back(cm);
      preds.push_back(pred);
    }
    aggregate(model, preds, gts, mask, request.mode, extractor);
    report.models.push_back(std::move(model));
  }
  return report;
}

}  // namespace hmdr
