#include "hmdr/synthetic.hpp"

#include <nlohmann/json.hpp>
#include <opencv2/imgproc.hpp>

#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include "hmdr/errors.hpp"
#include "hmdr/image_io.hpp"

namespace hmdr {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kPi = std::numbers::pi;

struct FacePoints {
  const FaceParams& f;
  LandmarkSet set;

  void put(int index, double u, double v) {
    set.points[index] = {static_cast<int>(std::lround(f.cx + u * f.rx)),
                         static_cast<int>(std::lround(f.cy + v * f.ry))};
  }
};

void eye(FacePoints& p, int first, double cu, double open) {
  const double hw = 0.17, hh = 0.09 * open, cv = -0.25;
  p.put(first + 0, cu - hw, cv);
  p.put(first + 1, cu - hw / 3, cv - hh);
  p.put(first + 2, cu + hw / 3, cv - hh);
  p.put(first + 3, cu + hw, cv);
  p.put(first + 4, cu + hw / 3, cv + hh);
  p.put(first + 5, cu - hw / 3, cv + hh);
}

cv::Scalar colour(const std::array<uint8_t, 3>& c, double scale = 1.0) {
  return {c[0] * scale, c[1] * scale, c[2] * scale};
}

std::vector<cv::Point> group_points(const LandmarkSet& set, int first, int last) {
  std::vector<cv::Point> pts;
  for (int i = first; i <= last; ++i) pts.emplace_back(set.points[i].x, set.points[i].y);
  return pts;
}

json to_json(const FaceParams& f) {
  return {{"cx", f.cx},         {"cy", f.cy},           {"rx", f.rx},
          {"ry", f.ry},         {"eye_open", f.eye_open}, {"smile", f.smile},
          {"mouth_open", f.mouth_open}, {"brow_raise", f.brow_raise}, {"skin", f.skin},
          {"background", f.background}, {"lips", f.lips}};
}

FaceParams from_json(const json& j) {
  FaceParams f;
  f.cx = j.at("cx");
  f.cy = j.at("cy");
  f.rx = j.at("rx");
  f.ry = j.at("ry");
  f.eye_open = j.at("eye_open");
  f.smile = j.at("smile");
  f.mouth_open = j.at("mouth_open");
  f.brow_raise = j.at("brow_raise");
  f.skin = j.at("skin").get<std::array<uint8_t, 3>>();
  f.background = j.at("background").get<std::array<uint8_t, 3>>();
  f.lips = j.at("lips").get<std::array<uint8_t, 3>>();
  return f;
}

}  // namespace

LandmarkSet face_landmarks(const FaceParams& face) {
  FacePoints p{face, {}};
  for (int i = 0; i <= 16; ++i) {
    const double phi = kPi - i * kPi / 16.0;
    p.put(i, 0.97 * std::cos(phi), 0.05 + 0.9 * std::sin(phi));
  }
  const double brow_v = -0.42 - 0.12 * face.brow_raise;
  for (int i = 0; i < 5; ++i) {
    const double s = i / 4.0;
    const double arch = 0.06 * std::sin(kPi * s);
    p.put(17 + i, -0.62 + 0.45 * s, brow_v - arch);
    p.put(26 - i, 0.62 - 0.45 * s, brow_v - arch);
  }
  for (int i = 0; i < 4; ++i) p.put(27 + i, 0.0, -0.28 + 0.12 * i);
  for (int i = 0; i < 5; ++i) {
    const double s = (i - 2) / 2.0;
    p.put(31 + i, 0.14 * s, 0.12 + 0.04 * (1.0 - std::abs(s)));
  }
  eye(p, 36, -0.36, face.eye_open);
  eye(p, 42, 0.36, face.eye_open);

  // Mouth: corners lift with smile, the lower lip drops with mouth_open.
  const double mv = 0.48, hw = 0.3 + 0.04 * face.smile;
  const double corner = mv - 0.08 * face.smile;
  const double gap = 0.16 * face.mouth_open;
  p.put(48, -hw, corner);
  p.put(49, -hw * 0.6, mv - 0.06);
  p.put(50, -hw * 0.25, mv - 0.08);
  p.put(51, 0.0, mv - 0.06);
  p.put(52, hw * 0.25, mv - 0.08);
  p.put(53, hw * 0.6, mv - 0.06);
  p.put(54, hw, corner);
  p.put(55, hw * 0.6, mv + 0.07 + gap);
  p.put(56, hw * 0.25, mv + 0.1 + gap);
  p.put(57, 0.0, mv + 0.11 + gap);
  p.put(58, -hw * 0.25, mv + 0.1 + gap);
  p.put(59, -hw * 0.6, mv + 0.07 + gap);
  p.put(60, -hw * 0.8, corner);
  p.put(61, -hw * 0.3, mv - 0.02);
  p.put(62, 0.0, mv - 0.02);
  p.put(63, hw * 0.3, mv - 0.02);
  p.put(64, hw * 0.8, corner);
  p.put(65, hw * 0.3, mv - 0.02 + gap);
  p.put(66, 0.0, mv - 0.02 + gap);
  p.put(67, -hw * 0.3, mv - 0.02 + gap);
  return p.set;
}

torch::Tensor render_face(const FaceParams& face, int height, int width) {
  if (height < 8 || width < 8) throw ConfigError("synthetic faces need at least 8x8 pixels");
  cv::Mat img(height, width, CV_8UC3, colour(face.background));
  const auto lm = face_landmarks(face);
  cv::ellipse(img, cv::Point(static_cast<int>(std::lround(face.cx)), static_cast<int>(std::lround(face.cy))),
              cv::Size(static_cast<int>(std::lround(face.rx)), static_cast<int>(std::lround(face.ry))), 0, 0,
              360, colour(face.skin), cv::FILLED, cv::LINE_8);

  const auto shade = colour(face.skin, 0.7);
  const cv::Scalar hair(60, 40, 30), pupil(25, 20, 20);
  std::vector<std::vector<cv::Point>> open{group_points(lm, 0, 16)};
  cv::polylines(img, open, false, shade, 1, cv::LINE_8);
  open = {group_points(lm, 17, 21), group_points(lm, 22, 26)};
  cv::polylines(img, open, false, hair, 1, cv::LINE_8);
  open = {group_points(lm, 27, 30), group_points(lm, 31, 35)};
  cv::polylines(img, open, false, shade, 1, cv::LINE_8);

  std::vector<std::vector<cv::Point>> eyes{group_points(lm, 36, 41), group_points(lm, 42, 47)};
  cv::fillPoly(img, eyes, pupil, cv::LINE_8);
  cv::polylines(img, eyes, true, pupil, 1, cv::LINE_8);

  std::vector<std::vector<cv::Point>> mouth{group_points(lm, 48, 59)};
  cv::fillPoly(img, mouth, colour(face.lips), cv::LINE_8);
  mouth = {group_points(lm, 60, 67)};
  cv::fillPoly(img, mouth, pupil, cv::LINE_8);
  cv::polylines(img, mouth, true, colour(face.lips, 0.6), 1, cv::LINE_8);

  auto hwc = torch::from_blob(img.data, {height, width, 3}, torch::kUInt8).clone();
  return hwc.permute({2, 0, 1}).contiguous().to(torch::kFloat32) / 255.0f;
}

std::vector<FaceParams> synthesize_track(const CorpusOptions& options, int clip_index) {
  std::mt19937_64 rng(options.seed * 1000003ULL + static_cast<uint64_t>(clip_index));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
  std::uniform_int_distribution<int> jitter(-1, 1);

  static constexpr std::array<std::array<uint8_t, 3>, 4> kSkins{
      {{236, 196, 164}, {214, 166, 128}, {176, 124, 92}, {120, 84, 60}}};
  FaceParams base;
  base.cx = options.width / 2.0 + uniform(-1.5, 1.5);
  base.cy = options.height / 2.0 + uniform(-1.0, 1.0);
  base.rx = options.width * uniform(0.33, 0.38);
  base.ry = options.height * uniform(0.41, 0.46);
  base.skin = kSkins[static_cast<std::size_t>(rng() % kSkins.size())];
  for (auto& c : base.background) c = static_cast<uint8_t>(uniform(20, 120));

  const int blink_period = 5 + static_cast<int>(rng() % 5);
  const int blink_phase = static_cast<int>(rng() % static_cast<uint64_t>(blink_period));
  const double smile_freq = uniform(0.04, 0.12), smile_phase = uniform(0, 2 * kPi);
  const double mouth_freq = uniform(0.05, 0.15), mouth_phase = uniform(0, 2 * kPi);
  const double brow_freq = uniform(0.03, 0.1), brow_phase = uniform(0, 2 * kPi);

  std::vector<FaceParams> track;
  for (int t = 0; t < options.frames; ++t) {
    FaceParams f = base;
    const int d = (t + blink_phase) % blink_period;
    f.eye_open = d == 0 ? 0.0 : (d == 1 || d == blink_period - 1) ? 0.5 : 1.0;
    f.smile = std::sin(2 * kPi * smile_freq * t + smile_phase);
    f.mouth_open = std::max(0.0, std::sin(2 * kPi * mouth_freq * t + mouth_phase));
    f.brow_raise = 0.5 + 0.5 * std::sin(2 * kPi * brow_freq * t + brow_phase);
    f.cx += jitter(rng);
    f.cy += jitter(rng);
    track.push_back(f);
  }
  return track;
}

ClipManifest write_synthetic_corpus(const fs::path& root, const CorpusOptions& options) {
  if (options.clips < 1 || options.frames < 1) throw ConfigError("corpus needs >= 1 clip and >= 1 frame");
  if (options.test_clips < 0 || options.test_clips > options.clips) {
    throw ConfigError("test_clips must lie in [0, clips]");
  }
  std::error_code ec;
  fs::create_directories(root, ec);
  if (ec || !fs::is_directory(root)) throw DataError("cannot create corpus directory " + root.string());

  ClipManifest manifest;
  manifest.root = root;
  manifest.clip_length = options.frames;
  for (int c = 0; c < options.clips; ++c) {
    char name[32];
    std::snprintf(name, sizeof(name), "clip_%03d", c);
    const auto dir = root / name;
    fs::create_directories(dir);
    const auto track = synthesize_track(options, c);
    LandmarkTrack marks;
    json faces = json::array();
    for (std::size_t t = 0; t < track.size(); ++t) {
      write_image(dir / frame_file_name(t), render_face(track[t], options.height, options.width));
      marks.push_back(face_landmarks(track[t]));
      faces.push_back(to_json(track[t]));
    }
    write_landmark_file(dir / "landmarks.txt", marks);
    std::ofstream(dir / "faces.json") << faces.dump(1) << '\n';

    ClipEntry entry;
    entry.name = name;
    entry.frames_dir = name;
    entry.landmark_file = fs::path(name) / "landmarks.txt";
    entry.split = c >= options.clips - options.test_clips ? Split::kTest : Split::kTrain;
    entry.frames = options.frames;
    manifest.clips.push_back(entry);
  }
  manifest.save(root / "manifest.json");
  return manifest;
}

std::vector<FaceParams> read_face_track(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read face track " + path.string());
  try {
    std::vector<FaceParams> out;
    for (const auto& j : json::parse(in)) out.push_back(from_json(j));
    return out;
  } catch (const json::exception& e) {
    throw DataError("malformed face track " + path.string() + ": " + e.what());
  }
}

SyntheticLandmarkProvider::SyntheticLandmarkProvider(std::vector<FaceParams> candidates)
    : candidates_(std::move(candidates)) {}

std::optional<LandmarkSet> SyntheticLandmarkProvider::detect(const torch::Tensor& frame) {
  if (frame.dim() != 3 || frame.size(0) != 3) throw std::invalid_argument("expected a 3 x H x W frame");
  const auto quantized = torch::round(frame.detach().to(torch::kFloat32).clamp(0, 1) * 255.0f);
  std::lock_guard<std::mutex> lock(mutex_);
  if (frame.size(1) != rendered_h_ || frame.size(2) != rendered_w_) {
    rendered_.clear();
    rendered_h_ = frame.size(1);
    rendered_w_ = frame.size(2);
  }
  for (std::size_t i = 0; i < candidates_.size(); ++i) {
    if (rendered_.size() <= i) {
      rendered_.push_back(torch::round(
          render_face(candidates_[i], static_cast<int>(rendered_h_), static_cast<int>(rendered_w_)) * 255.0f));
    }
    if (torch::equal(rendered_[i], quantized)) return face_landmarks(candidates_[i]);
  }
  return std::nullopt;
}

}  // namespace hmdr
