#include "hmdr/data.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "hmdr/errors.hpp"
#include "hmdr/image_io.hpp"
#include "hmdr/landmarks.hpp"

namespace hmdr {

namespace fs = std::filesystem;
using nlohmann::json;

void VideoClip::validate() const {
  if (!frames.defined() || frames.dim() != 4 || frames.size(1) != 3 || frames.size(0) < 1) {
    throw ConfigError("video clip must be T x 3 x H x W with T >= 1");
  }
  if (!torch::isfinite(frames).all().item<bool>()) throw NumericalError("video clip has non-finite values");
  if (frames.min().item<double>() < 0.0 || frames.max().item<double>() > 1.0) {
    throw ConfigError("video clip values must lie in [0, 1]");
  }
}

void MaskSequence::validate() const {
  if (!masks.defined() || masks.dim() != 4 || masks.size(1) != 1 || masks.size(0) < 1) {
    throw ConfigError("mask sequence must be T x 1 x H x W with T >= 1");
  }
  if (!((masks == 0) | (masks == 1)).all().item<bool>()) throw ConfigError("mask values must be 0 or 1");
}

bool MaskSequence::is_static() const {
  return torch::equal(masks, masks.narrow(0, 0, 1).expand_as(masks));
}

MaskSequence MaskSequence::broadcast_to(int64_t frames) const {
  if (masks.size(0) == frames) return *this;
  if (masks.size(0) != 1) {
    throw ConfigError("cannot broadcast a " + std::to_string(masks.size(0)) + "-frame mask to " +
                      std::to_string(frames) + " frames");
  }
  return {masks.expand({frames, -1, -1, -1}).contiguous()};
}

void MaskGeometry::validate() const {
  auto in_unit = [](double v) { return std::isfinite(v) && v >= 0.0 && v <= 1.0; };
  if (!in_unit(top) || !in_unit(bottom) || !in_unit(left) || !in_unit(right) || !in_unit(corner_radius)) {
    throw ConfigError("mask geometry fractions must lie in [0, 1]");
  }
  if (top > bottom || left > right) throw ConfigError("mask geometry has top > bottom or left > right");
}

std::string MaskGeometry::describe() const {
  std::ostringstream os;
  os << "hmd-rect rows[" << top << "," << bottom << "] cols[" << left << "," << right
     << "] radius " << corner_radius;
  return os.str();
}

MaskSequence make_hmd_mask(int64_t height, int64_t width, const MaskGeometry& g, int64_t frames) {
  if (height < 1 || width < 1 || frames < 1) throw ConfigError("mask size must be positive");
  g.validate();
  auto mask = torch::zeros({1, 1, height, width});
  const double hx = (g.right - g.left) * 0.5 * static_cast<double>(width);
  const double hy = (g.bottom - g.top) * 0.5 * static_cast<double>(height);
  if (hx > 0.0 && hy > 0.0) {
    const double cx = (g.left + g.right) * 0.5 * static_cast<double>(width);
    const double cy = (g.top + g.bottom) * 0.5 * static_cast<double>(height);
    const double r = g.corner_radius * std::min(hx, hy);
    auto acc = mask.accessor<float, 4>();
    for (int64_t y = 0; y < height; ++y) {
      const double dy = std::abs(static_cast<double>(y) + 0.5 - cy);
      if (dy > hy) continue;
      for (int64_t x = 0; x < width; ++x) {
        const double dx = std::abs(static_cast<double>(x) + 0.5 - cx);
        if (dx > hx) continue;
        const double ex = dx - (hx - r), ey = dy - (hy - r);
        if (ex <= 0.0 || ey <= 0.0 || ex * ex + ey * ey <= r * r) acc[0][0][y][x] = 1.f;
      }
    }
  }
  return {mask.expand({frames, -1, -1, -1}).contiguous()};
}

namespace {

void require_matching(const VideoClip& clip, const MaskSequence& mask) {
  clip.validate();
  mask.validate();
  if (mask.length() != clip.length() || mask.masks.size(2) != clip.height() ||
      mask.masks.size(3) != clip.width()) {
    throw ConfigError("mask shape does not match the clip");
  }
}

}  // namespace

VideoClip apply_mask(const VideoClip& clip, const MaskSequence& mask) {
  require_matching(clip, mask);
  return {clip.frames * (1.0f - mask.masks), clip.fps};
}

torch::Tensor prepare_reference(const VideoClip& clip, const MaskSequence& mask, int64_t index) {
  require_matching(clip, mask);
  if (index < 0 || index >= clip.length()) {
    throw std::out_of_range("reference index " + std::to_string(index) + " outside a clip of " +
                            std::to_string(clip.length()) + " frames");
  }
  return clip.frames[index] * mask.masks[index];
}

VideoClip read_clip(const fs::path& dir, int64_t max_frames) {
  auto names = list_frame_files(dir);
  if (names.empty()) throw DataError("no frame_*.png files in " + dir.string());
  if (max_frames >= 0 && static_cast<int64_t>(names.size()) > max_frames) names.resize(max_frames);
  std::vector<torch::Tensor> frames;
  for (const auto& n : names) {
    auto img = read_image(dir / n);
    if (img.size(0) != 3) throw DataError("expected an RGB frame: " + (dir / n).string());
    if (!frames.empty() && img.sizes() != frames.front().sizes()) {
      throw DataError("frame size differs within clip: " + (dir / n).string());
    }
    frames.push_back(img);
  }
  return {torch::stack(frames), std::nullopt};
}

void write_clip(const fs::path& dir, const VideoClip& clip) {
  clip.validate();
  fs::create_directories(dir);
  for (int64_t t = 0; t < clip.length(); ++t) {
    write_image(dir / frame_file_name(static_cast<std::size_t>(t)), clip.frames[t]);
  }
}

std::string to_string(Split split) { return split == Split::kTrain ? "train" : "test"; }

Split split_from_string(const std::string& name) {
  if (name == "train") return Split::kTrain;
  if (name == "test") return Split::kTest;
  throw ConfigError("unknown split '" + name + "' (expected train|test)");
}

ClipManifest ClipManifest::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read manifest " + path.string());
  ClipManifest m;
  try {
    const auto j = json::parse(in);
    m.root = path.parent_path();
    m.clip_length = j.at("clip_length").get<int64_t>();
    for (const auto& c : j.at("clips")) {
      ClipEntry e;
      e.name = c.at("name").get<std::string>();
      e.frames_dir = c.at("frames_dir").get<std::string>();
      e.landmark_file = c.at("landmarks").get<std::string>();
      e.split = split_from_string(c.at("split").get<std::string>());
      e.frames = c.at("frames").get<int64_t>();
      m.clips.push_back(std::move(e));
    }
  } catch (const json::exception& e) {
    throw DataError("malformed manifest " + path.string() + ": " + e.what());
  } catch (const ConfigError& e) {
    throw DataError("malformed manifest " + path.string() + ": " + e.what());
  }
  return m;
}

void ClipManifest::save(const fs::path& path) const {
  json j;
  j["format"] = "hmdr-manifest";
  j["version"] = 1;
  j["clip_length"] = clip_length;
  j["clips"] = json::array();
  for (const auto& e : clips) {
    j["clips"].push_back({{"name", e.name},
                          {"frames_dir", e.frames_dir.generic_string()},
                          {"landmarks", e.landmark_file.generic_string()},
                          {"split", to_string(e.split)},
                          {"frames", e.frames}});
  }
  std::ofstream out(path);
  if (!out) throw DataError("cannot write manifest " + path.string());
  out << j.dump(2) << '\n';
}

void ClipManifest::validate() const {
  if (clip_length < 1) throw DataError("manifest clip_length must be >= 1");
  for (const auto& e : clips) {
    const auto dir = root / e.frames_dir;
    if (!fs::is_directory(dir)) throw DataError("clip '" + e.name + "': missing frame directory " + dir.string());
    const auto on_disk = static_cast<int64_t>(list_frame_files(dir).size());
    if (on_disk < clip_length || e.frames < clip_length) {
      throw DataError("clip '" + e.name + "': " + std::to_string(on_disk) + " frames, needs " +
                      std::to_string(clip_length));
    }
    if (!fs::is_regular_file(root / e.landmark_file)) {
      throw DataError("clip '" + e.name + "': missing landmark file " + (root / e.landmark_file).string());
    }
  }
}

std::vector<ClipEntry> ClipManifest::clips_in(Split split) const {
  std::vector<ClipEntry> out;
  for (const auto& e : clips) {
    if (e.split == split) out.push_back(e);
  }
  return out;
}

ClipManifest scan_frame_directories(const fs::path& root, int64_t clip_length, int64_t test_clips,
                                    const std::string& landmark_file_name) {
  if (!fs::is_directory(root)) throw DataError("dataset root is not a directory: " + root.string());
  std::vector<std::string> names;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory() && !list_frame_files(entry.path()).empty()) {
      names.push_back(entry.path().filename().string());
    }
  }
  std::sort(names.begin(), names.end());
  ClipManifest m;
  m.root = root;
  m.clip_length = clip_length;
  const auto n = static_cast<int64_t>(names.size());
  for (int64_t i = 0; i < n; ++i) {
    ClipEntry e;
    e.name = names[i];
    e.frames_dir = names[i];
    e.landmark_file = fs::path(names[i]) / landmark_file_name;
    e.split = i >= n - test_clips ? Split::kTest : Split::kTrain;
    e.frames = static_cast<int64_t>(list_frame_files(root / names[i]).size());
    m.clips.push_back(std::move(e));
  }
  return m;
}

LoadedClip load_clip(const ClipManifest& manifest, const ClipEntry& entry) {
  LoadedClip loaded;
  loaded.name = entry.name;
  try {
    loaded.clip = read_clip(manifest.root / entry.frames_dir, entry.frames);
    const auto track = read_landmark_file(manifest.root / entry.landmark_file);
    if (static_cast<int64_t>(track.size()) < loaded.clip.length()) {
      throw DataError("landmark file has " + std::to_string(track.size()) + " frames, clip has " +
                      std::to_string(loaded.clip.length()));
    }
    LandmarkTrack used(track.begin(), track.begin() + loaded.clip.length());
    loaded.landmark_maps = landmark_maps(used, static_cast<int>(loaded.clip.height()),
                                         static_cast<int>(loaded.clip.width()));
  } catch (const DataError& e) {
    throw DataError("clip '" + entry.name + "': " + e.what());
  }
  return loaded;
}

TrainingBatch assemble_batch(std::span<const ClipWindow> windows, const MaskSequence& mask,
                             bool use_landmarks) {
  if (windows.empty()) throw ConfigError("assemble_batch needs at least one window");
  const int64_t length = windows.front().length;
  if (mask.length() != length) throw ConfigError("mask length does not match the window length");

  std::vector<torch::Tensor> gt, masked, marks, refs;
  TrainingBatch batch;
  for (const auto& w : windows) {
    if (w.clip == nullptr || w.length != length) throw ConfigError("inconsistent clip windows");
    if (w.start < 0 || w.start + length > w.clip->clip.length()) {
      throw ConfigError("window exceeds clip '" + w.clip->name + "'");
    }
    VideoClip window{w.clip->clip.frames.narrow(0, w.start, length), std::nullopt};
    gt.push_back(window.frames);
    masked.push_back(apply_mask(window, mask).frames);
    refs.push_back(prepare_reference(window, mask, w.reference_offset));
    auto lm = w.clip->landmark_maps.narrow(0, w.start, length);
    marks.push_back(use_landmarks ? lm : torch::zeros_like(lm));
    batch.clip_names.push_back(w.clip->name);
    batch.starts.push_back(w.start);
  }
  batch.ground_truth = torch::stack(gt);
  batch.input.masked_frames = torch::stack(masked);
  batch.input.mask = mask.masks.unsqueeze(0).expand({static_cast<int64_t>(windows.size()), -1, -1, -1, -1}).contiguous();
  batch.input.landmark_maps = torch::stack(marks);
  batch.input.reference = torch::stack(refs);
  return batch;
}

BatchSampler::BatchSampler(std::vector<LoadedClip> clips, BatchOptions options)
    : clips_(std::move(clips)), options_(options), rng_(options.seed) {
  if (clips_.empty()) throw DataError("batch sampler has no clips");
  if (options_.batch_size < 1 || options_.clip_length < 1) {
    throw ConfigError("batch size and clip length must be >= 1");
  }
  if (options_.reference_index >= options_.clip_length) {
    throw ConfigError("reference index must be smaller than the clip length");
  }
  for (const auto& c : clips_) {
    if (c.clip.length() < options_.clip_length) {
      throw DataError("clip '" + c.name + "' is shorter than the clip length");
    }
  }
  const auto& first = clips_.front().clip;
  mask_ = make_hmd_mask(first.height(), first.width(), options_.mask, options_.clip_length);
  reshuffle();
}

BatchSampler BatchSampler::from_manifest(const ClipManifest& manifest, Split split, BatchOptions options) {
  manifest.validate();
  std::vector<LoadedClip> clips;
  for (const auto& e : manifest.clips_in(split)) clips.push_back(load_clip(manifest, e));
  if (clips.empty()) throw DataError("manifest has no " + to_string(split) + " clips");
  return BatchSampler(std::move(clips), options);
}

uint64_t BatchSampler::draw(uint64_t bound) { return bound <= 1 ? 0 : rng_() % bound; }

void BatchSampler::reshuffle() {
  order_.resize(clips_.size());
  for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
  for (std::size_t i = order_.size(); i > 1; --i) std::swap(order_[i - 1], order_[draw(i)]);
  cursor_ = 0;
}

TrainingBatch BatchSampler::next() {
  std::vector<ClipWindow> windows;
  for (int64_t b = 0; b < options_.batch_size; ++b) {
    if (cursor_ == order_.size()) reshuffle();
    const auto& clip = clips_[order_[cursor_++]];
    ClipWindow w;
    w.clip = &clip;
    w.length = options_.clip_length;
    w.start = static_cast<int64_t>(draw(static_cast<uint64_t>(clip.clip.length() - w.length + 1)));
    w.reference_offset = options_.reference_index >= 0
                             ? options_.reference_index
                             : static_cast<int64_t>(draw(static_cast<uint64_t>(w.length)));
    windows.push_back(w);
  }
  auto batch = assemble_batch(windows, mask_, options_.use_landmarks);
  batch.batch_id = batches_drawn_++;
  return batch;
}

std::string BatchSampler::state() const {
  std::ostringstream os;
  os << rng_ << '\n' << cursor_ << ' ' << batches_drawn_ << ' ' << order_.size();
  for (auto i : order_) os << ' ' << i;
  os << '\n';
  return os.str();
}

void BatchSampler::restore_state(const std::string& state) {
  std::istringstream is(state);
  std::mt19937_64 rng;
  std::size_t cursor = 0, n = 0;
  int64_t drawn = 0;
  if (!(is >> rng >> cursor >> drawn >> n) || n != clips_.size() || cursor > n) {
    throw DataError("sampler state does not match this dataset");
  }
  std::vector<std::size_t> order(n);
  for (auto& i : order) {
    if (!(is >> i) || i >= n) throw DataError("corrupt sampler state");
  }
  rng_ = rng;
  cursor_ = cursor;
  batches_drawn_ = drawn;
  order_ = std::move(order);
}

}  // namespace hmdr
