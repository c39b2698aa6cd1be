#include "hmdr/landmarks.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "hmdr/errors.hpp"

namespace hmdr {

namespace {

constexpr std::array<LandmarkGroup, 9> kGroups{{
    {"jaw", 0, 16, false},
    {"right_brow", 17, 21, false},
    {"left_brow", 22, 26, false},
    {"nose_bridge", 27, 30, false},
    {"nose_base", 31, 35, false},
    {"right_eye", 36, 41, true},
    {"left_eye", 42, 47, true},
    {"outer_lip", 48, 59, true},
    {"inner_lip", 60, 67, true},
}};

class Canvas {
 public:
  Canvas(int height, int width) : h_(height), w_(width), data_(static_cast<std::size_t>(height) * width, 0.f) {}

  void plot(int x, int y, float v) {
    if (x < 0 || y < 0 || x >= w_ || y >= h_) return;
    float& p = data_[static_cast<std::size_t>(y) * w_ + x];
    p = std::max(p, std::clamp(v, 0.f, 1.f));
  }

  torch::Tensor to_tensor() const {
    return torch::from_blob(const_cast<float*>(data_.data()), {h_, w_}, torch::kFloat32).clone();
  }

 private:
  int h_, w_;
  std::vector<float> data_;
};

// Xiaolin Wu's anti-aliased line.
void wu_line(Canvas& canvas, PixelPoint a, PixelPoint b) {
  double x0 = a.x, y0 = a.y, x1 = b.x, y1 = b.y;
  const bool steep = std::abs(y1 - y0) > std::abs(x1 - x0);
  if (steep) {
    std::swap(x0, y0);
    std::swap(x1, y1);
  }
  if (x0 > x1) {
    std::swap(x0, x1);
    std::swap(y0, y1);
  }
  const double dx = x1 - x0;
  const double gradient = dx == 0.0 ? 1.0 : (y1 - y0) / dx;
  auto plot = [&](int x, int y, double v) {
    if (steep) {
      canvas.plot(y, x, static_cast<float>(v));
    } else {
      canvas.plot(x, y, static_cast<float>(v));
    }
  };
  double y = y0;
  for (int x = static_cast<int>(x0); x <= static_cast<int>(x1); ++x) {
    const double base = std::floor(y);
    const double frac = y - base;
    plot(x, static_cast<int>(base), 1.0 - frac);
    if (frac > 0.0) plot(x, static_cast<int>(base) + 1, frac);
    y += gradient;
  }
}

}  // namespace

bool LandmarkSet::within(int height, int width) const {
  return std::all_of(points.begin(), points.end(), [&](const PixelPoint& p) {
    return p.x >= 0 && p.y >= 0 && p.x < width && p.y < height;
  });
}

std::span<const LandmarkGroup> standard_groups() { return kGroups; }

int standard_segment_count() {
  int n = 0;
  for (const auto& g : kGroups) n += g.segment_count();
  return n;
}

std::vector<PixelPoint> bresenham_line(PixelPoint a, PixelPoint b) {
  std::vector<PixelPoint> out;
  const int dx = std::abs(b.x - a.x), sx = a.x < b.x ? 1 : -1;
  const int dy = -std::abs(b.y - a.y), sy = a.y < b.y ? 1 : -1;
  int err = dx + dy;
  int x = a.x, y = a.y;
  while (true) {
    out.push_back({x, y});
    if (x == b.x && y == b.y) break;
    const int e2 = 2 * err;
    if (e2 >= dy) {
      err += dy;
      x += sx;
    }
    if (e2 <= dx) {
      err += dx;
      y += sy;
    }
  }
  return out;
}

torch::Tensor rasterize_polylines(std::span<const Polyline> lines, int height, int width,
                                  const RasterOptions& options) {
  if (height < 1 || width < 1) throw std::invalid_argument("raster size must be >= 1x1");
  Canvas canvas(height, width);
  auto segment = [&](PixelPoint a, PixelPoint b) {
    if (options.antialias) {
      wu_line(canvas, a, b);
    } else {
      for (const auto& p : bresenham_line(a, b)) canvas.plot(p.x, p.y, 1.f);
    }
  };
  for (const auto& line : lines) {
    const auto& pts = line.points;
    if (pts.empty()) continue;
    if (pts.size() == 1) segment(pts[0], pts[0]);
    for (std::size_t i = 0; i + 1 < pts.size(); ++i) segment(pts[i], pts[i + 1]);
    if (line.closed && pts.size() > 2) segment(pts.back(), pts.front());
  }
  return canvas.to_tensor();
}

torch::Tensor rasterize_contours(const LandmarkSet& landmarks, int height, int width,
                                 const RasterOptions& options) {
  std::vector<Polyline> lines;
  lines.reserve(kGroups.size());
  for (const auto& g : kGroups) {
    Polyline line;
    line.closed = g.closed;
    for (int i = g.first; i <= g.last; ++i) line.points.push_back(landmarks.points[i]);
    lines.push_back(std::move(line));
  }
  return rasterize_polylines(lines, height, width, options);
}

std::optional<LandmarkSet> SerializedProvider::detect(const torch::Tensor& frame) {
  std::lock_guard<std::mutex> lock(mutex_);
  return inner_.detect(frame);
}

std::optional<LandmarkSet> detect_landmarks(const torch::Tensor& frame, LandmarkProvider& provider) {
  if (!frame.defined() || frame.dim() != 3 || frame.size(0) != 3) {
    throw std::invalid_argument("detect_landmarks expects a 3 x H x W frame");
  }
  return provider.detect(frame);
}

LandmarkTrack fill_missing_landmarks(const LandmarkTrack& track,
                                     const std::function<void(std::size_t)>& warn) {
  LandmarkTrack out(track.size());
  std::optional<LandmarkSet> last;
  for (std::size_t i = 0; i < track.size(); ++i) {
    if (track[i]) last = track[i];
    out[i] = last;
    if (!last && warn) warn(i);
  }
  return out;
}

torch::Tensor landmark_maps(const LandmarkTrack& track, int height, int width,
                            const RasterOptions& options) {
  const auto filled = fill_missing_landmarks(track);
  auto maps = torch::zeros({static_cast<int64_t>(filled.size()), 1, height, width});
  for (std::size_t i = 0; i < filled.size(); ++i) {
    if (filled[i]) maps[static_cast<int64_t>(i)][0].copy_(rasterize_contours(*filled[i], height, width, options));
  }
  return maps;
}

void write_landmark_file(const std::filesystem::path& path, const LandmarkTrack& track) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write landmark file " + path.string());
  for (std::size_t i = 0; i < track.size(); ++i) {
    out << i << ' ';
    if (!track[i]) {
      out << "none\n";
      continue;
    }
    for (int p = 0; p < kLandmarkCount; ++p) {
      out << (p ? "," : "") << track[i]->points[p].x << ',' << track[i]->points[p].y;
    }
    out << '\n';
  }
  if (!out) throw DataError("failed writing landmark file " + path.string());
}

LandmarkTrack read_landmark_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read landmark file " + path.string());
  LandmarkTrack track;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto fail = [&](const std::string& why) {
      return DataError(path.string() + ":" + std::to_string(line_no) + ": " + why);
    };
    std::istringstream ls(line);
    std::size_t index = 0;
    std::string body;
    if (!(ls >> index >> body)) throw fail("expected '<index> <points>'");
    if (index != track.size()) throw fail("frame index " + std::to_string(index) + " out of sequence");
    if (body == "none") {
      track.emplace_back();
      continue;
    }
    std::vector<int> values;
    std::istringstream vs(body);
    std::string item;
    while (std::getline(vs, item, ',')) {
      char* end = nullptr;
      const long v = std::strtol(item.c_str(), &end, 10);
      if (item.empty() || *end != '\0') throw fail("bad coordinate '" + item + "'");
      values.push_back(static_cast<int>(v));
    }
    if (values.size() != 2 * kLandmarkCount) {
      throw fail("expected 136 coordinates, got " + std::to_string(values.size()));
    }
    LandmarkSet set;
    for (int p = 0; p < kLandmarkCount; ++p) set.points[p] = {values[2 * p], values[2 * p + 1]};
    track.push_back(set);
  }
  return track;
}

}  // namespace hmdr
