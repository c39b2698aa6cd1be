#pragma once

#include <torch/torch.h>

#include <array>
#include <compare>
#include <filesystem>
#include <functional>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace hmdr {

inline constexpr int kLandmarkCount = 68;

struct PixelPoint {
  int x = 0;
  int y = 0;
  auto operator<=>(const PixelPoint&) const = default;
};

/// 68 points in the standard annotation order: jaw 0-16, brows 17-26,
/// nose 27-35, eyes 36-47, mouth 48-67.
struct LandmarkSet {
  std::array<PixelPoint, kLandmarkCount> points{};
  std::optional<std::array<double, kLandmarkCount>> confidence;

  bool within(int height, int width) const;
  bool operator==(const LandmarkSet& other) const { return points == other.points; }
};

struct LandmarkGroup {
  std::string_view name;
  int first;
  int last;  // inclusive
  bool closed;

  int segment_count() const { return (last - first) + (closed ? 1 : 0); }
};

/// Jaw, brows and nose are open polylines; eyes and both lip contours are
/// closed loops.
std::span<const LandmarkGroup> standard_groups();
int standard_segment_count();

struct Polyline {
  std::vector<PixelPoint> points;
  bool closed = false;
};

struct RasterOptions {
  bool antialias = false;
};

/// Integer Bresenham line including both endpoints.
std::vector<PixelPoint> bresenham_line(PixelPoint a, PixelPoint b);

/// H x W float raster in [0, 1]; pixels outside the canvas are clipped.
torch::Tensor rasterize_polylines(std::span<const Polyline> lines, int height, int width,
                                  const RasterOptions& options = {});
torch::Tensor rasterize_contours(const LandmarkSet& landmarks, int height, int width,
                                 const RasterOptions& options = {});

/// Pluggable detector. `detect` returns std::nullopt when no face is found.
class LandmarkProvider {
 public:
  virtual ~LandmarkProvider() = default;
  /// frame: 3 x H x W in [0, 1].
  virtual std::optional<LandmarkSet> detect(const torch::Tensor& frame) = 0;
  virtual std::string name() const = 0;
  virtual bool thread_safe() const { return false; }
};

/// Serialises calls into a provider that does not declare thread-safety.
class SerializedProvider final : public LandmarkProvider {
 public:
  explicit SerializedProvider(LandmarkProvider& inner) : inner_(inner) {}
  std::optional<LandmarkSet> detect(const torch::Tensor& frame) override;
  std::string name() const override { return inner_.name(); }
  bool thread_safe() const override { return true; }

 private:
  LandmarkProvider& inner_;
  std::mutex mutex_;
};

std::optional<LandmarkSet> detect_landmarks(const torch::Tensor& frame, LandmarkProvider& provider);

using LandmarkTrack = std::vector<std::optional<LandmarkSet>>;

/// Fills missed detections with the most recent earlier detection. Frames
/// before the first detection stay empty; `warn` is called for each of them.
LandmarkTrack fill_missing_landmarks(const LandmarkTrack& track,
                                     const std::function<void(std::size_t)>& warn = {});

/// T x 1 x H x W contour maps after fallback; empty frames give zero maps.
torch::Tensor landmark_maps(const LandmarkTrack& track, int height, int width,
                            const RasterOptions& options = {});

/// One line per frame: "<index> x0,y0,x1,y1,...,x67,y67" or "<index> none".
void write_landmark_file(const std::filesystem::path& path, const LandmarkTrack& track);
LandmarkTrack read_landmark_file(const std::filesystem::path& path);

}  // namespace hmdr
