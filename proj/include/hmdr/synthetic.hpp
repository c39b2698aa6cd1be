#pragma once

#include <torch/torch.h>

#include <array>
#include <cstdint>
#include <filesystem>
#include <mutex>
#include <vector>

#include "hmdr/data.hpp"
#include "hmdr/landmarks.hpp"

namespace hmdr {

/// Parametric cartoon face. Geometry is in pixels, expression values in [0, 1]
/// except `smile`, which runs from -1 (frown) to 1.
struct FaceParams {
  double cx = 32, cy = 32;
  double rx = 23, ry = 28;
  double eye_open = 1.0;
  double smile = 0.0;
  double mouth_open = 0.0;
  double brow_raise = 0.5;
  std::array<uint8_t, 3> skin{224, 182, 150};
  std::array<uint8_t, 3> background{40, 70, 110};
  std::array<uint8_t, 3> lips{170, 60, 70};

  bool operator==(const FaceParams&) const = default;
};

/// 68 points in the usual iBUG ordering, rounded to the pixel grid.
LandmarkSet face_landmarks(const FaceParams& face);

/// 3 x H x W RGB in [0, 1]. All features are drawn from face_landmarks(), so
/// the rendered contours and the landmark file agree exactly.
torch::Tensor render_face(const FaceParams& face, int height, int width);

struct CorpusOptions {
  int clips = 8;
  int frames = 16;
  int height = 64;
  int width = 64;
  uint64_t seed = 7;
  int test_clips = 2;
};

/// Per-frame parameters for one clip: periodic blinks, slow smile, mouth and
/// brow oscillation, and +-1 px head jitter.
std::vector<FaceParams> synthesize_track(const CorpusOptions& options, int clip_index);

/// Writes clip_XXX/{frame_*.png, landmarks.txt, faces.json} and manifest.json
/// under `root`. Output is byte-identical for a fixed seed.
ClipManifest write_synthetic_corpus(const std::filesystem::path& root, const CorpusOptions& options);

std::vector<FaceParams> read_face_track(const std::filesystem::path& path);

/// Recovers landmarks by re-rendering known candidate faces and matching the
/// frame exactly. Frames that match no candidate (including blank frames)
/// give no detection.
class SyntheticLandmarkProvider final : public LandmarkProvider {
 public:
  explicit SyntheticLandmarkProvider(std::vector<FaceParams> candidates);

  std::optional<LandmarkSet> detect(const torch::Tensor& frame) override;
  std::string name() const override { return "synthetic"; }
  bool thread_safe() const override { return true; }

 private:
  std::vector<FaceParams> candidates_;
  std::vector<torch::Tensor> rendered_;  // lazily filled per frame size
  int64_t rendered_h_ = -1, rendered_w_ = -1;
  std::mutex mutex_;
};

}  // namespace hmdr
