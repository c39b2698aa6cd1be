#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "hmdr/networks.hpp"

namespace hmdr {

/// T x 3 x H x W frames in [0, 1].
struct VideoClip {
  torch::Tensor frames;
  std::optional<double> fps;

  int64_t length() const { return frames.size(0); }
  int64_t height() const { return frames.size(2); }
  int64_t width() const { return frames.size(3); }
  void validate() const;
};

/// T x 1 x H x W binary masks, 1 = occluded.
struct MaskSequence {
  torch::Tensor masks;

  int64_t length() const { return masks.size(0); }
  void validate() const;
  /// Every frame equals frame 0.
  bool is_static() const;
  /// Repeats a single-frame mask to `frames` frames.
  MaskSequence broadcast_to(int64_t frames) const;
};

/// Rounded rectangle in fractions of the frame size. Pixel (x, y) is
/// occluded when its centre lies inside the shape.
struct MaskGeometry {
  double top = 0.25;
  double bottom = 0.55;
  double left = 0.15;
  double right = 0.85;
  // Corner radius as a fraction of the shorter half-extent.
  double corner_radius = 0.3;

  void validate() const;
  std::string describe() const;
};

MaskSequence make_hmd_mask(int64_t height, int64_t width, const MaskGeometry& geometry = {},
                           int64_t frames = 1);

/// Occluded pixels set to zero.
VideoClip apply_mask(const VideoClip& clip, const MaskSequence& mask);

/// clip[index] * mask[index]: the reference carries only in-mask pixels.
torch::Tensor prepare_reference(const VideoClip& clip, const MaskSequence& mask, int64_t index = 0);

/// frame_%05d.png files; `max_frames` < 0 reads all of them.
VideoClip read_clip(const std::filesystem::path& dir, int64_t max_frames = -1);
void write_clip(const std::filesystem::path& dir, const VideoClip& clip);

enum class Split { kTrain, kTest };
std::string to_string(Split split);
Split split_from_string(const std::string& name);

struct ClipEntry {
  std::string name;
  std::filesystem::path frames_dir;     // relative to the manifest root
  std::filesystem::path landmark_file;  // relative to the manifest root
  Split split = Split::kTrain;
  int64_t frames = 0;
};

struct ClipManifest {
  std::filesystem::path root;
  int64_t clip_length = 32;
  std::vector<ClipEntry> clips;

  static ClipManifest load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
  /// Every clip has >= clip_length frames on disk and a landmark file.
  void validate() const;
  std::vector<ClipEntry> clips_in(Split split) const;
};

/// Builds a manifest over `root/<clip>/frame_*.png` directories (the layout
/// produced by extracting frames from face-cropped videos). The last
/// `test_clips` clips in name order form the test split.
ClipManifest scan_frame_directories(const std::filesystem::path& root, int64_t clip_length,
                                    int64_t test_clips,
                                    const std::string& landmark_file_name = "landmarks.txt");

struct LoadedClip {
  std::string name;
  VideoClip clip;
  torch::Tensor landmark_maps;  // T x 1 x H x W
};

LoadedClip load_clip(const ClipManifest& manifest, const ClipEntry& entry);

/// A temporal window of a loaded clip and the reference offset inside it.
struct ClipWindow {
  const LoadedClip* clip = nullptr;
  int64_t start = 0;
  int64_t length = 0;
  int64_t reference_offset = 0;
};

struct TrainingBatch {
  GeneratorInput input;
  torch::Tensor ground_truth;  // N x T x 3 x H x W
  std::vector<std::string> clip_names;
  std::vector<int64_t> starts;
  int64_t batch_id = 0;
};

/// Stacks windows into a batch. `mask` must have one frame per window frame.
/// With `use_landmarks` false the landmark slot is zero.
TrainingBatch assemble_batch(std::span<const ClipWindow> windows, const MaskSequence& mask,
                             bool use_landmarks);

struct BatchOptions {
  int64_t batch_size = 2;
  int64_t clip_length = 16;
  // >= 0: fixed offset inside the window; < 0: drawn per sample.
  int64_t reference_index = 0;
  bool use_landmarks = true;
  uint64_t seed = 0;
  MaskGeometry mask;
};

/// Seeded epoch-shuffling sampler over in-memory clips. Owns its random
/// stream; state() / restore_state() make resumption exact.
class BatchSampler {
 public:
  BatchSampler(std::vector<LoadedClip> clips, BatchOptions options);
  static BatchSampler from_manifest(const ClipManifest& manifest, Split split, BatchOptions options);

  TrainingBatch next();

  std::string state() const;
  void restore_state(const std::string& state);

  const BatchOptions& options() const { return options_; }
  const std::vector<LoadedClip>& clips() const { return clips_; }

 private:
  uint64_t draw(uint64_t bound);
  void reshuffle();

  std::vector<LoadedClip> clips_;
  BatchOptions options_;
  MaskSequence mask_;
  std::mt19937_64 rng_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  int64_t batches_drawn_ = 0;
};

}  // namespace hmdr
