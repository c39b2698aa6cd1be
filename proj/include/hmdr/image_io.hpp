#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <string>
#include <vector>

namespace hmdr {

/// 8-bit PNG <-> float tensors. Values are v / 255 on read and
/// round(clamp(v, 0, 1) * 255) on write, so a read-write-read cycle is exact.

/// C x H x W in [0, 1]; RGB for colour images, 1 channel for grayscale.
torch::Tensor read_image(const std::filesystem::path& path);
void write_image(const std::filesystem::path& path, const torch::Tensor& image);

/// Binary 1 x H x W mask (pixel >= 128 is occluded).
torch::Tensor read_mask_image(const std::filesystem::path& path);

std::string frame_file_name(std::size_t index);
/// Sorted frame_*.png file names in `dir`.
std::vector<std::string> list_frame_files(const std::filesystem::path& dir);

}  // namespace hmdr
