#pragma once

#include <torch/torch.h>

#include "hmdr/data.hpp"
#include "hmdr/networks.hpp"

namespace hmdr {

/// Inpaints one clip. `reference_frame` is a full, unoccluded 3 x H x W image;
/// only its in-mask pixels reach the generator. `landmark_maps` is
/// T x 1 x H x W. Outside the mask the result equals `frames` bit for bit.
VideoClip inpaint_clip(Generator& generator, const VideoClip& frames, const MaskSequence& mask,
                       const torch::Tensor& landmark_maps, const torch::Tensor& reference_frame);

}  // namespace hmdr
