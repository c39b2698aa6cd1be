#include "hmdr/inference.hpp"

#include "hmdr/errors.hpp"

namespace hmdr {

VideoClip inpaint_clip(Generator& generator, const VideoClip& frames, const MaskSequence& mask,
                       const torch::Tensor& landmark_maps, const torch::Tensor& reference_frame) {
  frames.validate();
  const auto m = mask.broadcast_to(frames.length());
  const int64_t t = frames.length(), h = frames.height(), w = frames.width();
  if (m.masks.size(2) != h || m.masks.size(3) != w) throw ConfigError("mask size does not match the frames");
  if (!landmark_maps.defined() || landmark_maps.sizes() != torch::IntArrayRef{t, 1, h, w}) {
    throw ConfigError("landmark maps must be T x 1 x H x W matching the frames");
  }
  if (!reference_frame.defined() || reference_frame.sizes() != torch::IntArrayRef{3, h, w}) {
    throw ConfigError("reference frame must be 3 x H x W matching the frames");
  }

  GeneratorInput in;
  in.masked_frames = apply_mask(frames, m).frames.unsqueeze(0);
  in.mask = m.masks.unsqueeze(0);
  in.landmark_maps = landmark_maps.to(torch::kFloat32).unsqueeze(0);
  in.reference = (reference_frame.to(torch::kFloat32) * m.masks[0]).unsqueeze(0);

  torch::NoGradGuard no_grad;
  generator->eval();
  const auto raw = generator->forward(in);
  const auto out = composite_output(raw, frames.frames.unsqueeze(0), in.mask);
  return {out.squeeze(0).contiguous(), frames.fps};
}

}  // namespace hmdr
