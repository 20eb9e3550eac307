#ifndef WRINKLES_PIPELINE_HPP
#define WRINKLES_PIPELINE_HPP

#include <optional>

#include "wrinkles/inpaintnet.hpp"
#include "wrinkles/segnet.hpp"
#include "wrinkles/types.hpp"

namespace wrinkles {

struct PipelineOptions {
  int seg_input_size = 512;  // segmentation resolution; inpainting runs native
  double threshold = 0.5;
  int dilate_px = 2;  // widens the thin thresholded mask before inpainting
  std::optional<Mask> mask_override;

  void validate() const;
};

struct PipelineOutput {
  Image x_hat;
  Mask mask;  // the final (dilated) inpainting mask actually applied
};

// Segment at seg_input_size, upsample probabilities to native resolution
// (nearest), threshold strictly at opts.threshold, dilate, inpaint at native
// resolution, composite. mask_override replaces the predicted mask before
// dilation. Pixels outside the returned mask equal x exactly.
PipelineOutput remove_wrinkles(const Image& x, SegModel& seg, InpaintGenerator& gen,
                               const PipelineOptions& opts = {});

}  // namespace wrinkles

#endif  // WRINKLES_PIPELINE_HPP
