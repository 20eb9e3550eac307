#include "wrinkles/pipeline.hpp"

#include "wrinkles/data.hpp"
#include "wrinkles/maskgen.hpp"

namespace wrinkles {

void PipelineOptions::validate() const {
  detail::require(threshold > 0.0 && threshold < 1.0,
                  "pipeline: threshold must lie strictly between 0 and 1");
  detail::require(dilate_px >= 0, "pipeline: dilate_px must be >= 0");
  detail::require(seg_input_size >= 32, "pipeline: seg_input_size must be >= 32");
}

PipelineOutput remove_wrinkles(const Image& x, SegModel& seg, InpaintGenerator& gen,
                               const PipelineOptions& opts) {
  opts.validate();
  const int64_t h = x.height(), w = x.width();
  torch::NoGradGuard ng;

  Mask mask = Mask::zeros(h, w);
  if (opts.mask_override.has_value()) {
    require_same_hw(x.t[0], opts.mask_override->t, "remove_wrinkles mask override");
    mask = *opts.mask_override;
  } else {
    seg->eval();
    auto input = resize_image(x.t, opts.seg_input_size, opts.seg_input_size).unsqueeze(0);
    auto probs = seg_forward_padded(seg, input).squeeze(0).squeeze(0);
    auto native = resize_mask_nearest(probs, h, w);
    mask = Mask::create((native > opts.threshold).to(torch::kFloat32));
  }
  if (opts.dilate_px > 0) mask = dilate_mask(mask, opts.dilate_px);

  gen->eval();
  auto x_prime = stack_input(x, mask);
  auto raw = inpaint_forward_padded(gen, x_prime.t.unsqueeze(0)).squeeze(0);
  return {composite(x, Image::create(raw), mask), mask};
}

}  // namespace wrinkles
