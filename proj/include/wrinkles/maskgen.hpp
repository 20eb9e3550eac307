#ifndef WRINKLES_MASKGEN_HPP
#define WRINKLES_MASKGEN_HPP

#include <cstdint>

#include "wrinkles/types.hpp"

namespace wrinkles {

template <typename T>
struct Range {
  T min{};
  T max{};
};

// Parameters of the random wrinkle-shaped polyline sampler. Training masks
// should look like the regions inpainted at test time, so everything that
// shapes a stroke is exposed here.
struct MaskPolicy {
  Range<int> n_strokes{1, 4};
  Range<int> points_per_stroke{4, 12};
  Range<int> step_px{8, 32};
  double turn_deg_max = 45.0;
  Range<int> thickness_px{2, 8};
  Range<double> target_coverage{0.005, 0.08};  // fraction of pixels
  int max_tries = 50;

  void validate() const;
};

// Rasterizes random polygonal chains with a round brush until the covered
// fraction lands inside policy.target_coverage (retrying up to max_tries).
// Deterministic given seed.
Mask generate_polyline_mask(int64_t h, int64_t w, const MaskPolicy& policy, uint64_t seed);

// m_I = m_w OR m_g, pixelwise.
Mask build_inpaint_mask(const Mask& m_w, const Mask& m_g);

// Wrinkle-shaped evaluation mask guaranteed to have zero intersection with a
// dilation of m_w (dilation radius = policy.thickness_px.max). Strokes landing
// on the exclusion zone are resampled; fails after max_tries.
Mask synth_eval_masks(const Mask& m_w, const MaskPolicy& policy, uint64_t seed);

// Binary dilation with a disk structuring element of the given radius.
Mask dilate_mask(const Mask& m, int radius);

}  // namespace wrinkles

#endif  // WRINKLES_MASKGEN_HPP
