#ifndef WRINKLES_EVAL_HPP
#define WRINKLES_EVAL_HPP

#include <torch/torch.h>

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "wrinkles/inpaintnet.hpp"
#include "wrinkles/losses.hpp"
#include "wrinkles/maskgen.hpp"
#include "wrinkles/segnet.hpp"
#include "wrinkles/types.hpp"

namespace wrinkles {

struct MetricsReport {
  std::optional<double> iou;
  std::optional<double> lpips_mean;
  std::optional<double> fid;
  int n_samples = 0;
  int n_skipped = 0;  // samples whose evaluation mask could not be placed
  uint64_t mask_seed = 0;
  std::string config_hash;

  nlohmann::json to_json() const;
  static MetricsReport from_json(const nlohmann::json& j);
};

// Perceptual distance: per layer, unit-normalize features across channels,
// apply per-channel weights (all 1 when empty), average the channel-summed
// squared differences over positions, and sum the layer values.
double compute_lpips(const Image& x, const Image& y, const FeatureExtractor& feat,
                     const std::vector<double>& unit_weights = {});

// Frechet distance between Gaussian fits of two NxD feature sets, covariance
// normalized by 1/(n-1). The matrix square root uses symmetric
// eigendecomposition with negative eigenvalues clipped to zero.
double compute_fid(const torch::Tensor& features_a, const torch::Tensor& features_b);

// Feature vector for FID: the extractor's last layer, globally average-pooled.
torch::Tensor fid_features(const Image& x, const FeatureExtractor& feat);

// Raw inpainted pixels for one image; the mask marks the holes. The result is
// composited by the caller.
using InpaintFn =
    std::function<torch::Tensor(const torch::Tensor& image_chw, const torch::Tensor& mask_hw)>;

// Synthetic-mask protocol: per sample, place wrinkle-shaped masks on clean
// skin (never intersecting the dilated annotations), inpaint those regions,
// and score LPIPS per image plus FID between the original and inpainted sets.
// Samples whose masks cannot be placed are skipped and counted.
MetricsReport evaluate_inpainting_with(const InpaintFn& fn, const std::vector<Sample>& dataset,
                                  const MaskPolicy& policy, const FeatureExtractor& feat,
                                  uint64_t seed);
MetricsReport evaluate_inpainting(InpaintGenerator& gen, const std::vector<Sample>& dataset,
                                  const MaskPolicy& policy, const FeatureExtractor& feat,
                                  uint64_t seed);

// Mean IoU at threshold 0.5. input_size 0 evaluates at native resolution;
// otherwise images are resized for the forward pass and the predicted mask is
// upsampled back before scoring.
MetricsReport evaluate_segmentation(SegModel& seg, const std::vector<Sample>& dataset,
                                    int input_size = 0);

}  // namespace wrinkles

#endif  // WRINKLES_EVAL_HPP
