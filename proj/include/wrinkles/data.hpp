#ifndef WRINKLES_DATA_HPP
#define WRINKLES_DATA_HPP

#include <string>
#include <utility>
#include <vector>

#include "wrinkles/types.hpp"

namespace wrinkles {

struct AugmentConfig {
  double flip_horizontal = 0.0;  // probability
  double flip_vertical = 0.0;    // probability
  int random_shift_px = 0;
  double rotation_deg_max = 0.0;
  int crop_size = 0;  // 0 = no crop

  bool is_identity() const {
    return flip_horizontal == 0.0 && flip_vertical == 0.0 && random_shift_px == 0 &&
           rotation_deg_max == 0.0 && crop_size == 0;
  }
};

// Loads a paired image/mask sample. The mask is binarized (value > 127 on the
// 8-bit input, i.e. > 0.5 after scaling). Dimensions must match exactly.
Sample load_sample(const std::string& image_path, const std::string& mask_path);

// Applies the same random spatial transform to image and mask. The image is
// resampled bilinearly, the mask with nearest-neighbor so it stays binary.
// Out-of-frame pixels are zero-filled on both. Deterministic given seed.
Sample augment(const Sample& sample, const AugmentConfig& cfg, uint64_t seed);

// Seeded shuffle split; |val| = round(val_fraction * |ids|).
std::pair<std::vector<std::string>, std::vector<std::string>> split_dataset(
    const std::vector<std::string>& ids, double val_fraction, uint64_t seed);

// Manifest: UTF-8 text, one id per line, '#' starts a comment, blanks ignored.
std::vector<std::string> read_manifest(const std::string& path);

// Dataset root layout: images/<id>.png + masks/<id>.png.
Sample load_sample_from_root(const std::string& root, const std::string& id);
std::vector<Sample> load_dataset(const std::string& root, const std::vector<std::string>& ids);

// Bilinear image resize / nearest mask resize helpers shared with the pipeline.
torch::Tensor resize_image(const torch::Tensor& chw, int64_t h, int64_t w);
torch::Tensor resize_mask_nearest(const torch::Tensor& hw, int64_t h, int64_t w);

}  // namespace wrinkles

#endif  // WRINKLES_DATA_HPP
