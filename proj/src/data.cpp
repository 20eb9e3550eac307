#include "wrinkles/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <unordered_set>

#include "wrinkles/png_io.hpp"

namespace wrinkles {

namespace F = torch::nn::functional;

Sample load_sample(const std::string& image_path, const std::string& mask_path) {
  namespace fs = std::filesystem;
  if (!fs::exists(image_path)) detail::fail("missing image file: " + image_path);
  if (!fs::exists(mask_path)) detail::fail("missing mask file: " + mask_path);

  auto img = png::load_rgb(image_path);
  auto raw_mask = png::load_gray(mask_path);
  if (img.size(1) != raw_mask.size(0) || img.size(2) != raw_mask.size(1)) {
    detail::fail("dimension mismatch between " + image_path + " (" + std::to_string(img.size(1)) +
                 "x" + std::to_string(img.size(2)) + ") and " + mask_path + " (" +
                 std::to_string(raw_mask.size(0)) + "x" + std::to_string(raw_mask.size(1)) + ")");
  }
  // 8-bit value > 127  <=>  scaled value > 127/255.
  auto mask = raw_mask.gt(127.0f / 255.0f).to(torch::kFloat32);
  auto id = fs::path(image_path).stem().string();
  return Sample{Image::create(std::move(img)), Mask::create(std::move(mask)), id};
}

namespace {

// One uniform draw per decision, in a fixed order, so a config change only
// affects the transforms it enables.
struct Draws {
  std::mt19937 rng;
  explicit Draws(uint64_t seed) : rng(static_cast<uint32_t>(seed)) {}
  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }
  int uniform_int(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }
};

torch::Tensor shift2d(const torch::Tensor& t, int dy, int dx) {
  // Integer translation with zero fill.
  auto out = torch::zeros_like(t);
  auto h = t.size(-2), w = t.size(-1);
  int64_t sy0 = std::max<int64_t>(0, -dy), sy1 = std::min<int64_t>(h, h - dy);
  int64_t sx0 = std::max<int64_t>(0, -dx), sx1 = std::min<int64_t>(w, w - dx);
  if (sy0 >= sy1 || sx0 >= sx1) return out;
  out.slice(-2, sy0 + dy, sy1 + dy).slice(-1, sx0 + dx, sx1 + dx) =
      t.slice(-2, sy0, sy1).slice(-1, sx0, sx1);
  return out;
}

torch::Tensor rotate(const torch::Tensor& bchw, double deg, bool bilinear) {
  double rad = deg * M_PI / 180.0;
  auto theta = torch::tensor({{std::cos(rad), -std::sin(rad), 0.0},
                              {std::sin(rad), std::cos(rad), 0.0}},
                             torch::kFloat32)
                   .unsqueeze(0);
  auto grid = F::affine_grid(theta, bchw.sizes().vec(), /*align_corners=*/false);
  auto opts = F::GridSampleFuncOptions().padding_mode(torch::kZeros).align_corners(false);
  if (bilinear)
    opts.mode(torch::kBilinear);
  else
    opts.mode(torch::kNearest);
  return F::grid_sample(bchw, grid, opts);
}

}  // namespace

Sample augment(const Sample& sample, const AugmentConfig& cfg, uint64_t seed) {
  detail::require(cfg.flip_horizontal >= 0 && cfg.flip_horizontal <= 1 &&
                      cfg.flip_vertical >= 0 && cfg.flip_vertical <= 1,
                  "flip probabilities must lie in [0,1]");
  auto img = sample.image.t;
  auto mask = sample.wrinkle_mask.t;
  if (cfg.crop_size > 0)
    detail::require(cfg.crop_size <= std::min(img.size(1), img.size(2)),
                    "crop_size larger than image");

  Draws d(seed);
  if (cfg.flip_horizontal > 0 && d.uniform() < cfg.flip_horizontal) {
    img = img.flip(-1);
    mask = mask.flip(-1);
  }
  if (cfg.flip_vertical > 0 && d.uniform() < cfg.flip_vertical) {
    img = img.flip(-2);
    mask = mask.flip(-2);
  }
  if (cfg.random_shift_px > 0) {
    int dx = d.uniform_int(-cfg.random_shift_px, cfg.random_shift_px);
    int dy = d.uniform_int(-cfg.random_shift_px, cfg.random_shift_px);
    if (dx != 0 || dy != 0) {
      img = shift2d(img, dy, dx);
      mask = shift2d(mask, dy, dx);
    }
  }
  if (cfg.rotation_deg_max > 0) {
    double deg = (2.0 * d.uniform() - 1.0) * cfg.rotation_deg_max;
    if (deg != 0.0) {
      img = rotate(img.unsqueeze(0), deg, /*bilinear=*/true).squeeze(0).clamp(0, 1);
      mask = rotate(mask.unsqueeze(0).unsqueeze(0), deg, /*bilinear=*/false).squeeze(0).squeeze(0);
    }
  }
  if (cfg.crop_size > 0) {
    int64_t c = cfg.crop_size;
    int64_t y0 = d.uniform_int(0, static_cast<int>(img.size(1) - c));
    int64_t x0 = d.uniform_int(0, static_cast<int>(img.size(2) - c));
    img = img.slice(1, y0, y0 + c).slice(2, x0, x0 + c);
    mask = mask.slice(0, y0, y0 + c).slice(1, x0, x0 + c);
  }
  return Sample{Image::create(img.contiguous()), Mask::create(mask.contiguous()), sample.id};
}

std::pair<std::vector<std::string>, std::vector<std::string>> split_dataset(
    const std::vector<std::string>& ids, double val_fraction, uint64_t seed) {
  detail::require(!ids.empty(), "split_dataset: empty id list");
  detail::require(val_fraction > 0 && val_fraction < 1,
                  "split_dataset: val_fraction must lie in (0,1)");
  std::unordered_set<std::string> seen;
  for (const auto& id : ids)
    if (!seen.insert(id).second) detail::fail("split_dataset: duplicate id '" + id + "'");

  std::vector<std::string> shuffled = ids;
  std::mt19937 rng(static_cast<uint32_t>(seed));
  std::shuffle(shuffled.begin(), shuffled.end(), rng);

  auto n_val = static_cast<size_t>(std::llround(val_fraction * static_cast<double>(ids.size())));
  std::vector<std::string> val(shuffled.begin(), shuffled.begin() + n_val);
  std::vector<std::string> train(shuffled.begin() + n_val, shuffled.end());
  return {train, val};
}

std::vector<std::string> read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) detail::fail("cannot open manifest: " + path);
  std::vector<std::string> ids;
  std::string line;
  while (std::getline(in, line)) {
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    auto first = line.find_first_not_of(" \t\r\n");
    if (first == std::string::npos) continue;
    auto last = line.find_last_not_of(" \t\r\n");
    ids.push_back(line.substr(first, last - first + 1));
  }
  return ids;
}

Sample load_sample_from_root(const std::string& root, const std::string& id) {
  auto s = load_sample(root + "/images/" + id + ".png", root + "/masks/" + id + ".png");
  s.id = id;
  return s;
}

std::vector<Sample> load_dataset(const std::string& root, const std::vector<std::string>& ids) {
  std::vector<Sample> out;
  out.reserve(ids.size());
  for (const auto& id : ids) out.push_back(load_sample_from_root(root, id));
  return out;
}

torch::Tensor resize_image(const torch::Tensor& chw, int64_t h, int64_t w) {
  if (chw.size(-2) == h && chw.size(-1) == w) return chw;
  auto out = F::interpolate(chw.unsqueeze(0),
                            F::InterpolateFuncOptions()
                                .size(std::vector<int64_t>{h, w})
                                .mode(torch::kBilinear)
                                .align_corners(false));
  return out.squeeze(0).clamp(0, 1);
}

torch::Tensor resize_mask_nearest(const torch::Tensor& hw, int64_t h, int64_t w) {
  if (hw.size(-2) == h && hw.size(-1) == w) return hw;
  auto out = F::interpolate(hw.unsqueeze(0).unsqueeze(0),
                            F::InterpolateFuncOptions().size(std::vector<int64_t>{h, w}).mode(torch::kNearest));
  return out.squeeze(0).squeeze(0);
}

}  // namespace wrinkles
