#include "wrinkles/toydata.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "wrinkles/maskgen.hpp"
#include "wrinkles/png_io.hpp"

namespace wrinkles {

namespace {

MaskPolicy toy_wrinkle_policy() {
  MaskPolicy p;
  p.n_strokes = {2, 4};
  p.points_per_stroke = {3, 6};
  p.step_px = {4, 9};
  p.turn_deg_max = 40.0;
  p.thickness_px = {1, 2};
  p.target_coverage = {0.01, 0.10};
  return p;
}

}  // namespace

Sample make_toy_sample(int size, uint64_t seed) {
  detail::require(size >= 32, "toy samples must be at least 32 px");
  std::mt19937_64 rng(seed);
  auto uni = [&rng](double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
  };

  auto yy = torch::arange(size, torch::kFloat32).view({size, 1}).expand({size, size});
  auto xx = torch::arange(size, torch::kFloat32).view({1, size}).expand({size, size});

  auto texture = torch::zeros({size, size});
  const int n_waves = 3;
  for (int k = 0; k < n_waves; ++k) {
    const double cycles = uni(2.0, 6.0);
    const double omega = 2.0 * M_PI * cycles / size;
    const double angle = uni(0.0, M_PI);
    const double phase = uni(0.0, 2.0 * M_PI);
    const double amp = uni(0.04, 0.10);
    texture += static_cast<float>(amp) *
               torch::sin(omega * (std::cos(angle) * xx + std::sin(angle) * yy) + phase);
  }

  const double base[3] = {uni(0.66, 0.78), uni(0.50, 0.60), uni(0.40, 0.50)};
  const double gain[3] = {1.0, 0.9, 0.8};
  std::vector<torch::Tensor> channels;
  for (int c = 0; c < 3; ++c)
    channels.push_back(torch::clamp(base[c] + gain[c] * texture, 0.05, 0.98));
  auto img = torch::stack(channels, 0);

  auto mask = generate_polyline_mask(size, size, toy_wrinkle_policy(), rng());
  img = img * (1.0f - 0.45f * mask.t.unsqueeze(0));

  char id[32];
  std::snprintf(id, sizeof(id), "toy_%04llu", static_cast<unsigned long long>(seed % 10000));
  return {Image::create(img), mask, id};
}

std::vector<Sample> make_toy_dataset(const ToyConfig& cfg) {
  detail::require(cfg.n_samples >= 1, "toy dataset needs at least one sample");
  std::vector<Sample> out;
  out.reserve(static_cast<size_t>(cfg.n_samples));
  for (int i = 0; i < cfg.n_samples; ++i)
    out.push_back(make_toy_sample(cfg.size, cfg.seed * 1000003ull + static_cast<uint64_t>(i)));
  return out;
}

void write_toy_dataset(const std::string& root, const ToyConfig& cfg) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(root) / "images");
  fs::create_directories(fs::path(root) / "masks");
  auto samples = make_toy_dataset(cfg);
  std::ofstream manifest(fs::path(root) / "manifest.txt");
  detail::require(manifest.good(), "cannot write manifest under " + root);
  manifest << "# synthetic skin-texture samples with polyline wrinkles\n";
  for (size_t i = 0; i < samples.size(); ++i) {
    const std::string& id = samples[i].id;
    png::save_rgb((fs::path(root) / "images" / (id + ".png")).string(),
                  samples[i].image.t);
    png::save_gray((fs::path(root) / "masks" / (id + ".png")).string(),
                   samples[i].wrinkle_mask.t);
    manifest << id << "\n";
  }
}

}  // namespace wrinkles
