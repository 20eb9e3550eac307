#ifndef WRINKLES_TOYDATA_HPP
#define WRINKLES_TOYDATA_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "wrinkles/types.hpp"

namespace wrinkles {

struct ToyConfig {
  int n_samples = 16;
  int size = 64;
  uint64_t seed = 7;
};

// Synthetic skin patch: a warm base tone plus a few low-amplitude sinusoidal
// gratings (smooth, learnable texture), with dark polyline strokes standing in
// for wrinkles. The stroke mask is the ground-truth annotation.
Sample make_toy_sample(int size, uint64_t seed);

std::vector<Sample> make_toy_dataset(const ToyConfig& cfg);

// Writes images/<id>.png, masks/<id>.png and manifest.txt under root,
// matching the dataset layout the loaders expect.
void write_toy_dataset(const std::string& root, const ToyConfig& cfg);

}  // namespace wrinkles

#endif  // WRINKLES_TOYDATA_HPP
