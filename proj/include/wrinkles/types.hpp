#ifndef WRINKLES_TYPES_HPP
#define WRINKLES_TYPES_HPP

#include <torch/torch.h>

#include <stdexcept>
#include <string>

namespace wrinkles {

// Face photo as a CxHxW float tensor with values in [0,1], C == 3.
struct Image {
  torch::Tensor t;

  static Image create(torch::Tensor t);

  int64_t height() const { return t.size(1); }
  int64_t width() const { return t.size(2); }
};

// Binary HxW mask, values in {0,1}. Convention throughout: 1 marks the
// pixels to be synthesized (holes), 0 marks kept pixels.
struct Mask {
  torch::Tensor t;

  static Mask create(torch::Tensor t);
  static Mask zeros(int64_t h, int64_t w, torch::Dtype dtype = torch::kFloat32);

  int64_t height() const { return t.size(0); }
  int64_t width() const { return t.size(1); }
};

// HxW per-pixel wrinkle probability in [0,1] (pre-threshold segmentation output).
struct ProbMap {
  torch::Tensor t;

  static ProbMap create(torch::Tensor t);
};

struct Sample {
  Image image;
  Mask wrinkle_mask;
  std::string id;
};

namespace detail {

[[noreturn]] inline void fail(const std::string& msg) { throw std::invalid_argument(msg); }

inline void require(bool cond, const std::string& msg) {
  if (!cond) fail(msg);
}

}  // namespace detail

// Shape guard shared by every pixelwise binary operation.
void require_same_hw(const torch::Tensor& a, const torch::Tensor& b, const std::string& what);

}  // namespace wrinkles

#endif  // WRINKLES_TYPES_HPP
