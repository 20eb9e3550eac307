#include "wrinkles/types.hpp"

namespace wrinkles {

Image Image::create(torch::Tensor t) {
  detail::require(t.dim() == 3 && t.size(0) == 3, "Image must be a 3xHxW tensor");
  detail::require(t.size(1) >= 32 && t.size(2) >= 32, "Image must be at least 32x32");
  detail::require(t.isfinite().all().item<bool>(), "Image contains non-finite values");
  detail::require(t.min().item<double>() >= 0.0 && t.max().item<double>() <= 1.0,
                  "Image values must lie in [0,1]");
  return Image{std::move(t)};
}

Mask Mask::create(torch::Tensor t) {
  detail::require(t.dim() == 2, "Mask must be an HxW tensor");
  auto binary = (t.eq(0) | t.eq(1)).all().item<bool>();
  detail::require(binary, "Mask must be binary valued");
  return Mask{std::move(t)};
}

Mask Mask::zeros(int64_t h, int64_t w, torch::Dtype dtype) {
  return Mask{torch::zeros({h, w}, dtype)};
}

ProbMap ProbMap::create(torch::Tensor t) {
  detail::require(t.dim() == 2, "ProbMap must be an HxW tensor");
  detail::require(t.min().item<double>() >= 0.0 && t.max().item<double>() <= 1.0,
                  "ProbMap values must lie in [0,1]");
  return ProbMap{std::move(t)};
}

void require_same_hw(const torch::Tensor& a, const torch::Tensor& b, const std::string& what) {
  auto ah = a.size(-2), aw = a.size(-1);
  auto bh = b.size(-2), bw = b.size(-1);
  if (ah != bh || aw != bw) {
    detail::fail(what + ": spatial dimension mismatch (" + std::to_string(ah) + "x" +
                 std::to_string(aw) + " vs " + std::to_string(bh) + "x" + std::to_string(bw) + ")");
  }
}

}  // namespace wrinkles
