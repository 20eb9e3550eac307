#ifndef WRINKLES_PNG_IO_HPP
#define WRINKLES_PNG_IO_HPP

#include <torch/torch.h>

#include <string>

namespace wrinkles::png {

// Reads an 8-bit RGB PNG into a 3xHxW float tensor scaled to [0,1].
// Palette images are expanded, alpha is stripped. Anything else
// (16-bit, grayscale) is rejected with the offending path in the message.
torch::Tensor load_rgb(const std::string& path);

// Reads an 8-bit grayscale PNG into an HxW float tensor scaled to [0,1].
torch::Tensor load_gray(const std::string& path);

// Writes a 3xHxW [0,1] tensor as an 8-bit RGB PNG (values rounded to u8).
void save_rgb(const std::string& path, const torch::Tensor& image);

// Writes an HxW [0,1] tensor as an 8-bit grayscale PNG.
void save_gray(const std::string& path, const torch::Tensor& map);

}  // namespace wrinkles::png

#endif  // WRINKLES_PNG_IO_HPP
