#include "wrinkles/png_io.hpp"

#include <png.h>

#include <cstdio>
#include <memory>
#include <stdexcept>
#include <vector>

namespace wrinkles::png {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void fail(const std::string& path, const std::string& why) {
  throw std::runtime_error("png: " + why + ": " + path);
}

// Decodes to 8-bit with `want_channels` (3 = RGB, 1 = gray), returning rows.
std::vector<uint8_t> decode(const std::string& path, int want_channels, int& w, int& h) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) fail(path, "cannot open file");

  uint8_t sig[8];
  if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0)
    fail(path, "not a PNG file");

  png_structp png_ptr = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png_ptr) fail(path, "png_create_read_struct failed");
  png_infop info_ptr = png_create_info_struct(png_ptr);
  if (!info_ptr) {
    png_destroy_read_struct(&png_ptr, nullptr, nullptr);
    fail(path, "png_create_info_struct failed");
  }

  std::vector<uint8_t> out;
  if (setjmp(png_jmpbuf(png_ptr))) {
    png_destroy_read_struct(&png_ptr, &info_ptr, nullptr);
    fail(path, "unreadable or corrupt PNG");
  }

  png_init_io(png_ptr, fp.get());
  png_set_sig_bytes(png_ptr, 8);
  png_read_info(png_ptr, info_ptr);

  const int bit_depth = png_get_bit_depth(png_ptr, info_ptr);
  const int color_type = png_get_color_type(png_ptr, info_ptr);
  if (bit_depth != 8) {
    png_destroy_read_struct(&png_ptr, &info_ptr, nullptr);
    fail(path, "expected 8-bit PNG, got bit depth " + std::to_string(bit_depth));
  }

  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png_ptr);
  if (color_type & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png_ptr);

  if (want_channels == 3) {
    if (color_type == PNG_COLOR_TYPE_GRAY || color_type == PNG_COLOR_TYPE_GRAY_ALPHA)
      png_set_gray_to_rgb(png_ptr);
  } else {
    if (color_type != PNG_COLOR_TYPE_GRAY && color_type != PNG_COLOR_TYPE_GRAY_ALPHA) {
      png_destroy_read_struct(&png_ptr, &info_ptr, nullptr);
      fail(path, "expected single-channel grayscale PNG");
    }
  }

  png_read_update_info(png_ptr, info_ptr);
  w = static_cast<int>(png_get_image_width(png_ptr, info_ptr));
  h = static_cast<int>(png_get_image_height(png_ptr, info_ptr));
  const int channels = png_get_channels(png_ptr, info_ptr);
  if (channels != want_channels) {
    png_destroy_read_struct(&png_ptr, &info_ptr, nullptr);
    fail(path, "expected " + std::to_string(want_channels) + " channels, got " +
                   std::to_string(channels));
  }

  out.resize(static_cast<size_t>(w) * h * channels);
  std::vector<png_bytep> rows(h);
  for (int y = 0; y < h; ++y) rows[y] = out.data() + static_cast<size_t>(y) * w * channels;
  png_read_image(png_ptr, rows.data());
  png_read_end(png_ptr, nullptr);
  png_destroy_read_struct(&png_ptr, &info_ptr, nullptr);
  return out;
}

void encode(const std::string& path, const uint8_t* data, int w, int h, int channels) {
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) fail(path, "cannot open file for writing");

  png_structp png_ptr = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png_ptr) fail(path, "png_create_write_struct failed");
  png_infop info_ptr = png_create_info_struct(png_ptr);
  if (!info_ptr) {
    png_destroy_write_struct(&png_ptr, nullptr);
    fail(path, "png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png_ptr))) {
    png_destroy_write_struct(&png_ptr, &info_ptr);
    fail(path, "write failed");
  }

  png_init_io(png_ptr, fp.get());
  png_set_IHDR(png_ptr, info_ptr, w, h, 8,
               channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png_ptr, info_ptr);
  std::vector<png_bytep> rows(h);
  for (int y = 0; y < h; ++y)
    rows[y] = const_cast<png_bytep>(data + static_cast<size_t>(y) * w * channels);
  png_write_image(png_ptr, rows.data());
  png_write_end(png_ptr, nullptr);
  png_destroy_write_struct(&png_ptr, &info_ptr);
}

torch::Tensor to_unit_float(const std::vector<uint8_t>& buf, int h, int w, int c) {
  auto t = torch::empty({h, w, c}, torch::kUInt8);
  std::memcpy(t.data_ptr<uint8_t>(), buf.data(), buf.size());
  return t.to(torch::kFloat32).div_(255.0);
}

}  // namespace

torch::Tensor load_rgb(const std::string& path) {
  int w = 0, h = 0;
  auto buf = decode(path, 3, w, h);
  return to_unit_float(buf, h, w, 3).permute({2, 0, 1}).contiguous();
}

torch::Tensor load_gray(const std::string& path) {
  int w = 0, h = 0;
  auto buf = decode(path, 1, w, h);
  return to_unit_float(buf, h, w, 1).squeeze(-1).contiguous();
}

void save_rgb(const std::string& path, const torch::Tensor& image) {
  TORCH_CHECK(image.dim() == 3 && image.size(0) == 3, "save_rgb expects a 3xHxW tensor");
  auto u8 = image.detach().to(torch::kFloat32).clamp(0, 1).mul(255.0).round().to(torch::kUInt8);
  auto hwc = u8.permute({1, 2, 0}).contiguous();
  encode(path, hwc.data_ptr<uint8_t>(), static_cast<int>(image.size(2)),
         static_cast<int>(image.size(1)), 3);
}

void save_gray(const std::string& path, const torch::Tensor& map) {
  TORCH_CHECK(map.dim() == 2, "save_gray expects an HxW tensor");
  auto u8 = map.detach().to(torch::kFloat32).clamp(0, 1).mul(255.0).round().to(torch::kUInt8).contiguous();
  encode(path, u8.data_ptr<uint8_t>(), static_cast<int>(map.size(1)),
         static_cast<int>(map.size(0)), 1);
}

}  // namespace wrinkles::png
