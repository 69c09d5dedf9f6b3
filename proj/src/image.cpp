#include "geoloc/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

#include "geoloc/error.hpp"

namespace geoloc::data {
namespace {

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using File = std::unique_ptr<std::FILE, FileCloser>;

File open_file(const std::filesystem::path& path, const char* mode) {
  File f(std::fopen(path.c_str(), mode));
  if (!f) fail(ErrorCode::kIo, "cannot open " + path.string());
  return f;
}

}  // namespace

void write_png(const std::filesystem::path& path, const GrayImage& image) {
  if (image.pixels.size() != image.width * image.height || image.width == 0) {
    fail(ErrorCode::kShape, "write_png: pixel buffer does not match " +
                                std::to_string(image.width) + "x" + std::to_string(image.height));
  }
  File f = open_file(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    fail(ErrorCode::kIo, "libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    fail(ErrorCode::kIo, "failed writing " + path.string());
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(image.width),
               static_cast<png_uint_32>(image.height), 8, PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (std::size_t y = 0; y < image.height; ++y) {
    png_write_row(png, image.pixels.data() + y * image.width);
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

GrayImage read_png(const std::filesystem::path& path) {
  File f = open_file(path, "rb");
  png_byte sig[8];
  if (std::fread(sig, 1, 8, f.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    fail(ErrorCode::kParse, path.string() + " is not a PNG file");
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    fail(ErrorCode::kIo, "libpng initialisation failed");
  }
  GrayImage img;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(ErrorCode::kParse, "corrupt PNG " + path.string());
  }
  png_init_io(png, f.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  const png_byte color = png_get_color_type(png, info);
  if (png_get_bit_depth(png, info) == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8) {
    png_set_expand_gray_1_2_4_to_8(png);
  }
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  if (color == PNG_COLOR_TYPE_RGB || color == PNG_COLOR_TYPE_RGB_ALPHA ||
      color == PNG_COLOR_TYPE_PALETTE) {
    png_set_rgb_to_gray_fixed(png, 1, -1, -1);
  }
  png_read_update_info(png, info);
  img.width = png_get_image_width(png, info);
  img.height = png_get_image_height(png, info);
  img.pixels.resize(img.width * img.height);
  for (std::size_t y = 0; y < img.height; ++y) {
    png_read_row(png, img.pixels.data() + y * img.width, nullptr);
  }
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

Tensor to_tensor(const GrayImage& image) {
  Tensor t({1, image.height, image.width});
  for (std::size_t i = 0; i < image.pixels.size(); ++i) t[i] = image.pixels[i] / 255.0;
  return t;
}

GrayImage quantize(const Tensor& image) {
  const std::size_t r = image.rank();
  if (!(r == 2 || (r == 3 && image.dim(0) == 1))) {
    fail(ErrorCode::kShape, "quantize expects (H, W) or (1, H, W), got " +
                                to_string(image.shape()));
  }
  GrayImage g{image.dim(r - 1), image.dim(r - 2), std::vector<std::uint8_t>(image.size())};
  for (std::size_t i = 0; i < image.size(); ++i) {
    g.pixels[i] = static_cast<std::uint8_t>(std::lround(std::clamp(image[i], 0.0, 1.0) * 255.0));
  }
  return g;
}

Tensor crop_resize(const Tensor& image, std::size_t top, std::size_t left, std::size_t size,
                   std::size_t out) {
  if (image.rank() != 3) fail(ErrorCode::kShape, "crop_resize expects (C, H, W)");
  const std::size_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
  if (size == 0 || out == 0 || top + size > h || left + size > w) {
    fail(ErrorCode::kSize, "crop of " + std::to_string(size) + " at (" + std::to_string(top) +
                               ", " + std::to_string(left) + ") does not fit image " +
                               to_string(image.shape()));
  }
  Tensor result({c, out, out});
  const double ratio = static_cast<double>(size) / static_cast<double>(out);
  const double max_idx = static_cast<double>(size - 1);
  for (std::size_t oy = 0; oy < out; ++oy) {
    const double sy = std::clamp((static_cast<double>(oy) + 0.5) * ratio - 0.5, 0.0, max_idx);
    const auto y0 = static_cast<std::size_t>(sy);
    const std::size_t y1 = std::min(y0 + 1, size - 1);
    const double fy = sy - static_cast<double>(y0);
    for (std::size_t ox = 0; ox < out; ++ox) {
      const double sx = std::clamp((static_cast<double>(ox) + 0.5) * ratio - 0.5, 0.0, max_idx);
      const auto x0 = static_cast<std::size_t>(sx);
      const std::size_t x1 = std::min(x0 + 1, size - 1);
      const double fx = sx - static_cast<double>(x0);
      for (std::size_t ch = 0; ch < c; ++ch) {
        const double* base = image.data().data() + ch * h * w + top * w + left;
        const double top_row = base[y0 * w + x0] * (1 - fx) + base[y0 * w + x1] * fx;
        const double bot_row = base[y1 * w + x0] * (1 - fx) + base[y1 * w + x1] * fx;
        result[(ch * out + oy) * out + ox] = top_row * (1 - fy) + bot_row * fy;
      }
    }
  }
  return result;
}

}  // namespace geoloc::data
