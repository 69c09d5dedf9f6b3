#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "geoloc/tensor.hpp"

namespace geoloc::data {

/// 8-bit single-channel image, row-major.
struct GrayImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;

  friend bool operator==(const GrayImage&, const GrayImage&) = default;
};

void write_png(const std::filesystem::path& path, const GrayImage& image);
/// Colour and 16-bit inputs are reduced to 8-bit gray.
GrayImage read_png(const std::filesystem::path& path);

/// (1, H, W) tensor with values in [0, 1].
Tensor to_tensor(const GrayImage& image);
/// Rounds [0, 1] values to the nearest 8-bit level; input shape (H, W) or (1, H, W).
GrayImage quantize(const Tensor& image);

/// Bilinear resize of a (C, H, W) window [top, top+size) x [left, left+size) to
/// (C, out, out). Half-pixel centres, edges clamped.
Tensor crop_resize(const Tensor& image, std::size_t top, std::size_t left, std::size_t size,
                   std::size_t out);

}  // namespace geoloc::data
