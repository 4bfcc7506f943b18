#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "pairx/model.hpp"
#include "pairx/tensor.hpp"

namespace pairx {

// Interleaved 8-bit image, row-major, `channels` samples per pixel (3 or 4).
struct Image8 {
  int width = 0;
  int height = 0;
  int channels = 3;
  std::vector<std::uint8_t> pixels;

  static Image8 blank(int width, int height, int channels, std::uint8_t fill = 0);

  std::uint8_t* px(int x, int y) {
    return pixels.data() + (static_cast<std::size_t>(y) * width + x) * channels;
  }
  const std::uint8_t* px(int x, int y) const {
    return pixels.data() + (static_cast<std::size_t>(y) * width + x) * channels;
  }
};

// Decodes any PNG to 8-bit RGB.
Image8 read_png(const std::filesystem::path& path);
// Writes an 8-bit RGB or RGBA PNG. Output bytes are a pure function of the pixels.
void write_png(const Image8& image, const std::filesystem::path& path);

// Bilinear resize with corner-aligned sampling: output pixel centres at the
// first/last index coincide with the input's first/last pixel centres.
Image8 resize_bilinear(const Image8& image, int width, int height);

// Maps a continuous pixel coordinate (pixel k spans [k, k+1)) through the
// corner-aligned resize from `from_extent` to `to_extent` samples.
double rescale_coordinate(double coord, int from_extent, int to_extent);

// RGB -> [0,1] floats -> resize to the model input -> per-channel (x - mean) / std.
Tensor image_to_input(const ModelGraph& model, const Image8& image);

}  // namespace pairx
