#include "pairx/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>

#include "pairx/error.hpp"

namespace pairx {

namespace {

// Source sample position for output index `o` under corner-aligned sampling.
double source_position(int o, int in_extent, int out_extent) {
  if (out_extent <= 1 || in_extent <= 1) return 0.0;
  return static_cast<double>(o) * (in_extent - 1) / (out_extent - 1);
}

struct Tap {
  int i0, i1;
  double t;
};

Tap make_tap(int o, int in_extent, int out_extent) {
  const double s = source_position(o, in_extent, out_extent);
  int i0 = static_cast<int>(std::floor(s));
  if (i0 > in_extent - 1) i0 = in_extent - 1;
  const int i1 = i0 + 1 < in_extent ? i0 + 1 : i0;
  return {i0, i1, s - i0};
}

}  // namespace

Image8 Image8::blank(int width, int height, int channels, std::uint8_t fill) {
  Image8 img;
  img.width = width;
  img.height = height;
  img.channels = channels;
  img.pixels.assign(static_cast<std::size_t>(width) * height * channels, fill);
  return img;
}

Image8 read_png(const std::filesystem::path& path) {
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.string().c_str()))
    fail(ErrorKind::Io, "cannot read PNG " + path.string() + ": " + png.message);
  png.format = PNG_FORMAT_RGB;
  Image8 img = Image8::blank(static_cast<int>(png.width), static_cast<int>(png.height), 3);
  if (!png_image_finish_read(&png, nullptr, img.pixels.data(), 0, nullptr)) {
    const std::string msg = png.message;
    png_image_free(&png);
    fail(ErrorKind::Io, "cannot decode PNG " + path.string() + ": " + msg);
  }
  return img;
}

void write_png(const Image8& image, const std::filesystem::path& path) {
  if (image.channels != 3 && image.channels != 4)
    fail(ErrorKind::Contract, "write_png supports RGB or RGBA only");
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(image.width);
  png.height = static_cast<png_uint_32>(image.height);
  png.format = image.channels == 4 ? PNG_FORMAT_RGBA : PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&png, path.string().c_str(), 0, image.pixels.data(), 0, nullptr))
    fail(ErrorKind::Io, "cannot write PNG " + path.string() + ": " + png.message);
}

double rescale_coordinate(double coord, int from_extent, int to_extent) {
  if (from_extent <= 1 || to_extent <= 1) return coord * to_extent / std::max(from_extent, 1);
  return (coord - 0.5) * (to_extent - 1) / (from_extent - 1) + 0.5;
}

Image8 resize_bilinear(const Image8& image, int width, int height) {
  Image8 out = Image8::blank(width, height, image.channels);
  for (int y = 0; y < height; ++y) {
    const Tap ty = make_tap(y, image.height, height);
    for (int x = 0; x < width; ++x) {
      const Tap tx = make_tap(x, image.width, width);
      for (int c = 0; c < image.channels; ++c) {
        const double v00 = image.px(tx.i0, ty.i0)[c], v01 = image.px(tx.i1, ty.i0)[c];
        const double v10 = image.px(tx.i0, ty.i1)[c], v11 = image.px(tx.i1, ty.i1)[c];
        const double top = v00 + (v01 - v00) * tx.t;
        const double bot = v10 + (v11 - v10) * tx.t;
        const double v = top + (bot - top) * ty.t;
        out.px(x, y)[c] = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
      }
    }
  }
  return out;
}

Tensor image_to_input(const ModelGraph& model, const Image8& image) {
  const int ch = model.input.channels, h = model.input.height, w = model.input.width;
  if (ch != 3 && ch != 1)
    fail(ErrorKind::Contract, "image ingestion supports 1- or 3-channel models");
  if (image.channels < 3) fail(ErrorKind::Contract, "image ingestion expects RGB input");
  Tensor out({ch, h, w});
  for (int y = 0; y < h; ++y) {
    const Tap ty = make_tap(y, image.height, h);
    for (int x = 0; x < w; ++x) {
      const Tap tx = make_tap(x, image.width, w);
      for (int c = 0; c < ch; ++c) {
        auto sample = [&](int sx, int sy) {
          const auto* p = image.px(sx, sy);
          if (ch == 1) return (0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]) / 255.0;
          return p[c] / 255.0;
        };
        const double top = sample(tx.i0, ty.i0) + (sample(tx.i1, ty.i0) - sample(tx.i0, ty.i0)) * tx.t;
        const double bot = sample(tx.i0, ty.i1) + (sample(tx.i1, ty.i1) - sample(tx.i0, ty.i1)) * tx.t;
        const double v = top + (bot - top) * ty.t;
        const auto k = static_cast<std::size_t>(c);
        out.at(c, y, x) = static_cast<float>((v - model.mean[k]) / model.stddev[k]);
      }
    }
  }
  return out;
}

}  // namespace pairx
