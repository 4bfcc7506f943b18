#include "pairx/render.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>

#include "pairx/error.hpp"

namespace pairx {

namespace {

void put(Image8& img, int x, int y, const Rgb& c) {
  auto* p = img.px(x, y);
  p[0] = c[0];
  p[1] = c[1];
  p[2] = c[2];
  p[3] = 255;
}

void blit(Image8& canvas, const PanelRect& r, const Image8& image) {
  for (int y = 0; y < r.height; ++y)
    for (int x = 0; x < r.width; ++x) {
      const auto* s = image.px(x, y);
      put(canvas, r.x + x, r.y + y, {s[0], s[1], s[2]});
    }
}

std::uint8_t gray(const std::uint8_t* p) {
  return static_cast<std::uint8_t>(std::lround(0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]));
}

void check_panel_image(const PanelRect& r, const Image8& image) {
  if (image.width != r.width || image.height != r.height || image.channels < 3)
    fail(ErrorKind::Contract, "image size does not match canvas panel");
}

// Maps a continuous panel coordinate to a pixel inside the panel.
std::pair<int, int> panel_pixel(const PanelRect& r, const Point2& p) {
  const int x = std::clamp(static_cast<int>(std::floor(p.x)), 0, r.width - 1);
  const int y = std::clamp(static_cast<int>(std::floor(p.y)), 0, r.height - 1);
  return {r.x + x, r.y + y};
}

void draw_line(Image8& img, int x0, int y0, int x1, int y1, const Rgb& c) {
  const int dx = std::abs(x1 - x0), sx = x0 < x1 ? 1 : -1;
  const int dy = -std::abs(y1 - y0), sy = y0 < y1 ? 1 : -1;
  int err = dx + dy;
  for (;;) {
    if (x0 >= 0 && y0 >= 0 && x0 < img.width && y0 < img.height) put(img, x0, y0, c);
    if (x0 == x1 && y0 == y1) break;
    const int e2 = 2 * err;
    if (e2 >= dy) {
      err += dy;
      x0 += sx;
    }
    if (e2 <= dx) {
      err += dx;
      y0 += sy;
    }
  }
}

void draw_marker(Image8& img, const PanelRect& r, int cx, int cy, const Rgb& c) {
  constexpr int kRadius = 2;
  for (int y = cy - kRadius; y <= cy + kRadius; ++y)
    for (int x = cx - kRadius; x <= cx + kRadius; ++x)
      if ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= kRadius * kRadius && r.contains(x, y))
        put(img, x, y, c);
}

}  // namespace

ExplanationCanvas ExplanationCanvas::create(int image_width, int image_height) {
  if (image_width < 1 || image_height < 1) fail(ErrorKind::Contract, "canvas needs positive image size");
  ExplanationCanvas c;
  const int g = kCanvasGutter;
  c.width = 2 * image_width + 3 * g;
  c.height = 2 * image_height + 3 * g;
  c.rgba = Image8::blank(c.width, c.height, 4, 255);
  c.a_top = {g, g, image_width, image_height};
  c.b_top = {2 * g + image_width, g, image_width, image_height};
  c.a_bottom = {g, 2 * g + image_height, image_width, image_height};
  c.b_bottom = {2 * g + image_width, 2 * g + image_height, image_width, image_height};
  return c;
}

void draw_matches(ExplanationCanvas& canvas, const Image8& image_a, const Image8& image_b,
                  const MatchSet& matches, const GridToPixel& grid_to_pixel) {
  check_panel_image(canvas.a_top, image_a);
  check_panel_image(canvas.b_top, image_b);
  blit(canvas.rgba, canvas.a_top, image_a);
  blit(canvas.rgba, canvas.b_top, image_b);
  for (std::size_t rank = 0; rank < matches.matches.size(); ++rank) {
    const auto& m = matches.matches[rank];
    const Rgb& color = palette_color(rank);
    const auto [x0, y0] = panel_pixel(canvas.a_top, grid_to_pixel(m.kp_a));
    const auto [x1, y1] = panel_pixel(canvas.b_top, grid_to_pixel(m.kp_b));
    draw_line(canvas.rgba, x0, y0, x1, y1, color);
    draw_marker(canvas.rgba, canvas.a_top, x0, y0, color);
    draw_marker(canvas.rgba, canvas.b_top, x1, y1, color);
    canvas.lines.push_back({x0, y0, x1, y1, color});
  }
}

HeatmapComposite composite_heatmaps(const std::vector<PixelRelevance>& heatmaps,
                                    std::vector<std::string>* warnings) {
  HeatmapComposite out;
  if (heatmaps.empty()) return out;
  const Tensor first = heatmaps.front().heatmap();
  out.height = first.dim(0);
  out.width = first.dim(1);
  const std::size_t n = static_cast<std::size_t>(out.width) * out.height;
  out.winner.assign(n, -1);
  out.strength.assign(n, 0.0);
  for (std::size_t rank = 0; rank < heatmaps.size(); ++rank) {
    const Tensor h = rank == 0 ? first : heatmaps[rank].heatmap();
    if (h.dim(0) != out.height || h.dim(1) != out.width)
      fail(ErrorKind::Contract, "heatmap extents differ between matches");
    double peak = 0.0;
    for (float v : h.data()) peak = std::max(peak, static_cast<double>(v));
    if (!(peak > 0.0)) {
      if (warnings)
        warnings->push_back("match " + std::to_string(rank) + ": all-zero heatmap skipped");
      continue;
    }
    for (std::size_t k = 0; k < n; ++k) {
      const double v = std::max(static_cast<double>(h[k]), 0.0) / peak;
      if (v > out.strength[k]) {
        out.strength[k] = v;
        out.winner[k] = static_cast<int>(rank);
      }
    }
  }
  return out;
}

void draw_heatmaps(ExplanationCanvas& canvas, const Image8& image_a, const Image8& image_b,
                   const std::vector<PixelRelevance>& heatmaps_a,
                   const std::vector<PixelRelevance>& heatmaps_b) {
  check_panel_image(canvas.a_bottom, image_a);
  check_panel_image(canvas.b_bottom, image_b);
  auto paint = [&](const PanelRect& r, const Image8& image, const std::vector<PixelRelevance>& maps) {
    const HeatmapComposite comp = composite_heatmaps(maps, &canvas.warnings);
    if (!maps.empty() && (comp.width != r.width || comp.height != r.height))
      fail(ErrorKind::Contract, "heatmap extents do not match image extents");
    for (int y = 0; y < r.height; ++y)
      for (int x = 0; x < r.width; ++x) {
        const double g = gray(image.px(x, y));
        Rgb out{static_cast<std::uint8_t>(g), static_cast<std::uint8_t>(g), static_cast<std::uint8_t>(g)};
        if (!comp.winner.empty()) {
          const std::size_t k = static_cast<std::size_t>(y) * r.width + x;
          if (comp.winner[k] >= 0) {
            const Rgb& c = palette_color(static_cast<std::size_t>(comp.winner[k]));
            const double a = kHeatmapAlpha * comp.strength[k];
            for (int ch = 0; ch < 3; ++ch)
              out[static_cast<std::size_t>(ch)] = static_cast<std::uint8_t>(
                  std::lround((1.0 - a) * g + a * c[static_cast<std::size_t>(ch)]));
          }
        }
        put(canvas.rgba, r.x + x, r.y + y, out);
      }
  };
  paint(canvas.a_bottom, image_a, heatmaps_a);
  paint(canvas.b_bottom, image_b, heatmaps_b);
}

}  // namespace pairx
