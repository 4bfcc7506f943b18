#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "pairx/geometry.hpp"
#include "pairx/image.hpp"
#include "pairx/lrp.hpp"
#include "pairx/matching.hpp"

namespace pairx {

using Rgb = std::array<std::uint8_t, 3>;

// Match colours by rank: 20 hues at saturation 0.85 / value 0.95, hue index
// stepping by 7/20 of the colour wheel so neighbouring ranks stay distinct.
inline constexpr std::array<Rgb, 20> kMatchPalette{{
    {242, 36, 36},  {36, 242, 57},  {78, 36, 242},  {242, 98, 36},  {36, 242, 119},
    {139, 36, 242}, {242, 160, 36}, {36, 242, 180}, {201, 36, 242}, {242, 222, 36},
    {36, 242, 242}, {242, 36, 222}, {201, 242, 36}, {36, 180, 242}, {242, 36, 160},
    {139, 242, 36}, {36, 119, 242}, {242, 36, 98},  {78, 242, 36},  {36, 57, 242},
}};

inline const Rgb& palette_color(std::size_t rank) { return kMatchPalette[rank % kMatchPalette.size()]; }

inline constexpr int kCanvasGutter = 8;
inline constexpr double kHeatmapAlpha = 0.65;

struct PanelRect {
  int x = 0, y = 0, width = 0, height = 0;

  bool contains(int px, int py) const {
    return px >= x && px < x + width && py >= y && py < y + height;
  }
};

struct DrawnLine {
  int x0, y0, x1, y1;  // canvas pixels
  Rgb color;
};

// Two rows of two panels: matched features on top, relevance heatmaps below.
struct ExplanationCanvas {
  int width = 0;
  int height = 0;
  Image8 rgba;
  PanelRect a_top, b_top, a_bottom, b_bottom;
  std::vector<DrawnLine> lines;
  std::vector<std::string> warnings;

  // Canvas sized for two `image_width` x `image_height` images.
  static ExplanationCanvas create(int image_width, int image_height);
};

// Pastes both images into the top panels and draws one line per match
// between the mapped cell centres, coloured by rank.
void draw_matches(ExplanationCanvas& canvas, const Image8& image_a, const Image8& image_b,
                  const MatchSet& matches, const GridToPixel& grid_to_pixel);

// Bottom panels: grayscale copies of the images tinted per pixel with the
// colour of the match whose (self-normalized) relevance is largest there.
// heatmaps_x[k] belongs to the match of rank k.
void draw_heatmaps(ExplanationCanvas& canvas, const Image8& image_a, const Image8& image_b,
                   const std::vector<PixelRelevance>& heatmaps_a,
                   const std::vector<PixelRelevance>& heatmaps_b);

// Per-pixel winning match index (-1 where no match has positive relevance)
// and its normalized relevance, for one image.
struct HeatmapComposite {
  int width = 0, height = 0;
  std::vector<int> winner;
  std::vector<double> strength;
};
HeatmapComposite composite_heatmaps(const std::vector<PixelRelevance>& heatmaps,
                                    std::vector<std::string>* warnings = nullptr);

}  // namespace pairx
