#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "pairx/keypoint.hpp"
#include "pairx/matching.hpp"

namespace pairx {

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

struct Correspondence {
  Point2 a;  // first image
  Point2 b;  // second image
};

// Projective map from the first image onto the second, scaled so that
// matrix[2][2] == 1 whenever that entry is nonzero.
struct Homography {
  std::array<std::array<double, 3>, 3> matrix{{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};
  int inlier_count = 0;
  double inlier_threshold = 0.0;

  static Homography identity() { return {}; }
  Homography inverse() const;
  double determinant() const;
};

struct RansacOptions {
  double threshold = 2.0;  // pixels
  int max_iters = 2000;
  std::uint64_t seed = 0;
};

// Hartley-normalized DLT over all given correspondences (>= 4).
std::optional<Homography> fit_homography_dlt(const std::vector<Correspondence>& points);

// RANSAC over 4-point samples with a DLT refit on the final inlier set.
// Returns nullopt ("homography unavailable") with fewer than 4
// correspondences or when no non-degenerate model can be found.
std::optional<Homography> estimate_homography(const std::vector<Correspondence>& points,
                                              const RansacOptions& options);

// Perspective-divided image of p; nullopt when |w'| < 1e-12.
std::optional<Point2> project(const Homography& h, const Point2& p);

// Grid cell -> model-input pixel centre: (grid + 0.5) * stride.
struct GridToPixel {
  int stride = 1;

  Point2 operator()(const Keypoint& kp) const {
    return {(kp.i + 0.5) * stride, (kp.j + 0.5) * stride};
  }
};

inline constexpr double kResidualClamp = 1e9;

struct ResidualMetric {
  std::optional<double> value;  // S1; nullopt when undefined
  int points_at_infinity = 0;   // matches excluded because w' vanished
  int residual_count = 0;
  bool clamped = false;
};

// |M| / sum of reprojection residuals over the unfiltered match set, in
// model-input pixels. A residual sum below 1e-9 clamps the score to 1e9.
ResidualMetric inverted_residual_mean(const MatchSet& matches, const Homography& h,
                                      const GridToPixel& grid_to_pixel);

// Fraction of (negative-clamped) relevance mass at matched cells, summed over
// both images. nullopt when the total relevance is zero.
std::optional<double> match_coverage(const std::vector<Keypoint>& matched_a,
                                     const std::vector<Keypoint>& matched_b,
                                     const RelevanceMap& rel_a, const RelevanceMap& rel_b);

// Correspondence files: {"pair_id": ..., "points": [[x, y, x', y'], ...]} with
// optional "size_a"/"size_b" ([width, height] of the original images).
struct CorrespondenceFile {
  std::string pair_id;
  std::vector<Correspondence> points;
  std::optional<std::array<int, 2>> size_a;
  std::optional<std::array<int, 2>> size_b;
};

// Reads a single JSON document or JSON-lines file (one document per line).
std::vector<CorrespondenceFile> read_correspondences(const std::filesystem::path& path);

// Maps original-image pixel coordinates into model-input pixels.
std::vector<Correspondence> rescale_correspondences(const std::vector<Correspondence>& points,
                                                    std::array<int, 2> size_a,
                                                    std::array<int, 2> size_b, int input_width,
                                                    int input_height);

}  // namespace pairx
