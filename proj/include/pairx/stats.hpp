#pragma once

#include <optional>
#include <span>
#include <vector>

namespace pairx {

// Linear interpolation between order statistics; q in [0, 100].
double percentile(std::span<const double> values, double q);

// Average ranks (1-based); ties share the mean of their positions.
std::vector<double> average_ranks(std::span<const double> values);

double pearson(std::span<const double> xs, std::span<const double> ys);

// Pearson correlation of average ranks. nullopt when either side has zero
// rank variance or fewer than two points.
std::optional<double> spearman_rho(std::span<const double> xs, std::span<const double> ys);

inline constexpr int kKdeGridPoints = 256;

// Gaussian KDE with Scott's bandwidth n^(-1/5) * sample std (ddof = 1),
// evaluated on `kKdeGridPoints` evenly spaced points over [lo, hi] and
// renormalized to sum to 1. Degenerate samples (zero spread) fall back to a
// bandwidth of (hi - lo) / kKdeGridPoints.
std::vector<double> kde_on_grid(std::span<const double> samples, double lo, double hi,
                                int grid_points = kKdeGridPoints);

// -ln sum_i sqrt(p_i n_i) for two discrete distributions.
double bhattacharyya_distance(std::span<const double> p, std::span<const double> n);

struct ScoredPair {
  double cosine = 0.0;
  double score = 0.0;
};

struct BinnedBhattacharyya {
  std::optional<double> value;  // nullopt when undefined
  int bins_used = 0;
  int points_counted = 0;
  double window_lo = 0.0;
  double window_hi = 0.0;
};

inline constexpr int kSeparabilityBins = 10;
inline constexpr int kMinPointsPerBin = 3;

// Separability of correct vs incorrect pair scores at matched cosine
// similarity: restrict to the overlap of the central 95% cosine ranges,
// split it into 10 equal bins, compare per-bin KDEs of the scores with the
// Bhattacharyya distance (negated where the correct mean is lower), and
// average the bins weighted by their point counts.
BinnedBhattacharyya binned_bhattacharyya(std::span<const ScoredPair> correct,
                                         std::span<const ScoredPair> incorrect);

}  // namespace pairx
