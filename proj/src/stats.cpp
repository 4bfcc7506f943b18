#include "pairx/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pairx/error.hpp"

namespace pairx {

double percentile(std::span<const double> values, double q) {
  if (values.empty()) fail(ErrorKind::Contract, "percentile of an empty sample");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const double pos = std::clamp(q, 0.0, 100.0) / 100.0 * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + (sorted[hi] - sorted[lo]) * frac;
}

std::vector<double> average_ranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

double pearson(std::span<const double> xs, std::span<const double> ys) {
  const auto n = static_cast<double>(xs.size());
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    sxy += (xs[k] - mx) * (ys[k] - my);
    sxx += (xs[k] - mx) * (xs[k] - mx);
    syy += (ys[k] - my) * (ys[k] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

std::optional<double> spearman_rho(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size())
    fail(ErrorKind::Contract, "spearman_rho needs equal-length samples");
  if (xs.size() < 2) return std::nullopt;
  const auto rx = average_ranks(xs);
  const auto ry = average_ranks(ys);
  const auto constant = [](const std::vector<double>& r) {
    return std::all_of(r.begin(), r.end(), [&](double v) { return v == r.front(); });
  };
  if (constant(rx) || constant(ry)) return std::nullopt;
  return std::clamp(pearson(rx, ry), -1.0, 1.0);
}

std::vector<double> kde_on_grid(std::span<const double> samples, double lo, double hi, int grid_points) {
  if (samples.empty()) fail(ErrorKind::Contract, "KDE of an empty sample");
  const auto n = static_cast<double>(samples.size());
  const double mean = std::accumulate(samples.begin(), samples.end(), 0.0) / n;
  double var = 0.0;
  for (double s : samples) var += (s - mean) * (s - mean);
  const double sd = samples.size() > 1 ? std::sqrt(var / (n - 1.0)) : 0.0;
  double bw = std::pow(n, -0.2) * sd;
  if (!(bw > 0.0)) bw = (hi - lo) / grid_points;

  std::vector<double> density(static_cast<std::size_t>(grid_points), 0.0);
  if (!(bw > 0.0)) {
    // All samples and the whole grid collapse to a single value.
    std::fill(density.begin(), density.end(), 1.0 / grid_points);
    return density;
  }
  const double step = grid_points > 1 ? (hi - lo) / (grid_points - 1) : 0.0;
  double total = 0.0;
  for (int g = 0; g < grid_points; ++g) {
    const double x = lo + step * g;
    double acc = 0.0;
    for (double s : samples) {
      const double u = (x - s) / bw;
      acc += std::exp(-0.5 * u * u);
    }
    density[static_cast<std::size_t>(g)] = acc;
    total += acc;
  }
  if (total > 0.0)
    for (double& d : density) d /= total;
  else
    std::fill(density.begin(), density.end(), 1.0 / grid_points);
  return density;
}

double bhattacharyya_distance(std::span<const double> p, std::span<const double> n) {
  if (p.size() != n.size()) fail(ErrorKind::Contract, "bhattacharyya: distribution sizes differ");
  double bc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) bc += std::sqrt(std::max(p[i], 0.0) * std::max(n[i], 0.0));
  // Clamp into (0, 1]: rounding can push identical distributions to 1 + ulp,
  // and disjoint ones to exactly 0.
  bc = std::clamp(bc, 1e-300, 1.0);
  return -std::log(bc);
}

BinnedBhattacharyya binned_bhattacharyya(std::span<const ScoredPair> correct,
                                         std::span<const ScoredPair> incorrect) {
  BinnedBhattacharyya out;
  if (correct.empty() || incorrect.empty()) return out;
  std::vector<double> cc, ic;
  for (const auto& p : correct) cc.push_back(p.cosine);
  for (const auto& p : incorrect) ic.push_back(p.cosine);
  const double left = std::max(percentile(cc, 2.5), percentile(ic, 2.5));
  const double right = std::min(percentile(cc, 97.5), percentile(ic, 97.5));
  out.window_lo = left;
  out.window_hi = right;
  if (!(right > left)) return out;
  const double bin_size = (right - left) / kSeparabilityBins;

  double weighted_sum = 0.0;
  for (int b = 0; b < kSeparabilityBins; ++b) {
    const double start = left + b * bin_size;
    const double end = start + bin_size;
    std::vector<double> cs, is;
    for (const auto& p : correct)
      if (start < p.cosine && p.cosine < end) cs.push_back(p.score);
    for (const auto& p : incorrect)
      if (start < p.cosine && p.cosine < end) is.push_back(p.score);
    if (cs.size() < static_cast<std::size_t>(kMinPointsPerBin) ||
        is.size() < static_cast<std::size_t>(kMinPointsPerBin))
      continue;
    const double hi = std::max(*std::max_element(cs.begin(), cs.end()), *std::max_element(is.begin(), is.end()));
    const double lo = std::min(*std::min_element(cs.begin(), cs.end()), *std::min_element(is.begin(), is.end()));
    const auto pc = kde_on_grid(cs, lo, hi);
    const auto pi = kde_on_grid(is, lo, hi);
    double bd = bhattacharyya_distance(pc, pi);
    const double mean_c = std::accumulate(cs.begin(), cs.end(), 0.0) / static_cast<double>(cs.size());
    const double mean_i = std::accumulate(is.begin(), is.end(), 0.0) / static_cast<double>(is.size());
    if (mean_c < mean_i) bd = -bd;
    const auto count = static_cast<int>(cs.size() + is.size());
    weighted_sum += bd * count;
    out.points_counted += count;
    ++out.bins_used;
  }
  if (out.points_counted > 0) out.value = weighted_sum / out.points_counted;
  return out;
}

}  // namespace pairx
