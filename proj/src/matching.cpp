#include "pairx/matching.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "pairx/error.hpp"

namespace pairx {

KeypointDescriptorSet decompose(const Tensor& activation, int layer_index) {
  if (activation.rank() != 3)
    fail(ErrorKind::Contract, "decompose expects a rank-3 activation, got " +
                                  shape_to_string(activation.shape()));
  KeypointDescriptorSet set;
  set.layer_index = layer_index;
  set.length = activation.dim(0);
  set.height = activation.dim(1);
  set.width = activation.dim(2);
  const std::size_t n = static_cast<std::size_t>(set.width) * set.height;
  set.keypoints.reserve(n);
  set.descriptors.resize(n * static_cast<std::size_t>(set.length));
  for (int j = 0; j < set.height; ++j)
    for (int i = 0; i < set.width; ++i) {
      const std::size_t k = set.keypoints.size();
      set.keypoints.push_back({i, j});
      for (int c = 0; c < set.length; ++c)
        set.descriptors[k * static_cast<std::size_t>(set.length) + static_cast<std::size_t>(c)] =
            activation.at(c, j, i);
    }
  return set;
}

MatchSet mutual_match(const KeypointDescriptorSet& set_a, const KeypointDescriptorSet& set_b,
                      DescriptorMetric /*metric*/) {
  if (set_a.length != set_b.length)
    fail(ErrorKind::Contract, "descriptor length mismatch: " + std::to_string(set_a.length) +
                                  " vs " + std::to_string(set_b.length));
  const std::size_t na = set_a.size(), nb = set_b.size();
  MatchSet out;
  out.layer_index = set_a.layer_index;
  if (na == 0 || nb == 0) return out;

  // Squared distances; the table is shared so both directions see identical values.
  std::vector<double> dist(na * nb);
  for (std::size_t a = 0; a < na; ++a) {
    const auto da = set_a.descriptor(a);
    for (std::size_t b = 0; b < nb; ++b) {
      const auto db = set_b.descriptor(b);
      double s = 0.0;
      for (std::size_t c = 0; c < da.size(); ++c) {
        const double d = static_cast<double>(da[c]) - db[c];
        s += d * d;
      }
      dist[a * nb + b] = s;
    }
  }
  std::vector<std::size_t> nn_ab(na), nn_ba(nb);
  std::vector<double> best_ba(nb, std::numeric_limits<double>::infinity());
  for (std::size_t a = 0; a < na; ++a) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t b = 0; b < nb; ++b) {
      const double d = dist[a * nb + b];
      if (d < best) {
        best = d;
        nn_ab[a] = b;
      }
      if (d < best_ba[b]) {
        best_ba[b] = d;
        nn_ba[b] = a;
      }
    }
  }
  for (std::size_t a = 0; a < na; ++a) {
    const std::size_t b = nn_ab[a];
    if (nn_ba[b] != a) continue;
    out.matches.push_back({set_a.keypoints[a], set_b.keypoints[b], std::sqrt(dist[a * nb + b]), 0.0});
  }
  return out;
}

MatchSet score_matches(const MatchSet& matches, const RelevanceMap& rel_a, const RelevanceMap& rel_b) {
  if (rel_a.values.rank() != 3 || rel_b.values.rank() != 3)
    fail(ErrorKind::Contract, "relevance maps must be rank 3");
  MatchSet out = matches;
  for (auto& m : out.matches) {
    if (m.kp_a.i < 0 || m.kp_a.i >= rel_a.values.dim(2) || m.kp_a.j < 0 ||
        m.kp_a.j >= rel_a.values.dim(1) || m.kp_b.i < 0 || m.kp_b.i >= rel_b.values.dim(2) ||
        m.kp_b.j < 0 || m.kp_b.j >= rel_b.values.dim(1))
      fail(ErrorKind::Contract, "match keypoint outside relevance maps " +
                                    shape_to_string(rel_a.values.shape()) + " / " +
                                    shape_to_string(rel_b.values.shape()));
    m.relevance = rel_a.cell_sum(m.kp_a) * rel_b.cell_sum(m.kp_b);
  }
  return out;
}

MatchSet top_n(const MatchSet& matches, int n) {
  if (n < 1) fail(ErrorKind::Contract, "top_n requires n >= 1");
  MatchSet out = matches;
  std::stable_sort(out.matches.begin(), out.matches.end(), [](const Match& x, const Match& y) {
    if (x.relevance != y.relevance) return x.relevance > y.relevance;
    if (x.descriptor_distance != y.descriptor_distance)
      return x.descriptor_distance < y.descriptor_distance;
    return row_major_less(x.kp_a, y.kp_a);
  });
  if (out.matches.size() > static_cast<std::size_t>(n)) out.matches.resize(static_cast<std::size_t>(n));
  return out;
}

}  // namespace pairx
