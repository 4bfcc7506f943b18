#pragma once

#include <vector>

#include "pairx/keypoint.hpp"
#include "pairx/lrp.hpp"
#include "pairx/tensor.hpp"

namespace pairx {

enum class DescriptorMetric { L2 };

// One descriptor per grid cell of a c x h x w activation, in row-major cell
// order: keypoints[j * w + i] == {i, j}.
struct KeypointDescriptorSet {
  int layer_index = -1;
  int width = 0;   // grid columns
  int height = 0;  // grid rows
  int length = 0;  // descriptor length (channels)
  std::vector<Keypoint> keypoints;
  std::vector<float> descriptors;  // keypoints.size() x length, row-major

  std::size_t size() const { return keypoints.size(); }
  std::span<const float> descriptor(std::size_t k) const {
    return std::span<const float>(descriptors).subspan(k * static_cast<std::size_t>(length),
                                                       static_cast<std::size_t>(length));
  }
};

struct Match {
  Keypoint kp_a;
  Keypoint kp_b;
  double descriptor_distance = 0.0;
  double relevance = 0.0;
};

struct MatchSet {
  int layer_index = -1;
  std::vector<Match> matches;

  std::size_t size() const { return matches.size(); }
  bool empty() const { return matches.empty(); }
};

KeypointDescriptorSet decompose(const Tensor& activation, int layer_index = -1);

// Brute-force matching with cross-check: a pair is kept only when each
// descriptor is the other's nearest neighbour. Nearest-neighbour ties go to
// the lower cell index. Output is ordered by the first set's cell index.
MatchSet mutual_match(const KeypointDescriptorSet& set_a, const KeypointDescriptorSet& set_b,
                      DescriptorMetric metric = DescriptorMetric::L2);

// relevance = (channel sum of rel_a at kp_a) * (channel sum of rel_b at kp_b).
MatchSet score_matches(const MatchSet& matches, const RelevanceMap& rel_a, const RelevanceMap& rel_b);

// Highest relevance first; ties by smaller descriptor distance, then
// row-major position of kp_a.
MatchSet top_n(const MatchSet& matches, int n);

}  // namespace pairx
