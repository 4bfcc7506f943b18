#pragma once

#include <utility>

#include "pairx/keypoint.hpp"
#include "pairx/model.hpp"
#include "pairx/tensor.hpp"

namespace pairx {

// Stabilizer added to Epsilon/ZPlus denominators, with the sign of the
// denominator (zero counts as positive).
inline constexpr double kLrpEpsilon = 1e-6;

// Relevance of the output of a tapped layer; same shape as its activation.
struct RelevanceMap {
  int layer_index = -1;
  Tensor values;

  // Channel sum at keypoint (column i, row j).
  double cell_sum(const Keypoint& kp) const;
  // Channel-summed h x w map.
  Tensor channel_sums() const;
};

// Relevance at the model input for one matched keypoint.
struct PixelRelevance {
  int match_id = -1;
  Tensor values;  // input shape, channels x height x width

  // Channel-summed height x width heatmap.
  Tensor heatmap() const;
};

struct CosineSeeds {
  Tensor seed_a;
  Tensor seed_b;
};

// Splits the cosine similarity of the two embeddings into per-dimension
// contributions a_i * b_i / (|a| |b|); each seed sums to the similarity.
CosineSeeds seed_relevance_from_cosine(const ForwardTrace& trace_a, const ForwardTrace& trace_b);

// Propagates `relevance`, defined on the output of layer `from_layer`, down to
// the output of layer `to_layer` (or to the input when to_layer == -1).
// Linear: Epsilon rule. Conv2d: ZPlus (positive contributions a*w only).
// Max-pool: winner takes all (first cell on ties). Avg-pool and global
// average pool: uniform split. ReLU, flatten: pass-through.
Tensor propagate_relevance(const ModelGraph& model, const ForwardTrace& trace, Tensor relevance,
                           int from_layer, int to_layer);

// Full backward pass from the embedding to the tapped layer `stop_layer`.
RelevanceMap lrp_backward(const ModelGraph& model, const ForwardTrace& trace, const Tensor& seed,
                          int stop_layer);

// Keeps only the activations at `keypoint` (all channels) of tapped layer
// `layer` and propagates them to the input pixels.
PixelRelevance masked_pixel_backprop(const ModelGraph& model, const ForwardTrace& trace, int layer,
                                     const Keypoint& keypoint, int match_id = -1);

// Inclusive input-pixel window that can influence output cell (column i,
// row j) of `layer`, clipped to the input extents.
struct PixelRect {
  int x0, y0, x1, y1;

  bool contains(int x, int y) const { return x >= x0 && x <= x1 && y >= y0 && y <= y1; }
};
PixelRect receptive_field(const ModelGraph& model, int layer, const Keypoint& keypoint);

}  // namespace pairx
