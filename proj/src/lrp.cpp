#include "pairx/lrp.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "pairx/error.hpp"

namespace pairx {

namespace {

double stabilize(double z) { return z >= 0.0 ? z + kLrpEpsilon : z - kLrpEpsilon; }

Tensor to_tensor(const Shape& shape, const std::vector<double>& acc) {
  Tensor out(shape);
  auto d = out.mutable_data();
  for (std::size_t k = 0; k < acc.size(); ++k) d[k] = static_cast<float>(acc[k]);
  return out;
}

// ZPlus for conv2d: contributions max(a*w, 0), so negative inputs pair with
// negative weights and nonnegative inputs with positive weights.
Tensor conv_zplus(const Tensor& input, const Tensor& weights, int stride, int padding,
                  const Tensor& relevance) {
  const int in_c = input.dim(0), in_h = input.dim(1), in_w = input.dim(2);
  const int out_c = weights.dim(0), kh = weights.dim(2), kw = weights.dim(3);
  const int out_h = relevance.dim(1), out_w = relevance.dim(2);
  const auto w = weights.data();
  std::vector<double> acc(input.size(), 0.0);
  for (int o = 0; o < out_c; ++o) {
    for (int oy = 0; oy < out_h; ++oy) {
      for (int ox = 0; ox < out_w; ++ox) {
        const double r = relevance.at(o, oy, ox);
        if (r == 0.0) continue;
        double z = 0.0;
        for (int c = 0; c < in_c; ++c) {
          const std::size_t wbase = (static_cast<std::size_t>(o) * in_c + c) * kh * kw;
          for (int ky = 0; ky < kh; ++ky) {
            const int iy = oy * stride - padding + ky;
            if (iy < 0 || iy >= in_h) continue;
            for (int kx = 0; kx < kw; ++kx) {
              const int ix = ox * stride - padding + kx;
              if (ix < 0 || ix >= in_w) continue;
              z += std::max(static_cast<double>(input.at(c, iy, ix)) *
                                w[wbase + static_cast<std::size_t>(ky) * kw + kx],
                            0.0);
            }
          }
        }
        const double s = r / stabilize(z);
        for (int c = 0; c < in_c; ++c) {
          const std::size_t wbase = (static_cast<std::size_t>(o) * in_c + c) * kh * kw;
          for (int ky = 0; ky < kh; ++ky) {
            const int iy = oy * stride - padding + ky;
            if (iy < 0 || iy >= in_h) continue;
            for (int kx = 0; kx < kw; ++kx) {
              const int ix = ox * stride - padding + kx;
              if (ix < 0 || ix >= in_w) continue;
              const double contrib = std::max(static_cast<double>(input.at(c, iy, ix)) *
                                                  w[wbase + static_cast<std::size_t>(ky) * kw + kx],
                                              0.0);
              acc[(static_cast<std::size_t>(c) * in_h + iy) * in_w + ix] += contrib * s;
            }
          }
        }
      }
    }
  }
  return to_tensor(input.shape(), acc);
}

Tensor linear_epsilon(const Tensor& input, const Tensor& weights, const Tensor& relevance) {
  const int out_f = weights.dim(0), in_f = weights.dim(1);
  const auto w = weights.data();
  std::vector<double> acc(input.size(), 0.0);
  for (int o = 0; o < out_f; ++o) {
    const double r = relevance[static_cast<std::size_t>(o)];
    if (r == 0.0) continue;
    const std::size_t row = static_cast<std::size_t>(o) * in_f;
    double z = 0.0;
    for (int i = 0; i < in_f; ++i) z += static_cast<double>(input[static_cast<std::size_t>(i)]) * w[row + i];
    const double s = r / stabilize(z);
    for (int i = 0; i < in_f; ++i)
      acc[static_cast<std::size_t>(i)] += static_cast<double>(input[static_cast<std::size_t>(i)]) * w[row + i] * s;
  }
  return to_tensor(input.shape(), acc);
}

Tensor pool_backward(const Tensor& input, PoolKind kind, int kernel, int stride,
                     const Tensor& relevance) {
  const int c = input.dim(0), in_h = input.dim(1), in_w = input.dim(2);
  const int out_h = relevance.dim(1), out_w = relevance.dim(2);
  const double share = 1.0 / (static_cast<double>(kernel) * kernel);
  std::vector<double> acc(input.size(), 0.0);
  auto cell = [&](int ch, int y, int x) {
    return (static_cast<std::size_t>(ch) * in_h + y) * in_w + x;
  };
  for (int ch = 0; ch < c; ++ch)
    for (int oy = 0; oy < out_h; ++oy)
      for (int ox = 0; ox < out_w; ++ox) {
        const double r = relevance.at(ch, oy, ox);
        if (r == 0.0) continue;
        if (kind == PoolKind::Max) {
          int by = oy * stride, bx = ox * stride;
          float best = input.at(ch, by, bx);
          for (int ky = 0; ky < kernel; ++ky)
            for (int kx = 0; kx < kernel; ++kx) {
              const float v = input.at(ch, oy * stride + ky, ox * stride + kx);
              if (v > best) {
                best = v;
                by = oy * stride + ky;
                bx = ox * stride + kx;
              }
            }
          acc[cell(ch, by, bx)] += r;
        } else {
          for (int ky = 0; ky < kernel; ++ky)
            for (int kx = 0; kx < kernel; ++kx)
              acc[cell(ch, oy * stride + ky, ox * stride + kx)] += r * share;
        }
      }
  return to_tensor(input.shape(), acc);
}

Tensor global_pool_backward(const Tensor& input, const Tensor& relevance) {
  const std::size_t area = static_cast<std::size_t>(input.dim(1)) * input.dim(2);
  Tensor out(input.shape());
  auto d = out.mutable_data();
  for (int ch = 0; ch < input.dim(0); ++ch) {
    const double share = static_cast<double>(relevance[static_cast<std::size_t>(ch)]) / area;
    for (std::size_t k = 0; k < area; ++k) d[ch * area + k] = static_cast<float>(share);
  }
  return out;
}

}  // namespace

double RelevanceMap::cell_sum(const Keypoint& kp) const {
  double s = 0.0;
  for (int c = 0; c < values.dim(0); ++c) s += values.at(c, kp.j, kp.i);
  return s;
}

Tensor RelevanceMap::channel_sums() const {
  const int h = values.dim(1), w = values.dim(2);
  std::vector<double> acc(static_cast<std::size_t>(h) * w, 0.0);
  for (int c = 0; c < values.dim(0); ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) acc[static_cast<std::size_t>(y) * w + x] += values.at(c, y, x);
  return to_tensor({h, w}, acc);
}

Tensor PixelRelevance::heatmap() const {
  RelevanceMap tmp{-1, values};
  return tmp.channel_sums();
}

CosineSeeds seed_relevance_from_cosine(const ForwardTrace& trace_a, const ForwardTrace& trace_b) {
  const Tensor& a = trace_a.embedding;
  const Tensor& b = trace_b.embedding;
  if (a.rank() != 1 || a.shape() != b.shape())
    fail(ErrorKind::Contract, "embedding shapes differ: " + shape_to_string(a.shape()) + " vs " +
                                  shape_to_string(b.shape()));
  double na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    na += static_cast<double>(a[i]) * a[i];
    nb += static_cast<double>(b[i]) * b[i];
  }
  if (na <= 0.0 || nb <= 0.0) fail(ErrorKind::Numerical, "zero-norm embedding: cannot seed relevance");
  const double inv = 1.0 / (std::sqrt(na) * std::sqrt(nb));
  CosineSeeds seeds{Tensor(a.shape()), Tensor(b.shape())};
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto r = static_cast<float>(static_cast<double>(a[i]) * b[i] * inv);
    seeds.seed_a[i] = r;
    seeds.seed_b[i] = r;
  }
  return seeds;
}

Tensor propagate_relevance(const ModelGraph& model, const ForwardTrace& trace, Tensor relevance,
                           int from_layer, int to_layer) {
  if (from_layer >= static_cast<int>(trace.layer_outputs.size()) || to_layer < -1 ||
      to_layer > from_layer)
    fail(ErrorKind::Contract, "invalid relevance propagation range " + std::to_string(from_layer) +
                                  " -> " + std::to_string(to_layer));
  if (relevance.shape() != trace.layer_outputs[static_cast<std::size_t>(from_layer)].shape())
    fail(ErrorKind::Contract, "relevance shape " + shape_to_string(relevance.shape()) +
                                  " does not match output of layer " + std::to_string(from_layer));
  for (int i = from_layer; i > to_layer; --i) {
    const auto& l = model.layers[static_cast<std::size_t>(i)];
    const Tensor& x = trace.layer_input(i);
    switch (l.kind) {
      case LayerKind::Conv2d:
        relevance = conv_zplus(x, model.weight(l.weight), l.stride, l.padding, relevance);
        break;
      case LayerKind::Linear:
        relevance = linear_epsilon(x, model.weight(l.weight), relevance);
        break;
      case LayerKind::MaxPool2d:
        relevance = pool_backward(x, PoolKind::Max, l.kernel, l.stride, relevance);
        break;
      case LayerKind::AvgPool2d:
        relevance = pool_backward(x, PoolKind::Avg, l.kernel, l.stride, relevance);
        break;
      case LayerKind::GlobalAvgPool:
        relevance = global_pool_backward(x, relevance);
        break;
      case LayerKind::Flatten:
        relevance = relevance.reshaped(x.shape());
        break;
      case LayerKind::Relu:
        break;
      default:
        fail(ErrorKind::Contract, "no relevance rule for layer " + std::to_string(i));
    }
  }
  return relevance;
}

RelevanceMap lrp_backward(const ModelGraph& model, const ForwardTrace& trace, const Tensor& seed,
                          int stop_layer) {
  if (!model.is_tap(stop_layer))
    fail(ErrorKind::Contract, "layer " + std::to_string(stop_layer) + " is not a tap point");
  if (seed.shape() != trace.embedding.shape())
    fail(ErrorKind::Contract, "seed shape " + shape_to_string(seed.shape()) +
                                  " does not match embedding " + shape_to_string(trace.embedding.shape()));
  return {stop_layer, propagate_relevance(model, trace, seed, model.embedding_index, stop_layer)};
}

PixelRelevance masked_pixel_backprop(const ModelGraph& model, const ForwardTrace& trace, int layer,
                                     const Keypoint& keypoint, int match_id) {
  const auto it = trace.activations.find(layer);
  if (it == trace.activations.end())
    fail(ErrorKind::Contract, "layer " + std::to_string(layer) + " is not a tap point");
  const Tensor& act = it->second;
  if (keypoint.i < 0 || keypoint.i >= act.dim(2) || keypoint.j < 0 || keypoint.j >= act.dim(1))
    fail(ErrorKind::Contract, "keypoint (" + std::to_string(keypoint.i) + ", " +
                                  std::to_string(keypoint.j) + ") outside activation " +
                                  shape_to_string(act.shape()));
  Tensor masked(act.shape());
  for (int c = 0; c < act.dim(0); ++c) masked.at(c, keypoint.j, keypoint.i) = act.at(c, keypoint.j, keypoint.i);
  return {match_id, propagate_relevance(model, trace, std::move(masked), layer, -1)};
}

PixelRect receptive_field(const ModelGraph& model, int layer, const Keypoint& keypoint) {
  const auto shapes = model.output_shapes();
  int x0 = keypoint.i, x1 = keypoint.i, y0 = keypoint.j, y1 = keypoint.j;
  for (int i = layer; i >= 0; --i) {
    const auto& l = model.layers[static_cast<std::size_t>(i)];
    const Shape in_shape = i == 0 ? Shape{model.input.channels, model.input.height, model.input.width}
                                  : shapes[static_cast<std::size_t>(i - 1)];
    if (l.kind == LayerKind::Conv2d || l.kind == LayerKind::MaxPool2d ||
        l.kind == LayerKind::AvgPool2d) {
      const int pad = l.kind == LayerKind::Conv2d ? l.padding : 0;
      x0 = std::max(0, x0 * l.stride - pad);
      y0 = std::max(0, y0 * l.stride - pad);
      x1 = std::min(in_shape[2] - 1, x1 * l.stride - pad + l.kernel - 1);
      y1 = std::min(in_shape[1] - 1, y1 * l.stride - pad + l.kernel - 1);
    } else if (l.kind != LayerKind::Relu) {
      fail(ErrorKind::Contract, "receptive field undefined through layer " + std::to_string(i));
    }
  }
  return {x0, y0, x1, y1};
}

}  // namespace pairx
