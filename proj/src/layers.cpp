#include "pairx/layers.hpp"

#include <algorithm>
#include <array>

#include "pairx/error.hpp"

namespace pairx {

namespace {

constexpr std::array<std::pair<LayerKind, const char*>, 7> kKindNames{{
    {LayerKind::Conv2d, "conv2d"},
    {LayerKind::Relu, "relu"},
    {LayerKind::MaxPool2d, "maxpool2d"},
    {LayerKind::AvgPool2d, "avgpool2d"},
    {LayerKind::Linear, "linear"},
    {LayerKind::Flatten, "flatten"},
    {LayerKind::GlobalAvgPool, "global_avg_pool"},
}};

void require_rank(const Tensor& t, int rank, const char* what) {
  if (t.rank() != rank)
    fail(ErrorKind::Contract, std::string(what) + " expects a rank-" + std::to_string(rank) +
                                  " tensor, got " + shape_to_string(t.shape()));
}

}  // namespace

std::string to_string(LayerKind kind) {
  for (const auto& [k, name] : kKindNames)
    if (k == kind) return name;
  return "unknown";
}

std::optional<LayerKind> parse_layer_kind(const std::string& name) {
  for (const auto& [k, n] : kKindNames)
    if (name == n) return k;
  return std::nullopt;
}

void LayerSpec::validate(int index) const {
  const std::string where = "layer " + std::to_string(index) + " (" + to_string(kind) + ")";
  switch (kind) {
    case LayerKind::Conv2d:
    case LayerKind::MaxPool2d:
    case LayerKind::AvgPool2d:
      if (kernel < 1) fail(ErrorKind::Contract, where + ": kernel must be >= 1");
      if (stride < 1) fail(ErrorKind::Contract, where + ": stride must be >= 1");
      if (padding < 0) fail(ErrorKind::Contract, where + ": padding must be >= 0");
      if (kind != LayerKind::Conv2d && padding != 0)
        fail(ErrorKind::Contract, where + ": pooling does not support padding");
      break;
    default:
      break;
  }
  if (kind == LayerKind::Conv2d || kind == LayerKind::Linear) {
    if (in_channels < 1 || out_channels < 1)
      fail(ErrorKind::Contract, where + ": channel/feature counts must be >= 1");
    if (weight.empty() || bias.empty())
      fail(ErrorKind::Contract, where + ": weight and bias tensor names are required");
  }
}

int conv_output_extent(int n, int kernel, int stride, int padding) {
  const int span = n + 2 * padding - kernel;
  if (span < 0) return 0;
  return span / stride + 1;
}

Tensor conv2d_forward(const Tensor& input, const Tensor& weights, const Tensor& bias,
                      int stride, int padding) {
  require_rank(input, 3, "conv2d input");
  require_rank(weights, 4, "conv2d weights");
  const int in_c = input.dim(0), in_h = input.dim(1), in_w = input.dim(2);
  const int out_c = weights.dim(0), kh = weights.dim(2), kw = weights.dim(3);
  if (weights.dim(1) != in_c)
    fail(ErrorKind::Contract, "conv2d shape mismatch: input " + shape_to_string(input.shape()) +
                                  " vs kernel " + shape_to_string(weights.shape()));
  if (bias.rank() != 1 || bias.dim(0) != out_c)
    fail(ErrorKind::Contract, "conv2d shape mismatch: bias " + shape_to_string(bias.shape()) +
                                  " vs kernel " + shape_to_string(weights.shape()));
  if (stride < 1 || padding < 0) fail(ErrorKind::Contract, "conv2d: invalid stride/padding");
  const int out_h = conv_output_extent(in_h, kh, stride, padding);
  const int out_w = conv_output_extent(in_w, kw, stride, padding);
  if (out_h < 1 || out_w < 1)
    fail(ErrorKind::Contract, "conv2d shape mismatch: kernel " + shape_to_string(weights.shape()) +
                                  " larger than padded input " + shape_to_string(input.shape()));

  Tensor out({out_c, out_h, out_w});
  const auto w = weights.data();
  for (int o = 0; o < out_c; ++o) {
    for (int oy = 0; oy < out_h; ++oy) {
      for (int ox = 0; ox < out_w; ++ox) {
        double acc = 0.0;
        for (int c = 0; c < in_c; ++c) {
          const std::size_t wbase = (static_cast<std::size_t>(o) * in_c + c) * kh * kw;
          for (int ky = 0; ky < kh; ++ky) {
            const int iy = oy * stride - padding + ky;
            if (iy < 0 || iy >= in_h) continue;
            for (int kx = 0; kx < kw; ++kx) {
              const int ix = ox * stride - padding + kx;
              if (ix < 0 || ix >= in_w) continue;
              acc += static_cast<double>(input.at(c, iy, ix)) *
                     static_cast<double>(w[wbase + static_cast<std::size_t>(ky) * kw + kx]);
            }
          }
        }
        acc += static_cast<double>(bias[static_cast<std::size_t>(o)]);
        out.at(o, oy, ox) = static_cast<float>(acc);
      }
    }
  }
  return out;
}

Tensor relu_forward(const Tensor& input) {
  Tensor out = input;
  for (float& v : out.mutable_data()) v = v > 0.0f ? v : 0.0f;
  return out;
}

Tensor pool_forward(const Tensor& input, PoolKind kind, int kernel, int stride) {
  require_rank(input, 3, "pool");
  if (kernel < 1 || stride < 1) fail(ErrorKind::Contract, "pool: kernel and stride must be >= 1");
  const int c = input.dim(0), h = input.dim(1), w = input.dim(2);
  if (h < kernel || w < kernel)
    fail(ErrorKind::Contract, "pool window " + std::to_string(kernel) + " larger than input " +
                                  shape_to_string(input.shape()));
  const int out_h = conv_output_extent(h, kernel, stride, 0);
  const int out_w = conv_output_extent(w, kernel, stride, 0);
  Tensor out({c, out_h, out_w});
  const double area = static_cast<double>(kernel) * kernel;
  for (int ch = 0; ch < c; ++ch)
    for (int oy = 0; oy < out_h; ++oy)
      for (int ox = 0; ox < out_w; ++ox) {
        if (kind == PoolKind::Max) {
          float best = input.at(ch, oy * stride, ox * stride);
          for (int ky = 0; ky < kernel; ++ky)
            for (int kx = 0; kx < kernel; ++kx)
              best = std::max(best, input.at(ch, oy * stride + ky, ox * stride + kx));
          out.at(ch, oy, ox) = best;
        } else {
          double acc = 0.0;
          for (int ky = 0; ky < kernel; ++ky)
            for (int kx = 0; kx < kernel; ++kx)
              acc += input.at(ch, oy * stride + ky, ox * stride + kx);
          out.at(ch, oy, ox) = static_cast<float>(acc / area);
        }
      }
  return out;
}

Tensor linear_forward(const Tensor& input, const Tensor& weights, const Tensor& bias) {
  require_rank(input, 1, "linear input");
  require_rank(weights, 2, "linear weights");
  const int out_f = weights.dim(0), in_f = weights.dim(1);
  if (input.dim(0) != in_f)
    fail(ErrorKind::Contract, "linear dimension mismatch: input " + shape_to_string(input.shape()) +
                                  " vs weights " + shape_to_string(weights.shape()));
  if (bias.rank() != 1 || bias.dim(0) != out_f)
    fail(ErrorKind::Contract, "linear dimension mismatch: bias " + shape_to_string(bias.shape()) +
                                  " vs weights " + shape_to_string(weights.shape()));
  Tensor out({out_f});
  const auto w = weights.data();
  for (int o = 0; o < out_f; ++o) {
    double acc = 0.0;
    const std::size_t row = static_cast<std::size_t>(o) * in_f;
    for (int i = 0; i < in_f; ++i)
      acc += static_cast<double>(w[row + i]) * static_cast<double>(input[static_cast<std::size_t>(i)]);
    acc += static_cast<double>(bias[static_cast<std::size_t>(o)]);
    out[static_cast<std::size_t>(o)] = static_cast<float>(acc);
  }
  return out;
}

Tensor flatten_forward(const Tensor& input) {
  return input.reshaped({static_cast<int>(input.size())});
}

Tensor global_avg_pool_forward(const Tensor& input) {
  require_rank(input, 3, "global_avg_pool");
  const int c = input.dim(0);
  const std::size_t area = static_cast<std::size_t>(input.dim(1)) * input.dim(2);
  Tensor out({c});
  const auto d = input.data();
  for (int ch = 0; ch < c; ++ch) {
    double acc = 0.0;
    for (std::size_t k = 0; k < area; ++k) acc += d[ch * area + k];
    out[static_cast<std::size_t>(ch)] = static_cast<float>(acc / static_cast<double>(area));
  }
  return out;
}

}  // namespace pairx
