#pragma once

#include <optional>
#include <string>

#include "pairx/tensor.hpp"

namespace pairx {

enum class LayerKind { Conv2d, Relu, MaxPool2d, AvgPool2d, Linear, Flatten, GlobalAvgPool };

std::string to_string(LayerKind kind);
std::optional<LayerKind> parse_layer_kind(const std::string& name);

enum class PoolKind { Max, Avg };

struct LayerSpec {
  LayerKind kind = LayerKind::Relu;
  // conv2d / pooling
  int kernel = 1;
  int stride = 1;
  int padding = 0;
  // conv2d: in/out channels; linear: in/out features
  int in_channels = 0;
  int out_channels = 0;
  std::string weight;  // tensor names in the weight container
  std::string bias;

  // Throws on stride < 1, kernel < 1, padding < 0 or missing parameters.
  void validate(int index) const;
};

// Dot products and window sums accumulate in double and round to float once.
// Conv accumulation order: for each input channel, the kernel window in
// row-major order; bias is added last.
Tensor conv2d_forward(const Tensor& input, const Tensor& weights, const Tensor& bias,
                      int stride, int padding);
Tensor relu_forward(const Tensor& input);
// Windows are visited in row-major order; max-pool ties go to the first cell.
Tensor pool_forward(const Tensor& input, PoolKind kind, int kernel, int stride);
Tensor linear_forward(const Tensor& input, const Tensor& weights, const Tensor& bias);
Tensor flatten_forward(const Tensor& input);
Tensor global_avg_pool_forward(const Tensor& input);

// floor((n + 2p - k) / s) + 1, or <= 0 when the window does not fit.
int conv_output_extent(int n, int kernel, int stride, int padding);

}  // namespace pairx
