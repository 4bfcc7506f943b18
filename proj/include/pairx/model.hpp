#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "pairx/layers.hpp"
#include "pairx/tensor.hpp"

namespace pairx {

struct InputSpec {
  int channels = 3;
  int height = 0;
  int width = 0;
};

// Sequential embedding model. Layer i consumes the output of layer i-1; a tap
// index t designates the output of layer t.
struct ModelGraph {
  std::string name;
  InputSpec input;
  std::vector<float> mean;  // per input channel
  std::vector<float> stddev;
  std::vector<LayerSpec> layers;
  std::vector<int> tap_points;  // ascending
  int embedding_index = -1;
  std::map<std::string, Tensor> weights;

  const Tensor& weight(const std::string& name) const;

  // Output shape of every layer, inferred from the input spec.
  std::vector<Shape> output_shapes() const;

  // Product of conv/pool strides for layers 0..layer_index inclusive.
  int cumulative_stride(int layer_index) const;

  bool is_tap(int layer_index) const;

  // Checks parameters, weight shapes, shape propagation, tap/embedding
  // invariants. Throws Error(Contract) naming the offending layer.
  void validate() const;
};

struct ForwardTrace {
  Tensor input;                       // normalized model input
  std::vector<Tensor> layer_outputs;  // outputs of layers 0..embedding_index
  std::map<int, Tensor> activations;  // tapped outputs
  Tensor embedding;

  // Input tensor seen by layer `index`.
  const Tensor& layer_input(int index) const {
    return index == 0 ? input : layer_outputs[static_cast<std::size_t>(index - 1)];
  }
};

// Weight container "PXW1": magic, u32 LE version, u64 LE header length,
// UTF-8 JSON header, then 64-byte aligned little-endian f32 payloads.
inline constexpr std::array<char, 4> kContainerMagic{'P', 'X', 'W', '1'};
inline constexpr std::uint32_t kContainerVersion = 1;

ModelGraph load_model(const std::filesystem::path& path);
void save_model(const ModelGraph& model, const std::filesystem::path& path);

// `input` is the already normalized channels x height x width tensor.
ForwardTrace forward(const ModelGraph& model, const Tensor& input);

double cosine_similarity(const Tensor& a, const Tensor& b);

}  // namespace pairx
