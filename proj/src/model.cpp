#include "pairx/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>

#include <json.hpp>

#include "pairx/error.hpp"

namespace pairx {

using nlohmann::json;

namespace {

constexpr std::size_t kAlign = 64;
constexpr std::size_t kPreambleBytes = 4 + 4 + 8;

std::size_t align_up(std::size_t n) { return (n + kAlign - 1) / kAlign * kAlign; }

template <typename T>
void put_le(std::string& out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i)
    out.push_back(static_cast<char>((static_cast<std::uint64_t>(value) >> (8 * i)) & 0xffu));
}

template <typename T>
T get_le(const unsigned char* p) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return static_cast<T>(v);
}

Shape expected_weight_shape(const LayerSpec& spec) {
  if (spec.kind == LayerKind::Conv2d)
    return {spec.out_channels, spec.in_channels, spec.kernel, spec.kernel};
  return {spec.out_channels, spec.in_channels};
}

json layer_to_json(const LayerSpec& s) {
  json j{{"kind", to_string(s.kind)}};
  switch (s.kind) {
    case LayerKind::Conv2d:
      j["in_channels"] = s.in_channels;
      j["out_channels"] = s.out_channels;
      j["kernel"] = s.kernel;
      j["stride"] = s.stride;
      j["padding"] = s.padding;
      j["weight"] = s.weight;
      j["bias"] = s.bias;
      break;
    case LayerKind::MaxPool2d:
    case LayerKind::AvgPool2d:
      j["kernel"] = s.kernel;
      j["stride"] = s.stride;
      break;
    case LayerKind::Linear:
      j["in_features"] = s.in_channels;
      j["out_features"] = s.out_channels;
      j["weight"] = s.weight;
      j["bias"] = s.bias;
      break;
    default:
      break;
  }
  return j;
}

LayerSpec layer_from_json(const json& j, int index) {
  LayerSpec s;
  const std::string kind = j.at("kind").get<std::string>();
  const auto parsed = parse_layer_kind(kind);
  if (!parsed)
    fail(ErrorKind::Contract, "unsupported layer kind '" + kind + "' at layer " + std::to_string(index));
  s.kind = *parsed;
  switch (s.kind) {
    case LayerKind::Conv2d:
      s.in_channels = j.at("in_channels").get<int>();
      s.out_channels = j.at("out_channels").get<int>();
      s.kernel = j.at("kernel").get<int>();
      s.stride = j.value("stride", 1);
      s.padding = j.value("padding", 0);
      s.weight = j.at("weight").get<std::string>();
      s.bias = j.at("bias").get<std::string>();
      break;
    case LayerKind::MaxPool2d:
    case LayerKind::AvgPool2d:
      s.kernel = j.at("kernel").get<int>();
      s.stride = j.value("stride", s.kernel);
      break;
    case LayerKind::Linear:
      s.in_channels = j.at("in_features").get<int>();
      s.out_channels = j.at("out_features").get<int>();
      s.weight = j.at("weight").get<std::string>();
      s.bias = j.at("bias").get<std::string>();
      break;
    default:
      break;
  }
  return s;
}

}  // namespace

const Tensor& ModelGraph::weight(const std::string& tensor_name) const {
  const auto it = weights.find(tensor_name);
  if (it == weights.end()) fail(ErrorKind::Contract, "missing weight tensor '" + tensor_name + "'");
  return it->second;
}

bool ModelGraph::is_tap(int layer_index) const {
  return std::binary_search(tap_points.begin(), tap_points.end(), layer_index);
}

int ModelGraph::cumulative_stride(int layer_index) const {
  int stride = 1;
  for (int i = 0; i <= layer_index && i < static_cast<int>(layers.size()); ++i) {
    const auto& l = layers[static_cast<std::size_t>(i)];
    if (l.kind == LayerKind::Conv2d || l.kind == LayerKind::MaxPool2d ||
        l.kind == LayerKind::AvgPool2d)
      stride *= l.stride;
  }
  return stride;
}

std::vector<Shape> ModelGraph::output_shapes() const {
  std::vector<Shape> shapes;
  Shape cur{input.channels, input.height, input.width};
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    const std::string where = "layer " + std::to_string(i);
    switch (l.kind) {
      case LayerKind::Conv2d: {
        if (cur.size() != 3 || cur[0] != l.in_channels)
          fail(ErrorKind::Contract, "shape mismatch at " + where + ": conv expects " +
                                        std::to_string(l.in_channels) + " channels, input is " +
                                        shape_to_string(cur));
        const int h = conv_output_extent(cur[1], l.kernel, l.stride, l.padding);
        const int w = conv_output_extent(cur[2], l.kernel, l.stride, l.padding);
        if (h < 1 || w < 1)
          fail(ErrorKind::Contract, "shape mismatch at " + where + ": kernel exceeds input " +
                                        shape_to_string(cur));
        cur = {l.out_channels, h, w};
        break;
      }
      case LayerKind::MaxPool2d:
      case LayerKind::AvgPool2d: {
        if (cur.size() != 3 || cur[1] < l.kernel || cur[2] < l.kernel)
          fail(ErrorKind::Contract,
               "shape mismatch at " + where + ": pool window exceeds input " + shape_to_string(cur));
        cur = {cur[0], conv_output_extent(cur[1], l.kernel, l.stride, 0),
               conv_output_extent(cur[2], l.kernel, l.stride, 0)};
        break;
      }
      case LayerKind::Linear:
        if (cur.size() != 1 || cur[0] != l.in_channels)
          fail(ErrorKind::Contract, "shape mismatch at " + where + ": linear expects " +
                                        std::to_string(l.in_channels) + " features, input is " +
                                        shape_to_string(cur));
        cur = {l.out_channels};
        break;
      case LayerKind::Flatten:
        cur = {static_cast<int>(shape_volume(cur))};
        break;
      case LayerKind::GlobalAvgPool:
        if (cur.size() != 3)
          fail(ErrorKind::Contract, "shape mismatch at " + where + ": global pool expects rank 3");
        cur = {cur[0]};
        break;
      case LayerKind::Relu:
        break;
    }
    shapes.push_back(cur);
  }
  return shapes;
}

void ModelGraph::validate() const {
  if (input.channels < 1 || input.height < 1 || input.width < 1)
    fail(ErrorKind::Contract, "input spec must have positive extents");
  if (mean.size() != static_cast<std::size_t>(input.channels) ||
      stddev.size() != static_cast<std::size_t>(input.channels))
    fail(ErrorKind::Contract, "normalization must list one mean/std per input channel");
  for (float s : stddev)
    if (!(s > 0.0f)) fail(ErrorKind::Contract, "normalization std must be positive");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    l.validate(static_cast<int>(i));
    if (l.kind != LayerKind::Conv2d && l.kind != LayerKind::Linear) continue;
    const Shape want_w = expected_weight_shape(l);
    const Shape want_b{l.out_channels};
    const auto wi = weights.find(l.weight);
    const auto bi = weights.find(l.bias);
    if (wi == weights.end() || bi == weights.end())
      fail(ErrorKind::Contract, "layer " + std::to_string(i) + " references a missing weight tensor");
    if (wi->second.shape() != want_w)
      fail(ErrorKind::Contract, "shape mismatch at layer " + std::to_string(i) + ": declared " +
                                    shape_to_string(want_w) + ", stored " +
                                    shape_to_string(wi->second.shape()));
    if (bi->second.shape() != want_b)
      fail(ErrorKind::Contract, "shape mismatch at layer " + std::to_string(i) + ": declared bias " +
                                    shape_to_string(want_b) + ", stored " +
                                    shape_to_string(bi->second.shape()));
  }
  if (embedding_index < 0 || embedding_index >= static_cast<int>(layers.size()))
    fail(ErrorKind::Contract, "embedding index out of range");
  const auto shapes = output_shapes();
  if (shapes[static_cast<std::size_t>(embedding_index)].size() != 1)
    fail(ErrorKind::Contract, "embedding layer output must be rank 1");
  if (!std::is_sorted(tap_points.begin(), tap_points.end()) ||
      std::adjacent_find(tap_points.begin(), tap_points.end()) != tap_points.end())
    fail(ErrorKind::Contract, "tap points must be strictly ascending");
  for (int t : tap_points) {
    if (t < 0 || t >= embedding_index)
      fail(ErrorKind::Contract, "tap " + std::to_string(t) + " must precede the embedding layer");
    if (shapes[static_cast<std::size_t>(t)].size() != 3)
      fail(ErrorKind::Contract, "tap " + std::to_string(t) + " does not produce a rank-3 activation");
  }
}

void save_model(const ModelGraph& model, const std::filesystem::path& path) {
  model.validate();
  json header;
  header["name"] = model.name;
  header["layout"] = "CHW";
  header["tap_activation"] = "post";
  header["input"] = {{"channels", model.input.channels},
                     {"height", model.input.height},
                     {"width", model.input.width}};
  header["normalization"] = {{"mean", model.mean}, {"std", model.stddev}};
  json layers = json::array();
  for (const auto& l : model.layers) layers.push_back(layer_to_json(l));
  header["layers"] = std::move(layers);
  header["tap_points"] = model.tap_points;
  header["embedding_index"] = model.embedding_index;

  // Offsets depend on the header length, which depends on the offsets; fix
  // the payload base by iterating until the header size is stable.
  std::size_t base = 0;
  std::string header_text;
  for (int pass = 0; pass < 8; ++pass) {
    json dir = json::array();
    std::size_t offset = base;
    for (const auto& [name, t] : model.weights) {
      dir.push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset}});
      offset = align_up(offset + t.size() * sizeof(float));
    }
    header["tensors"] = std::move(dir);
    header_text = header.dump();
    const std::size_t needed = align_up(kPreambleBytes + header_text.size());
    if (needed == base) break;
    base = needed;
  }

  std::string blob;
  blob.append(kContainerMagic.data(), kContainerMagic.size());
  put_le<std::uint32_t>(blob, kContainerVersion);
  put_le<std::uint64_t>(blob, header_text.size());
  blob += header_text;
  for (const auto& [name, t] : model.weights) {
    blob.resize(align_up(blob.size()), '\0');
    for (float v : t.data()) put_le<std::uint32_t>(blob, std::bit_cast<std::uint32_t>(v));
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::Io, "cannot write container " + path.string());
  out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!out) fail(ErrorKind::Io, "failed writing container " + path.string());
}

ModelGraph load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open model container " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());

  if (bytes.size() < 4 || std::memcmp(bytes.data(), kContainerMagic.data(), 4) != 0)
    fail(ErrorKind::Io, "unrecognized container: " + path.string());
  if (bytes.size() < kPreambleBytes) fail(ErrorKind::Io, "truncated container: missing preamble");
  const auto version = get_le<std::uint32_t>(p + 4);
  if (version != kContainerVersion)
    fail(ErrorKind::Io, "unsupported container version " + std::to_string(version));
  const auto header_len = get_le<std::uint64_t>(p + 8);
  if (header_len > bytes.size() - kPreambleBytes)
    fail(ErrorKind::Io, "truncated container: header extends past end of file");

  json header;
  try {
    header = json::parse(bytes.substr(kPreambleBytes, header_len));
  } catch (const json::exception& e) {
    fail(ErrorKind::Io, std::string("malformed container header: ") + e.what());
  }

  ModelGraph model;
  try {
    if (header.value("layout", "CHW") != "CHW")
      fail(ErrorKind::Io, "unsupported tensor layout '" + header.value("layout", "") + "'");
    model.name = header.value("name", "");
    const auto& inp = header.at("input");
    model.input = {inp.at("channels").get<int>(), inp.at("height").get<int>(),
                   inp.at("width").get<int>()};
    model.mean = header.at("normalization").at("mean").get<std::vector<float>>();
    model.stddev = header.at("normalization").at("std").get<std::vector<float>>();
    int index = 0;
    for (const auto& lj : header.at("layers")) model.layers.push_back(layer_from_json(lj, index++));
    model.tap_points = header.at("tap_points").get<std::vector<int>>();
    model.embedding_index = header.at("embedding_index").get<int>();

    for (const auto& tj : header.at("tensors")) {
      const std::string name = tj.at("name").get<std::string>();
      const Shape shape = tj.at("shape").get<Shape>();
      const auto offset = tj.at("offset").get<std::uint64_t>();
      if (offset % kAlign != 0)
        fail(ErrorKind::Io, "tensor '" + name + "' payload is not 64-byte aligned");
      const std::size_t count = shape_volume(shape);
      if (offset > bytes.size() || count * sizeof(float) > bytes.size() - offset)
        fail(ErrorKind::Io, "truncated container: tensor '" + name + "' extends past end of file");
      std::vector<float> data(count);
      for (std::size_t k = 0; k < count; ++k)
        data[k] = std::bit_cast<float>(get_le<std::uint32_t>(p + offset + 4 * k));
      model.weights.emplace(name, Tensor(shape, std::move(data)));
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::Io, std::string("malformed container header: ") + e.what());
  } catch (const Error& e) {
    fail(ErrorKind::Io, e.what());
  }
  try {
    model.validate();
  } catch (const Error& e) {
    fail(ErrorKind::Io, "invalid container " + path.string() + ": " + e.what());
  }
  return model;
}

ForwardTrace forward(const ModelGraph& model, const Tensor& input) {
  const Shape want{model.input.channels, model.input.height, model.input.width};
  if (input.shape() != want)
    fail(ErrorKind::Contract, "input shape " + shape_to_string(input.shape()) +
                                  " does not match model input " + shape_to_string(want));
  ForwardTrace trace;
  trace.input = input;
  trace.layer_outputs.reserve(static_cast<std::size_t>(model.embedding_index) + 1);
  for (int i = 0; i <= model.embedding_index; ++i) {
    const auto& l = model.layers[static_cast<std::size_t>(i)];
    const Tensor& x = trace.layer_input(i);
    Tensor y;
    switch (l.kind) {
      case LayerKind::Conv2d:
        y = conv2d_forward(x, model.weight(l.weight), model.weight(l.bias), l.stride, l.padding);
        break;
      case LayerKind::Relu:
        y = relu_forward(x);
        break;
      case LayerKind::MaxPool2d:
        y = pool_forward(x, PoolKind::Max, l.kernel, l.stride);
        break;
      case LayerKind::AvgPool2d:
        y = pool_forward(x, PoolKind::Avg, l.kernel, l.stride);
        break;
      case LayerKind::Linear:
        y = linear_forward(x, model.weight(l.weight), model.weight(l.bias));
        break;
      case LayerKind::Flatten:
        y = flatten_forward(x);
        break;
      case LayerKind::GlobalAvgPool:
        y = global_avg_pool_forward(x);
        break;
    }
    if (model.is_tap(i)) trace.activations.emplace(i, y);
    trace.layer_outputs.push_back(std::move(y));
  }
  trace.embedding = trace.layer_outputs.back();
  return trace;
}

double cosine_similarity(const Tensor& a, const Tensor& b) {
  if (a.rank() != 1 || b.rank() != 1 || a.size() != b.size())
    fail(ErrorKind::Contract, "cosine similarity needs equal-length vectors, got " +
                                  shape_to_string(a.shape()) + " and " + shape_to_string(b.shape()));
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += static_cast<double>(a[i]) * b[i];
    na += static_cast<double>(a[i]) * a[i];
    nb += static_cast<double>(b[i]) * b[i];
  }
  if (na <= 0.0 || nb <= 0.0)
    fail(ErrorKind::Numerical, "zero-norm embedding: degenerate model output");
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

}  // namespace pairx
