#include "pairx/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>

#include <Eigen/Dense>
#include <json.hpp>

#include "pairx/error.hpp"
#include "pairx/pipeline.hpp"

namespace pairx::synthetic {

namespace {

constexpr std::array<double, 3> kBackground{25.0, 25.0, 25.0};
constexpr std::array<double, 3> kBody{42.0, 42.0, 48.0};

// Shared body: an ellipse centred in the canonical frame.
struct Body {
  double cx, cy, rx, ry;

  double inside(double x, double y) const {
    const double u = (x - cx) / rx, v = (y - cy) / ry;
    const double r = std::sqrt(u * u + v * v);
    // Soft edge about two canonical pixels wide.
    return std::clamp((1.0 - r) * std::min(rx, ry) / 2.0 + 0.5, 0.0, 1.0);
  }
};

Body body_for(int size) { return {size * 0.5, size * 0.5, size * 0.40, size * 0.34}; }

std::vector<float> gaussian_kernel(int k, double sigma) {
  std::vector<float> g(static_cast<std::size_t>(k) * k);
  const double c = (k - 1) / 2.0;
  double total = 0.0;
  for (int y = 0; y < k; ++y)
    for (int x = 0; x < k; ++x) {
      const double v = std::exp(-((x - c) * (x - c) + (y - c) * (y - c)) / (2 * sigma * sigma));
      g[static_cast<std::size_t>(y) * k + x] = static_cast<float>(v);
      total += v;
    }
  for (float& v : g) v = static_cast<float>(v / total);
  return g;
}

// Zero-sum centre-surround kernel, scaled so its positive lobe sums to 1.
std::vector<float> dog_kernel(int k, double s1, double s2) {
  const auto a = gaussian_kernel(k, s1);
  const auto b = gaussian_kernel(k, s2);
  std::vector<float> d(a.size());
  double positive = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    d[i] = a[i] - b[i];
    positive += std::max(0.0f, d[i]);
  }
  for (float& v : d) v = static_cast<float>(v / positive);
  return d;
}

void set_kernel(Tensor& w, int out, int in, const std::vector<float>& k, float scale = 1.0f) {
  const int kk = w.dim(2);
  for (int y = 0; y < kk; ++y)
    for (int x = 0; x < kk; ++x)
      w[((static_cast<std::size_t>(out) * w.dim(1) + in) * kk + y) * kk + x] +=
          scale * k[static_cast<std::size_t>(y) * kk + x];
}

void add_conv(ModelGraph& m, const std::string& name, int in, int out, int k, int pad, Tensor w, Tensor b) {
  LayerSpec s;
  s.kind = LayerKind::Conv2d;
  s.in_channels = in;
  s.out_channels = out;
  s.kernel = k;
  s.stride = 1;
  s.padding = pad;
  s.weight = name + ".weight";
  s.bias = name + ".bias";
  m.weights.emplace(s.weight, std::move(w));
  m.weights.emplace(s.bias, std::move(b));
  m.layers.push_back(s);
}

void add_simple(ModelGraph& m, LayerKind kind, int kernel = 1) {
  LayerSpec s;
  s.kind = kind;
  s.kernel = kernel;
  s.stride = kernel;
  m.layers.push_back(s);
}

// Nonnegative random mixing with a smoothed spatial footprint, plus an
// identity path so every input channel survives.
Tensor mixing_weights(Rng& rng, int in, int out) {
  Tensor w({out, in, 3, 3});
  const auto smooth = gaussian_kernel(3, 0.8);
  for (int o = 0; o < out; ++o) {
    if (o < in) set_kernel(w, o, o, smooth, 1.0f);
    for (int i = 0; i < in; ++i) {
      const double mix = uniform01(rng);
      if (mix < 0.6) continue;
      std::vector<float> k(9);
      for (auto& v : k) v = static_cast<float>(uniform01(rng) * 0.25);
      set_kernel(w, o, i, k, static_cast<float>(mix));
    }
  }
  return w;
}

}  // namespace

ModelGraph make_blob_model(int input_size, std::uint64_t seed) {
  if (input_size < 16 || input_size % 16 != 0)
    fail(ErrorKind::Contract, "blob model input size must be a positive multiple of 16");
  Rng rng(seed);
  ModelGraph m;
  m.name = "synthetic-blob";
  m.input = {3, input_size, input_size};
  m.mean = {0.5f, 0.5f, 0.5f};
  m.stddev = {0.25f, 0.25f, 0.25f};

  // Stage 1: luminance blob, three colour blobs, two opponent blobs.
  constexpr int c1 = 6;
  Tensor w0({c1, 3, 5, 5});
  Tensor b0({c1});
  const auto dog = dog_kernel(5, 0.9, 2.0);
  for (int c = 0; c < 3; ++c) set_kernel(w0, 0, c, dog, 1.0f / 3.0f);
  for (int c = 0; c < 3; ++c) {
    set_kernel(w0, 1 + c, c, dog, 1.0f);
    for (int o = 0; o < 3; ++o) set_kernel(w0, 1 + c, o, dog, -0.25f);
  }
  // Opponent blobs: yellow versus blue, red versus green.
  set_kernel(w0, 4, 0, dog, 0.5f);
  set_kernel(w0, 4, 1, dog, 0.5f);
  set_kernel(w0, 4, 2, dog, -1.0f);
  set_kernel(w0, 5, 0, dog, 1.0f);
  set_kernel(w0, 5, 1, dog, -1.0f);
  for (int c = 0; c < c1; ++c) b0[static_cast<std::size_t>(c)] = -0.2f;
  add_conv(m, "blob", 3, c1, 5, 2, std::move(w0), std::move(b0));
  add_simple(m, LayerKind::Relu);                    // 1
  add_simple(m, LayerKind::MaxPool2d, 2);            // 2: size/2
  add_conv(m, "mix1", c1, 8, 3, 1, mixing_weights(rng, c1, 8), Tensor({8}));  // 3
  add_simple(m, LayerKind::Relu);                    // 4
  add_simple(m, LayerKind::MaxPool2d, 2);            // 5: size/4
  add_conv(m, "mix2", 8, 12, 3, 1, mixing_weights(rng, 8, 12), Tensor({12}));  // 6
  add_simple(m, LayerKind::Relu);                    // 7
  add_simple(m, LayerKind::MaxPool2d, 2);            // 8: size/8
  add_conv(m, "mix3", 12, 12, 3, 1, mixing_weights(rng, 12, 12), Tensor({12}));  // 9
  add_simple(m, LayerKind::Relu);                    // 10
  add_simple(m, LayerKind::AvgPool2d, 2);            // 11: size/16
  add_simple(m, LayerKind::Flatten);                 // 12

  const int grid = input_size / 16;
  const int features = 12 * grid * grid;
  constexpr int dims = 128;
  Tensor wl({dims, features});
  const double scale = 1.0 / std::sqrt(static_cast<double>(features));
  for (std::size_t k = 0; k < wl.size(); ++k) wl[k] = static_cast<float>(normal(rng) * scale);
  LayerSpec lin;
  lin.kind = LayerKind::Linear;
  lin.in_channels = features;
  lin.out_channels = dims;
  lin.weight = "embed.weight";
  lin.bias = "embed.bias";
  m.weights.emplace(lin.weight, std::move(wl));
  m.weights.emplace(lin.bias, Tensor({dims}));
  m.layers.push_back(lin);  // 13

  m.tap_points = {4, 5, 7, 8, 10};
  m.embedding_index = 13;
  m.validate();
  return m;
}

Homography random_homography(Rng& rng, int image_size, double strength) {
  const double c = image_size * 0.5;
  const double angle = uniform(rng, -0.12, 0.12) * strength;
  const double scale = 1.0 + uniform(rng, -0.08, 0.08) * strength;
  const double shear = uniform(rng, -0.04, 0.04) * strength;
  const double tx = uniform(rng, -0.05, 0.05) * image_size * strength;
  const double ty = uniform(rng, -0.05, 0.05) * image_size * strength;
  const double px = uniform(rng, -0.3, 0.3) * strength / image_size;
  const double py = uniform(rng, -0.3, 0.3) * strength / image_size;
  const Eigen::Matrix3d to_origin = (Eigen::Matrix3d() << 1, 0, -c, 0, 1, -c, 0, 0, 1).finished();
  const Eigen::Matrix3d back = (Eigen::Matrix3d() << 1, 0, c + tx, 0, 1, c + ty, 0, 0, 1).finished();
  const double ca = std::cos(angle) * scale, sa = std::sin(angle) * scale;
  const Eigen::Matrix3d core =
      (Eigen::Matrix3d() << ca, -sa + shear, 0, sa, ca, 0, px, py, 1).finished();
  const Eigen::Matrix3d m = back * core * to_origin;
  Homography h;
  for (int r = 0; r < 3; ++r)
    for (int k = 0; k < 3; ++k) h.matrix[r][k] = m(r, k) / m(2, 2);
  return h;
}

Individual random_individual(Rng& rng, int image_size, int dots) {
  const Body body = body_for(image_size);
  Individual who;
  while (static_cast<int>(who.dots.size()) < dots) {
    const double x = uniform(rng, body.cx - body.rx, body.cx + body.rx);
    const double y = uniform(rng, body.cy - body.ry, body.cy + body.ry);
    const double u = (x - body.cx) / (body.rx * 0.85), v = (y - body.cy) / (body.ry * 0.85);
    if (u * u + v * v > 1.0) continue;
    Dot d{x, y, uniform(rng, 1.8, 3.6) * image_size / 160.0,
          {uniform(rng, 60, 255), uniform(rng, 60, 255), uniform(rng, 60, 255)}};
    who.dots.push_back(d);
  }
  return who;
}

View random_view(Rng& rng, int image_size, double perturbation) {
  View v;
  v.frame = random_homography(rng, image_size, perturbation);
  v.gain = uniform(rng, 0.85, 1.15);
  v.offset = uniform(rng, -10.0, 10.0);
  v.noise_seed = rng();
  return v;
}

Image8 render_view(const Individual& who, const View& view, int image_size, double noise_sigma) {
  const Body body = body_for(image_size);
  const Homography inv = view.frame.inverse();
  Rng noise(view.noise_seed);
  Image8 img = Image8::blank(image_size, image_size, 3);
  for (int y = 0; y < image_size; ++y)
    for (int x = 0; x < image_size; ++x) {
      const auto p = project(inv, {x + 0.5, y + 0.5});
      std::array<double, 3> col = kBackground;
      if (p) {
        const double m = body.inside(p->x, p->y);
        for (int c = 0; c < 3; ++c)
          col[static_cast<std::size_t>(c)] += m * (kBody[static_cast<std::size_t>(c)] - kBackground[static_cast<std::size_t>(c)]);
        for (const auto& d : who.dots) {
          const double dx = p->x - d.x, dy = p->y - d.y;
          const double r2 = dx * dx + dy * dy;
          if (r2 > 16.0 * d.radius * d.radius) continue;
          const double w = std::exp(-r2 / (2.0 * d.radius * d.radius));
          for (std::size_t c = 0; c < 3; ++c) col[c] += w * (d.color[c] - col[c]);
        }
      }
      auto* px = img.px(x, y);
      for (std::size_t c = 0; c < 3; ++c) {
        const double v = col[c] * view.gain + view.offset + noise_sigma * normal(noise);
        px[c] = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
      }
    }
  return img;
}

GeneratedDataset generate_dataset(const std::filesystem::path& dir, const DatasetOptions& o) {
  if (o.individuals < 2 || o.views < 2 || o.train_individuals >= o.individuals ||
      o.query_views + o.gallery_views > o.views)
    fail(ErrorKind::Contract, "invalid synthetic dataset options");
  std::filesystem::create_directories(dir / "images");
  Rng rng(o.seed);
  const Body body = body_for(o.image_size);

  struct Entry {
    std::string path;
    std::string identity;
    std::string split;
    Homography frame;
  };
  std::vector<Entry> entries;
  const int eval_ids = o.individuals - o.train_individuals;
  for (int id = 0; id < o.individuals; ++id) {
    const Individual who = random_individual(rng, o.image_size, o.dots_per_individual);
    char name[32];
    std::snprintf(name, sizeof(name), "id%03d", id);
    for (int v = 0; v < o.views; ++v) {
      const View view = random_view(rng, o.image_size, o.perturbation);
      const std::string rel = std::string("images/") + name + "_v" + std::to_string(v) + ".png";
      write_png(render_view(who, view, o.image_size, o.noise_sigma), dir / rel);
      std::string split = "train";
      if (id < eval_ids) {
        if (v < o.query_views)
          split = "query";
        else if (v < o.query_views + o.gallery_views)
          split = "gallery";
        else
          continue;  // unused view of an evaluation identity
      }
      entries.push_back({rel, name, split, view.frame});
    }
  }

  GeneratedDataset out;
  out.manifest = dir / "manifest.jsonl";
  out.correspondences = dir / "correspondences.jsonl";
  out.model = dir / "model.pxw";
  out.images = static_cast<int>(entries.size());
  {
    std::ofstream mf(out.manifest, std::ios::trunc);
    for (const auto& e : entries)
      mf << nlohmann::json{{"image_path", e.path}, {"identity", e.identity}, {"split", e.split}}.dump() << "\n";
  }

  // Ground-truth correspondences follow the shared body frame, so they exist
  // for every pair, including different individuals.
  std::ofstream cf(out.correspondences, std::ios::trunc);
  Rng corr_rng(o.seed ^ 0x9e3779b97f4a7c15ULL);
  auto emit = [&](const Entry& a, const Entry& b) {
    nlohmann::json pts = nlohmann::json::array();
    for (int k = 0; k < o.correspondences_per_pair; ++k) {
      double x, y;
      do {
        x = uniform(corr_rng, body.cx - body.rx, body.cx + body.rx);
        y = uniform(corr_rng, body.cy - body.ry, body.cy + body.ry);
      } while (body.inside(x, y) < 1.0);
      const auto pa = project(a.frame, {x, y});
      const auto pb = project(b.frame, {x, y});
      auto r4 = [](double v) { return std::round(v * 1e4) / 1e4; };
      pts.push_back({r4(pa->x), r4(pa->y), r4(pb->x), r4(pb->y)});
    }
    cf << nlohmann::json{{"pair_id", make_pair_id(a.path, b.path)},
                         {"size_a", {o.image_size, o.image_size}},
                         {"size_b", {o.image_size, o.image_size}},
                         {"points", pts}}
              .dump()
       << "\n";
  };
  for (const auto& q : entries)
    for (const auto& g : entries) {
      const bool qg = q.split == "query" && g.split == "gallery";
      const bool tt = q.split == "train" && g.split == "train" && q.path < g.path;
      if (qg || tt) emit(q, g);
    }

  save_model(make_blob_model(o.model_input), out.model);
  return out;
}

}  // namespace pairx::synthetic
