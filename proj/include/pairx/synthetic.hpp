#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "pairx/geometry.hpp"
#include "pairx/image.hpp"
#include "pairx/model.hpp"
#include "pairx/rng.hpp"

namespace pairx::synthetic {

// Fixed blob-detecting embedding model: centre-surround colour/luminance
// filters, pooled and mixed over three more conv stages, then a linear
// projection of the 8x8 pooled map. Input 3 x size x size (size divisible by 16).
ModelGraph make_blob_model(int input_size = 128, std::uint64_t seed = 7);

struct Dot {
  double x, y;    // canonical frame, pixels
  double radius;  // Gaussian sigma
  std::array<double, 3> color;  // 0..255
};

// An "individual": a random dot pattern on a body shape shared by everyone.
struct Individual {
  std::vector<Dot> dots;
};

struct View {
  Homography frame;  // canonical frame -> image pixels
  double gain = 1.0;
  double offset = 0.0;
  std::uint64_t noise_seed = 0;
};

struct DatasetOptions {
  int individuals = 40;
  int views = 5;
  int image_size = 160;
  int dots_per_individual = 24;
  double perturbation = 1.0;  // scales the random view homographies
  double noise_sigma = 4.0;   // 8-bit units
  int query_views = 2;        // per evaluation identity; next `gallery_views` go to the gallery
  int gallery_views = 3;
  int train_individuals = 8;  // trailing identities used only as the train split
  int correspondences_per_pair = 12;
  int model_input = 128;
  std::uint64_t seed = 1;
};

Individual random_individual(Rng& rng, int image_size, int dots);
View random_view(Rng& rng, int image_size, double perturbation);
Image8 render_view(const Individual& who, const View& view, int image_size, double noise_sigma);

// Random homography close to identity about the image centre.
Homography random_homography(Rng& rng, int image_size, double strength);

struct GeneratedDataset {
  std::filesystem::path manifest;
  std::filesystem::path correspondences;
  std::filesystem::path model;
  int images = 0;
};

// Writes images/, manifest.jsonl, correspondences.jsonl and model.pxw under `dir`.
GeneratedDataset generate_dataset(const std::filesystem::path& dir, const DatasetOptions& options);

}  // namespace pairx::synthetic
