#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "pairx/tensor.hpp"

namespace pairx {

enum class Split { Query, Gallery, Train };

struct ManifestEntry {
  std::string image_path;  // as written in the manifest; also the image id
  std::string identity;
  Split split = Split::Gallery;
};

// JSON-lines: {"image_path": ..., "identity": ..., "split": "query"|"gallery"|"train"}.
// Relative image paths resolve against the manifest's directory.
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);
std::filesystem::path resolve_image_path(const std::filesystem::path& manifest_path,
                                         const ManifestEntry& entry);

struct PairRecord {
  int query_index = -1;  // indices into the manifest
  int gallery_index = -1;
  std::string query_id;
  std::string gallery_id;
  double cosine_similarity = 0.0;
  bool is_correct = false;
  int layer_index = -1;
  std::optional<double> residual_score;  // inverted residual mean (S1)
  std::optional<double> coverage_score;  // relevance-weighted match coverage
  int num_matches = 0;
  bool residual_clamped = false;
};

enum class PairPool {
  QueryGallery,  // queries against the gallery split
  TrainTrain,    // train split against itself, self-pairs excluded
};

struct PairSelectionOptions {
  int k_init = 5;
  int k_cap = 20;
  int target = 1000;  // per class
  std::uint64_t seed = 0;
  PairPool pool = PairPool::QueryGallery;
};

struct PairSelection {
  std::vector<PairRecord> pairs;  // sorted by (query_index, gallery_index)
  int k_used = 0;
  std::size_t correct_available = 0;
  std::size_t incorrect_available = 0;
  std::vector<std::string> warnings;
};

// Pools each query's top-k gallery images by cosine similarity, growing k
// from k_init by one until both classes reach `target` or k hits k_cap, then
// samples up to `target` correct and `target` incorrect pairs.
PairSelection select_pairs(const std::vector<ManifestEntry>& manifest,
                           const std::vector<Tensor>& embeddings,
                           const PairSelectionOptions& options);

struct DatasetAggregate {
  std::optional<double> rho_res;
  std::optional<double> delta_res;
  std::optional<double> rho_mc;
  std::optional<double> delta_mc;
  int n_correct = 0;
  int n_incorrect = 0;
  int missing_res = 0;
  int missing_mc = 0;
  int bins_used_res = 0;
  int bins_used_mc = 0;
  int layer_index = -1;
};

DatasetAggregate aggregate(const std::vector<PairRecord>& records, int layer_index);

struct LayerScore {
  int layer_index = -1;
  std::optional<double> rho_res;
  int n_pairs = 0;
  int n_scored = 0;
};

struct LayerSelection {
  int best_layer = -1;
  std::vector<LayerScore> rows;  // ascending layer order
};

// Evaluates rho_res for each tap through `score_layer` and returns the argmax,
// ties toward the shallower layer. Throws when every rho is undefined.
LayerSelection select_layer(const std::vector<int>& taps,
                            const std::function<LayerScore(int)>& score_layer);

// Number of train pairs scored per layer during layer selection.
inline constexpr int kLayerSelectionPairs = 500;

}  // namespace pairx
