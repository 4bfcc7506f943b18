#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "pairx/evaluation.hpp"
#include "pairx/geometry.hpp"
#include "pairx/lrp.hpp"
#include "pairx/matching.hpp"
#include "pairx/model.hpp"

namespace pairx {

inline constexpr const char* kEngineVersion = "1.0.0";

struct RunConfig {
  std::filesystem::path model_path;
  std::optional<int> layer;  // nullopt: middle tap, unless layer_auto
  bool layer_auto = false;
  int n_matches = 20;
  std::filesystem::path correspondence_path;  // optional
  std::filesystem::path manifest_path;
  std::filesystem::path output_dir = ".";
  std::uint64_t rng_seed = 0;
  int threads = 1;
  bool metric_clamp = true;  // clamp zero residual sums to 1e9 instead of dropping
  RansacOptions ransac;
  int k_init = 5;
  int k_cap = 20;
  int target_pairs = 1000;  // per class

  void validate() const;
  // Everything that affects outputs; the thread count is deliberately absent.
  nlohmann::json to_json() const;
};

// Everything computed for one image pair at one layer, before pixel backprop.
struct PairAnalysis {
  int layer_index = -1;
  int stride = 1;
  double cosine = 0.0;
  RelevanceMap relevance_a;
  RelevanceMap relevance_b;
  MatchSet matches;  // all mutual matches, scored
  MatchSet top;      // top-n by relevance
  std::optional<Homography> homography;
  ResidualMetric residual;
  std::optional<double> coverage;
};

PairAnalysis analyze_pair(const ModelGraph& model, const ForwardTrace& trace_a,
                          const ForwardTrace& trace_b, int layer, int n_matches,
                          const std::optional<Homography>& homography, bool metric_clamp = true);

// Default layer when none is requested: the middle tap.
int default_layer(const ModelGraph& model);

struct ExplainResult {
  double cosine = 0.0;
  int layer_index = -1;
  int total_matches = 0;
  int kept_matches = 0;
  std::filesystem::path png_path;
  std::filesystem::path json_path;
  std::vector<std::string> warnings;
};

// Forward both images, match at the layer, filter by relevance, backpropagate
// each kept match to the pixels and write explanation.png + explanation.json.
ExplainResult run_explain(const RunConfig& config, const std::filesystem::path& image_a,
                          const std::filesystem::path& image_b);

struct EvalResult {
  DatasetAggregate aggregate;
  std::vector<PairRecord> pairs;
  std::optional<LayerSelection> layer_selection;
  nlohmann::json report;
  std::filesystem::path report_path;
};

// Pair selection, per-pair metrics and dataset aggregates; writes report.json.
EvalResult run_eval(const RunConfig& config);

struct SweepResult {
  LayerSelection selection;
  nlohmann::json table;
  std::filesystem::path output_path;
};

// rho_res at every tap over train/train pairs; writes sweep.json.
SweepResult run_sweep(const RunConfig& config);

// Pair ids used to look up correspondences: "<query_id>::<gallery_id>".
std::string make_pair_id(const std::string& query_id, const std::string& gallery_id);

}  // namespace pairx
