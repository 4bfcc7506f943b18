#include "pairx/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <map>

#include "pairx/error.hpp"
#include "pairx/image.hpp"
#include "pairx/parallel.hpp"
#include "pairx/render.hpp"
#include "pairx/stats.hpp"

namespace pairx {

using nlohmann::json;

namespace {

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json conventions_json() {
  return {{"tap_activation", "post"},
          {"descriptor_metric", "l2"},
          {"keypoint_order", "column,row"},
          {"keypoint_to_pixel", "(grid + 0.5) * cumulative_stride"},
          {"residual_units", "model-input pixels"},
          {"residual_clamp", kResidualClamp},
          {"lrp", {{"linear", "epsilon"}, {"conv2d", "zplus"}, {"epsilon", kLrpEpsilon}}},
          {"cosine_seed", "a_i * b_i / (|a| |b|)"},
          {"masked_seed", "raw activations"},
          {"kde", {{"kernel", "gaussian"}, {"bandwidth", "scott"}, {"grid_points", kKdeGridPoints}}}};
}

json engine_json() { return {{"name", "pairx"}, {"version", kEngineVersion}}; }

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  out << text;
  if (!out) fail(ErrorKind::Io, "failed writing " + path.string());
}

void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) fail(ErrorKind::Io, "cannot create output directory " + dir.string() + ": " + ec.message());
}

// Correspondence lookup by pair id; reversed ids return swapped points.
class CorrespondenceIndex {
 public:
  CorrespondenceIndex() = default;

  explicit CorrespondenceIndex(const std::filesystem::path& path) {
    if (path.empty()) return;
    std::vector<std::filesystem::path> files;
    if (std::filesystem::is_directory(path)) {
      for (const auto& e : std::filesystem::directory_iterator(path))
        if (e.is_regular_file() && (e.path().extension() == ".json" || e.path().extension() == ".jsonl"))
          files.push_back(e.path());
      std::sort(files.begin(), files.end());
    } else {
      files.push_back(path);
    }
    for (const auto& f : files)
      for (auto& rec : read_correspondences(f)) {
        records_.push_back(rec);
        by_id_.emplace(rec.pair_id, records_.size() - 1);
      }
  }

  std::size_t size() const { return records_.size(); }
  const CorrespondenceFile& front() const { return records_.front(); }

  std::optional<CorrespondenceFile> find(const std::string& id_a, const std::string& id_b) const {
    if (const auto it = by_id_.find(make_pair_id(id_a, id_b)); it != by_id_.end())
      return records_[it->second];
    if (const auto it = by_id_.find(make_pair_id(id_b, id_a)); it != by_id_.end()) {
      CorrespondenceFile swapped = records_[it->second];
      for (auto& c : swapped.points) std::swap(c.a, c.b);
      std::swap(swapped.size_a, swapped.size_b);
      return swapped;
    }
    return std::nullopt;
  }

 private:
  std::vector<CorrespondenceFile> records_;
  std::map<std::string, std::size_t> by_id_;
};

// Names an image may be recorded under in a correspondence file: as given,
// relative to the file's directory, then the bare file name.
std::vector<std::string> lookup_names(const std::filesystem::path& image,
                                      const std::filesystem::path& correspondence_path) {
  std::vector<std::string> names{image.generic_string()};
  const auto abs = std::filesystem::absolute(correspondence_path);
  const auto base = std::filesystem::is_directory(abs) ? abs : abs.parent_path();
  const auto rel = std::filesystem::weakly_canonical(image).lexically_relative(std::filesystem::weakly_canonical(base));
  if (!rel.empty() && *rel.begin() != "..") names.push_back(rel.generic_string());
  names.push_back(image.filename().generic_string());
  return names;
}

std::optional<Homography> homography_for(const CorrespondenceFile& corr, const Image8& original_a,
                                         const Image8& original_b, const ModelGraph& model,
                                         RansacOptions ransac) {
  const std::array<int, 2> size_a = corr.size_a.value_or(std::array{original_a.width, original_a.height});
  const std::array<int, 2> size_b = corr.size_b.value_or(std::array{original_b.width, original_b.height});
  const auto pts = rescale_correspondences(corr.points, size_a, size_b, model.input.width, model.input.height);
  return estimate_homography(pts, ransac);
}

// Loaded manifest with per-image forward traces.
struct Dataset {
  ModelGraph model;
  std::vector<ManifestEntry> manifest;
  std::vector<Image8> originals;
  std::vector<ForwardTrace> traces;
  std::vector<Tensor> embeddings;
  CorrespondenceIndex correspondences;
};

Dataset load_dataset(const RunConfig& config) {
  Dataset ds;
  ds.model = load_model(config.model_path);
  ds.manifest = read_manifest(config.manifest_path);
  if (ds.manifest.empty()) fail(ErrorKind::Contract, "manifest is empty");
  const std::size_t n = ds.manifest.size();
  ds.originals.resize(n);
  ds.traces.resize(n);
  ds.embeddings.resize(n);
  parallel_for(n, config.threads, [&](std::size_t k) {
    ds.originals[k] = read_png(resolve_image_path(config.manifest_path, ds.manifest[k]));
    ds.traces[k] = forward(ds.model, image_to_input(ds.model, ds.originals[k]));
    ds.embeddings[k] = ds.traces[k].embedding;
  });
  ds.correspondences = CorrespondenceIndex(config.correspondence_path);
  return ds;
}

// Per-pair metrics at `layer` for already selected pairs.
void score_pairs(const Dataset& ds, const RunConfig& config, int layer, std::vector<PairRecord>& pairs) {
  parallel_for(pairs.size(), config.threads, [&](std::size_t k) {
    PairRecord& rec = pairs[k];
    const auto q = static_cast<std::size_t>(rec.query_index);
    const auto g = static_cast<std::size_t>(rec.gallery_index);
    std::optional<Homography> h;
    if (const auto corr = ds.correspondences.find(rec.query_id, rec.gallery_id)) {
      RansacOptions ro = config.ransac;
      ro.seed = config.rng_seed + k;
      h = homography_for(*corr, ds.originals[q], ds.originals[g], ds.model, ro);
    }
    const PairAnalysis pa =
        analyze_pair(ds.model, ds.traces[q], ds.traces[g], layer, config.n_matches, h, config.metric_clamp);
    rec.layer_index = layer;
    rec.residual_score = pa.residual.value;
    rec.residual_clamped = pa.residual.clamped;
    rec.coverage_score = pa.coverage;
    rec.num_matches = static_cast<int>(pa.matches.size());
  });
}

bool has_train_pairs(const std::vector<ManifestEntry>& manifest) {
  int train = 0;
  for (const auto& e : manifest)
    if (e.split == Split::Train) ++train;
  return train >= 2;
}

LayerSelection sweep(const Dataset& ds, const RunConfig& config) {
  if (!has_train_pairs(ds.manifest))
    fail(ErrorKind::Contract, "layer auto-selection requires train pairs");
  PairSelectionOptions opts;
  opts.k_init = config.k_init;
  opts.k_cap = config.k_cap;
  opts.target = kLayerSelectionPairs / 2;
  opts.seed = config.rng_seed;
  opts.pool = PairPool::TrainTrain;
  const PairSelection sel = select_pairs(ds.manifest, ds.embeddings, opts);
  return select_layer(ds.model.tap_points, [&](int layer) {
    std::vector<PairRecord> pairs = sel.pairs;
    score_pairs(ds, config, layer, pairs);
    std::vector<double> s1, cos;
    for (const auto& p : pairs)
      if (p.residual_score) {
        s1.push_back(*p.residual_score);
        cos.push_back(p.cosine_similarity);
      }
    LayerScore row;
    row.layer_index = layer;
    row.n_pairs = static_cast<int>(pairs.size());
    row.n_scored = static_cast<int>(s1.size());
    row.rho_res = spearman_rho(s1, cos);
    return row;
  });
}

json selection_json(const LayerSelection& sel) {
  json rows = json::array();
  for (const auto& r : sel.rows)
    rows.push_back({{"layer_index", r.layer_index},
                    {"rho_res", optional_json(r.rho_res)},
                    {"n_pairs", r.n_pairs},
                    {"n_scored", r.n_scored},
                    {"best", r.layer_index == sel.best_layer}});
  return {{"best_layer", sel.best_layer}, {"rows", rows}};
}

int resolve_layer(const RunConfig& config, const ModelGraph& model) {
  if (config.layer) {
    if (!model.is_tap(*config.layer))
      fail(ErrorKind::Contract, "layer " + std::to_string(*config.layer) + " is not a declared tap");
    return *config.layer;
  }
  return default_layer(model);
}

}  // namespace

std::string make_pair_id(const std::string& query_id, const std::string& gallery_id) {
  return query_id + "::" + gallery_id;
}

void RunConfig::validate() const {
  if (n_matches < 1) fail(ErrorKind::Contract, "n_matches must be >= 1");
  if (ransac.threshold <= 0.0) fail(ErrorKind::Contract, "ransac threshold must be positive");
  if (ransac.max_iters < 1) fail(ErrorKind::Contract, "ransac max_iters must be >= 1");
  if (k_init < 1 || k_cap < k_init) fail(ErrorKind::Contract, "invalid k_init/k_cap");
  if (target_pairs < 1) fail(ErrorKind::Contract, "target pairs must be >= 1");
}

json RunConfig::to_json() const {
  json j;
  j["model"] = model_path.generic_string();
  j["layer"] = layer_auto ? json("auto") : (layer ? json(*layer) : json("default"));
  j["n_matches"] = n_matches;
  j["correspondences"] = correspondence_path.generic_string();
  j["manifest"] = manifest_path.generic_string();
  j["seed"] = rng_seed;
  j["metric_clamp"] = metric_clamp;
  j["ransac"] = {{"threshold", ransac.threshold}, {"max_iters", ransac.max_iters}};
  j["pair_selection"] = {{"k_init", k_init}, {"k_cap", k_cap}, {"target_per_class", target_pairs}};
  return j;
}

int default_layer(const ModelGraph& model) {
  if (model.tap_points.empty()) fail(ErrorKind::Contract, "model declares no tap points");
  return model.tap_points[model.tap_points.size() / 2];
}

PairAnalysis analyze_pair(const ModelGraph& model, const ForwardTrace& trace_a,
                          const ForwardTrace& trace_b, int layer, int n_matches,
                          const std::optional<Homography>& homography, bool metric_clamp) {
  PairAnalysis pa;
  pa.layer_index = layer;
  pa.stride = model.cumulative_stride(layer);
  pa.cosine = cosine_similarity(trace_a.embedding, trace_b.embedding);
  const CosineSeeds seeds = seed_relevance_from_cosine(trace_a, trace_b);
  pa.relevance_a = lrp_backward(model, trace_a, seeds.seed_a, layer);
  pa.relevance_b = lrp_backward(model, trace_b, seeds.seed_b, layer);
  const auto set_a = decompose(trace_a.activations.at(layer), layer);
  const auto set_b = decompose(trace_b.activations.at(layer), layer);
  pa.matches = score_matches(mutual_match(set_a, set_b), pa.relevance_a, pa.relevance_b);
  pa.top = top_n(pa.matches, n_matches);
  pa.homography = homography;
  if (homography) {
    pa.residual = inverted_residual_mean(pa.matches, *homography, GridToPixel{pa.stride});
    if (pa.residual.clamped && !metric_clamp) pa.residual.value.reset();
  }
  std::vector<Keypoint> ka, kb;
  for (const auto& m : pa.matches.matches) {
    ka.push_back(m.kp_a);
    kb.push_back(m.kp_b);
  }
  pa.coverage = match_coverage(ka, kb, pa.relevance_a, pa.relevance_b);
  return pa;
}

ExplainResult run_explain(const RunConfig& config, const std::filesystem::path& image_a,
                          const std::filesystem::path& image_b) {
  config.validate();
  const ModelGraph model = load_model(config.model_path);
  const Image8 orig_a = read_png(image_a);
  const Image8 orig_b = read_png(image_b);

  int layer;
  std::optional<LayerSelection> selection;
  if (config.layer_auto) {
    if (config.manifest_path.empty())
      fail(ErrorKind::Contract, "layer auto-selection requires train pairs");
    RunConfig sub = config;
    Dataset ds = load_dataset(sub);
    selection = sweep(ds, sub);
    layer = selection->best_layer;
  } else {
    layer = resolve_layer(config, model);
  }

  const ForwardTrace ta = forward(model, image_to_input(model, orig_a));
  const ForwardTrace tb = forward(model, image_to_input(model, orig_b));

  ExplainResult result;
  std::optional<Homography> h;
  if (!config.correspondence_path.empty()) {
    const CorrespondenceIndex index(config.correspondence_path);
    std::optional<CorrespondenceFile> corr;
    const auto names_a = lookup_names(image_a, config.correspondence_path);
    const auto names_b = lookup_names(image_b, config.correspondence_path);
    for (const auto& na : names_a)
      for (const auto& nb : names_b)
        if (!corr) corr = index.find(na, nb);
    if (!corr && index.size() == 1) corr = index.front();
    if (corr) {
      RansacOptions ro = config.ransac;
      ro.seed = config.rng_seed;
      h = homography_for(*corr, orig_a, orig_b, model, ro);
      if (!h) result.warnings.push_back("homography unavailable; inverted residual mean missing");
    } else {
      result.warnings.push_back("no correspondences for this pair; inverted residual mean missing");
    }
  }

  const PairAnalysis pa = analyze_pair(model, ta, tb, layer, config.n_matches, h, config.metric_clamp);

  const std::size_t kept = pa.top.size();
  std::vector<PixelRelevance> maps_a(kept), maps_b(kept);
  parallel_for(2 * kept, config.threads, [&](std::size_t k) {
    const std::size_t rank = k / 2;
    const auto& m = pa.top.matches[rank];
    if (k % 2 == 0)
      maps_a[rank] = masked_pixel_backprop(model, ta, layer, m.kp_a, static_cast<int>(rank));
    else
      maps_b[rank] = masked_pixel_backprop(model, tb, layer, m.kp_b, static_cast<int>(rank));
  });

  const Image8 view_a = resize_bilinear(orig_a, model.input.width, model.input.height);
  const Image8 view_b = resize_bilinear(orig_b, model.input.width, model.input.height);
  const GridToPixel to_pixel{pa.stride};
  ExplanationCanvas canvas = ExplanationCanvas::create(model.input.width, model.input.height);
  draw_matches(canvas, view_a, view_b, pa.top, to_pixel);
  draw_heatmaps(canvas, view_a, view_b, maps_a, maps_b);
  for (auto& w : canvas.warnings) result.warnings.push_back(w);

  ensure_dir(config.output_dir);
  result.png_path = config.output_dir / "explanation.png";
  result.json_path = config.output_dir / "explanation.json";
  write_png(canvas.rgba, result.png_path);

  json matches = json::array();
  for (std::size_t rank = 0; rank < kept; ++rank) {
    const auto& m = pa.top.matches[rank];
    const Point2 pa_px = to_pixel(m.kp_a), pb_px = to_pixel(m.kp_b);
    const Rgb& c = palette_color(rank);
    matches.push_back({{"rank", rank},
                       {"kp_a", {m.kp_a.i, m.kp_a.j}},
                       {"kp_b", {m.kp_b.i, m.kp_b.j}},
                       {"pixel_a", {pa_px.x, pa_px.y}},
                       {"pixel_b", {pb_px.x, pb_px.y}},
                       {"relevance", m.relevance},
                       {"distance", m.descriptor_distance},
                       {"color", {c[0], c[1], c[2]}}});
  }
  json homography = nullptr;
  if (h) homography = {{"matrix", h->matrix}, {"inliers", h->inlier_count}, {"threshold", h->inlier_threshold}};
  json sidecar{{"engine", engine_json()},
               {"config", config.to_json()},
               {"conventions", conventions_json()},
               {"image_a", image_a.generic_string()},
               {"image_b", image_b.generic_string()},
               {"layer_index", layer},
               {"cumulative_stride", pa.stride},
               {"cosine_similarity", pa.cosine},
               {"total_matches", pa.matches.size()},
               {"kept_matches", kept},
               {"inverted_residual_mean", optional_json(pa.residual.value)},
               {"residual_clamped", pa.residual.clamped},
               {"match_coverage", optional_json(pa.coverage)},
               {"homography", homography},
               {"canvas", {{"width", canvas.width}, {"height", canvas.height}}},
               {"matches", matches},
               {"warnings", result.warnings}};
  if (selection) sidecar["layer_selection"] = selection_json(*selection);
  write_text(result.json_path, sidecar.dump(2) + "\n");

  result.cosine = pa.cosine;
  result.layer_index = layer;
  result.total_matches = static_cast<int>(pa.matches.size());
  result.kept_matches = static_cast<int>(kept);
  return result;
}

EvalResult run_eval(const RunConfig& config) {
  config.validate();
  if (config.manifest_path.empty()) fail(ErrorKind::Contract, "eval requires a manifest");
  const Dataset ds = load_dataset(config);

  EvalResult result;
  int layer;
  if (config.layer_auto) {
    result.layer_selection = sweep(ds, config);
    layer = result.layer_selection->best_layer;
  } else {
    layer = resolve_layer(config, ds.model);
  }

  PairSelectionOptions opts;
  opts.k_init = config.k_init;
  opts.k_cap = config.k_cap;
  opts.target = config.target_pairs;
  opts.seed = config.rng_seed;
  opts.pool = PairPool::QueryGallery;
  PairSelection sel = select_pairs(ds.manifest, ds.embeddings, opts);
  for (const auto& w : sel.warnings) std::cerr << "warning: " << w << "\n";
  score_pairs(ds, config, layer, sel.pairs);
  result.pairs = sel.pairs;
  result.aggregate = aggregate(result.pairs, layer);

  const auto& agg = result.aggregate;
  json pairs = json::array();
  for (const auto& p : result.pairs)
    pairs.push_back({{"pair_id", make_pair_id(p.query_id, p.gallery_id)},
                     {"query_id", p.query_id},
                     {"gallery_id", p.gallery_id},
                     {"cosine_similarity", p.cosine_similarity},
                     {"is_correct", p.is_correct},
                     {"layer_index", p.layer_index},
                     {"inverted_residual_mean", optional_json(p.residual_score)},
                     {"residual_clamped", p.residual_clamped},
                     {"match_coverage", optional_json(p.coverage_score)},
                     {"num_matches", p.num_matches}});
  json report{{"engine", engine_json()},
              {"config", config.to_json()},
              {"conventions", conventions_json()},
              {"aggregate",
               {{"layer_index", agg.layer_index},
                {"rho_res", optional_json(agg.rho_res)},
                {"delta_res", optional_json(agg.delta_res)},
                {"rho_mc", optional_json(agg.rho_mc)},
                {"delta_mc", optional_json(agg.delta_mc)},
                {"n_correct", agg.n_correct},
                {"n_incorrect", agg.n_incorrect},
                {"missing_res", agg.missing_res},
                {"missing_mc", agg.missing_mc},
                {"bins_used_res", agg.bins_used_res},
                {"bins_used_mc", agg.bins_used_mc}}},
              {"selection",
               {{"k_used", sel.k_used},
                {"correct_available", sel.correct_available},
                {"incorrect_available", sel.incorrect_available},
                {"warnings", sel.warnings}}},
              {"pairs", pairs}};
  if (result.layer_selection) report["layer_selection"] = selection_json(*result.layer_selection);

  ensure_dir(config.output_dir);
  result.report_path = config.output_dir / "report.json";
  write_text(result.report_path, report.dump(2) + "\n");
  result.report = std::move(report);
  return result;
}

SweepResult run_sweep(const RunConfig& config) {
  config.validate();
  if (config.manifest_path.empty()) fail(ErrorKind::Contract, "layer sweep requires a manifest");
  const Dataset ds = load_dataset(config);
  if (ds.model.tap_points.size() < 2) fail(ErrorKind::Contract, "layer sweep needs at least two taps");
  SweepResult result;
  result.selection = sweep(ds, config);
  result.table = {{"engine", engine_json()},
                  {"config", config.to_json()},
                  {"sweep", selection_json(result.selection)}};
  ensure_dir(config.output_dir);
  result.output_path = config.output_dir / "sweep.json";
  write_text(result.output_path, result.table.dump(2) + "\n");
  return result;
}

}  // namespace pairx
