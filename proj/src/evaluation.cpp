#include "pairx/evaluation.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "pairx/error.hpp"
#include "pairx/model.hpp"
#include "pairx/rng.hpp"
#include "pairx/stats.hpp"

namespace pairx {

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open manifest " + path.string());
  std::vector<ManifestEntry> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      ManifestEntry e;
      e.image_path = j.at("image_path").get<std::string>();
      e.identity = j.at("identity").is_string() ? j.at("identity").get<std::string>()
                                                : j.at("identity").dump();
      const std::string split = j.at("split").get<std::string>();
      if (split == "query")
        e.split = Split::Query;
      else if (split == "gallery")
        e.split = Split::Gallery;
      else if (split == "train")
        e.split = Split::Train;
      else
        fail(ErrorKind::Io, "manifest line " + std::to_string(line_no) + ": unknown split '" + split + "'");
      out.push_back(std::move(e));
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::Io, "manifest line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

std::filesystem::path resolve_image_path(const std::filesystem::path& manifest_path,
                                         const ManifestEntry& entry) {
  std::filesystem::path p(entry.image_path);
  if (p.is_absolute()) return p;
  return manifest_path.parent_path() / p;
}

PairSelection select_pairs(const std::vector<ManifestEntry>& manifest,
                           const std::vector<Tensor>& embeddings,
                           const PairSelectionOptions& options) {
  if (embeddings.size() != manifest.size())
    fail(ErrorKind::Contract, "one embedding per manifest entry is required");
  if (options.k_init < 1 || options.k_cap < options.k_init || options.target < 0)
    fail(ErrorKind::Contract, "invalid pair selection options");

  std::vector<int> queries, gallery;
  for (int k = 0; k < static_cast<int>(manifest.size()); ++k) {
    const Split s = manifest[static_cast<std::size_t>(k)].split;
    if (options.pool == PairPool::QueryGallery) {
      if (s == Split::Query) queries.push_back(k);
      if (s == Split::Gallery) gallery.push_back(k);
    } else if (s == Split::Train) {
      queries.push_back(k);
      gallery.push_back(k);
    }
  }
  if (gallery.empty()) fail(ErrorKind::Contract, "pair selection: empty gallery");
  if (options.pool == PairPool::QueryGallery) {
    for (int q : queries)
      for (int g : gallery)
        if (manifest[static_cast<std::size_t>(q)].image_path ==
            manifest[static_cast<std::size_t>(g)].image_path)
          fail(ErrorKind::Contract, "query and gallery splits share image " +
                                        manifest[static_cast<std::size_t>(q)].image_path);
  }

  struct Candidate {
    int gallery_index;
    double cosine;
  };
  // Per-query ranking of the gallery, best first.
  std::vector<std::vector<Candidate>> ranked(queries.size());
  for (std::size_t qi = 0; qi < queries.size(); ++qi) {
    const int q = queries[qi];
    for (int g : gallery) {
      if (g == q) continue;
      ranked[qi].push_back({g, cosine_similarity(embeddings[static_cast<std::size_t>(q)],
                                                 embeddings[static_cast<std::size_t>(g)])});
    }
    std::stable_sort(ranked[qi].begin(), ranked[qi].end(), [](const Candidate& a, const Candidate& b) {
      return a.cosine > b.cosine;
    });
  }
  auto is_correct = [&](int q, int g) {
    return manifest[static_cast<std::size_t>(q)].identity == manifest[static_cast<std::size_t>(g)].identity;
  };
  auto count_at = [&](int k) {
    std::size_t c = 0, i = 0;
    for (std::size_t qi = 0; qi < queries.size(); ++qi) {
      const std::size_t lim = std::min(ranked[qi].size(), static_cast<std::size_t>(k));
      for (std::size_t r = 0; r < lim; ++r)
        (is_correct(queries[qi], ranked[qi][r].gallery_index) ? c : i) += 1;
    }
    return std::pair{c, i};
  };

  PairSelection out;
  const auto target = static_cast<std::size_t>(options.target);
  int k = options.k_init;
  auto counts = count_at(k);
  while (k < options.k_cap && (counts.first < target || counts.second < target)) {
    ++k;
    counts = count_at(k);
  }
  out.k_used = k;
  out.correct_available = counts.first;
  out.incorrect_available = counts.second;

  std::vector<PairRecord> correct, incorrect;
  for (std::size_t qi = 0; qi < queries.size(); ++qi) {
    const std::size_t lim = std::min(ranked[qi].size(), static_cast<std::size_t>(k));
    for (std::size_t r = 0; r < lim; ++r) {
      PairRecord rec;
      rec.query_index = queries[qi];
      rec.gallery_index = ranked[qi][r].gallery_index;
      rec.query_id = manifest[static_cast<std::size_t>(rec.query_index)].image_path;
      rec.gallery_id = manifest[static_cast<std::size_t>(rec.gallery_index)].image_path;
      rec.cosine_similarity = ranked[qi][r].cosine;
      rec.is_correct = is_correct(rec.query_index, rec.gallery_index);
      (rec.is_correct ? correct : incorrect).push_back(std::move(rec));
    }
  }

  Rng rng(options.seed);
  auto take = [&](std::vector<PairRecord>& pool, const char* label) {
    if (pool.size() > target) {
      shuffle(pool, rng);
      pool.resize(target);
    } else if (pool.size() < target) {
      out.warnings.push_back(std::string("only ") + std::to_string(pool.size()) + " " + label +
                             " pairs available (target " + std::to_string(target) + ")");
    }
    for (auto& r : pool) out.pairs.push_back(std::move(r));
  };
  take(correct, "correct");
  take(incorrect, "incorrect");
  std::sort(out.pairs.begin(), out.pairs.end(), [](const PairRecord& a, const PairRecord& b) {
    return std::pair(a.query_index, a.gallery_index) < std::pair(b.query_index, b.gallery_index);
  });
  return out;
}

DatasetAggregate aggregate(const std::vector<PairRecord>& records, int layer_index) {
  DatasetAggregate agg;
  agg.layer_index = layer_index;
  struct Column {
    std::vector<double> cos, score;
    std::vector<ScoredPair> correct, incorrect;
  } res, mc;
  for (const auto& r : records) {
    (r.is_correct ? agg.n_correct : agg.n_incorrect) += 1;
    auto add = [&](Column& col, const std::optional<double>& s, int& missing) {
      if (!s) {
        ++missing;
        return;
      }
      col.cos.push_back(r.cosine_similarity);
      col.score.push_back(*s);
      (r.is_correct ? col.correct : col.incorrect).push_back({r.cosine_similarity, *s});
    };
    add(res, r.residual_score, agg.missing_res);
    add(mc, r.coverage_score, agg.missing_mc);
  }
  agg.rho_res = spearman_rho(res.score, res.cos);
  agg.rho_mc = spearman_rho(mc.score, mc.cos);
  const auto dres = binned_bhattacharyya(res.correct, res.incorrect);
  const auto dmc = binned_bhattacharyya(mc.correct, mc.incorrect);
  agg.delta_res = dres.value;
  agg.delta_mc = dmc.value;
  agg.bins_used_res = dres.bins_used;
  agg.bins_used_mc = dmc.bins_used;
  return agg;
}

LayerSelection select_layer(const std::vector<int>& taps,
                            const std::function<LayerScore(int)>& score_layer) {
  if (taps.empty()) fail(ErrorKind::Contract, "layer selection needs at least one tap");
  std::vector<int> sorted = taps;
  std::sort(sorted.begin(), sorted.end());
  LayerSelection sel;
  std::optional<double> best;
  for (int t : sorted) {
    LayerScore row = score_layer(t);
    row.layer_index = t;
    if (row.rho_res && (!best || *row.rho_res > *best)) {
      best = row.rho_res;
      sel.best_layer = t;
    }
    sel.rows.push_back(row);
  }
  if (!best) fail(ErrorKind::Numerical, "layer selection: rho_res undefined at every tap");
  return sel;
}

}  // namespace pairx
