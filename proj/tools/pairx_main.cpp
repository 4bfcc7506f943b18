// pairx: pairwise explanations for embedding models.
//
//   pairx explain --model m.pxw a.png b.png [--layer N|auto] [--n-matches 20]
//   pairx eval --model m.pxw --manifest manifest.jsonl [--correspondences c.jsonl]
//   pairx sweep-layers --model m.pxw --manifest manifest.jsonl --correspondences c.jsonl
//   pairx synth DIR
//
// Options can also come from a TOML file passed with --config; flags win.

#include <algorithm>
#include <cstdio>
#include <iostream>
#include <string>
#include <thread>

#include <CLI11.hpp>

#include "pairx/error.hpp"
#include "pairx/pipeline.hpp"
#include "pairx/synthetic.hpp"

namespace {

struct Options {
  std::string model;
  std::string layer;
  int n_matches = 20;
  std::string manifest;
  std::string correspondences;
  std::string out = ".";
  std::uint64_t seed = 0;
  int threads = 0;
  double ransac_threshold = 2.0;
  int ransac_iters = 2000;
  bool no_clamp = false;
  int k_init = 5;
  int k_cap = 20;
  int target_pairs = 1000;
};

pairx::RunConfig to_config(const Options& o) {
  pairx::RunConfig c;
  c.model_path = o.model;
  if (o.layer == "auto") {
    c.layer_auto = true;
  } else if (!o.layer.empty()) {
    try {
      std::size_t used = 0;
      c.layer = std::stoi(o.layer, &used);
      if (used != o.layer.size()) throw std::invalid_argument(o.layer);
    } catch (const std::exception&) {
      pairx::fail(pairx::ErrorKind::Contract, "--layer must be an integer tap index or \"auto\"");
    }
  }
  c.n_matches = o.n_matches;
  c.manifest_path = o.manifest;
  c.correspondence_path = o.correspondences;
  c.output_dir = o.out;
  c.rng_seed = o.seed;
  c.threads = o.threads > 0 ? o.threads : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  c.ransac.threshold = o.ransac_threshold;
  c.ransac.max_iters = o.ransac_iters;
  c.metric_clamp = !o.no_clamp;
  c.k_init = o.k_init;
  c.k_cap = o.k_cap;
  c.target_pairs = o.target_pairs;
  return c;
}

void add_run_options(CLI::App& app, Options& o) {
  app.add_option("--model", o.model, "PXW1 model container")->required();
  app.add_option("--layer", o.layer, "tap layer index or \"auto\" (default: middle tap)");
  app.add_option("--n-matches", o.n_matches, "matches kept after relevance filtering");
  app.add_option("--manifest", o.manifest, "JSON-lines manifest");
  app.add_option("--correspondences", o.correspondences, "correspondence file or directory");
  app.add_option("--out", o.out, "output directory");
  app.add_option("--seed", o.seed, "random seed");
  app.add_option("--threads", o.threads, "worker threads (default: hardware concurrency)")
      ->envname("PAIRX_THREADS");
  app.add_option("--ransac-threshold", o.ransac_threshold, "RANSAC inlier threshold, pixels");
  app.add_option("--ransac-iters", o.ransac_iters, "RANSAC iteration cap");
  app.add_flag("--no-metric-clamp", o.no_clamp, "drop pairs whose residual sum is zero instead of clamping");
  app.add_option("--k-init", o.k_init, "initial gallery neighbourhood for pair selection");
  app.add_option("--k-cap", o.k_cap, "largest gallery neighbourhood");
  app.add_option("--target-pairs", o.target_pairs, "pairs per class");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pairwise explanations for embedding models"};
  app.set_config("--config", "", "TOML config file; command-line flags take precedence");
  app.require_subcommand(1);

  Options opts;
  std::string image_a, image_b;
  auto* explain = app.add_subcommand("explain", "explain one image pair");
  add_run_options(*explain, opts);
  explain->add_option("image_a", image_a)->required();
  explain->add_option("image_b", image_b)->required();

  auto* eval = app.add_subcommand("eval", "dataset metrics over selected pairs");
  add_run_options(*eval, opts);

  auto* sweep = app.add_subcommand("sweep-layers", "rho_res at every tap over train pairs");
  add_run_options(*sweep, opts);

  pairx::synthetic::DatasetOptions synth_opts;
  std::string synth_dir;
  auto* synth = app.add_subcommand("synth", "generate the synthetic dotted-individuals dataset");
  synth->add_option("dir", synth_dir)->required();
  synth->add_option("--individuals", synth_opts.individuals);
  synth->add_option("--views", synth_opts.views);
  synth->add_option("--train-individuals", synth_opts.train_individuals);
  synth->add_option("--perturbation", synth_opts.perturbation);
  synth->add_option("--seed", synth_opts.seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(pairx::ErrorKind::Contract);
  }

  try {
    if (*explain) {
      const auto r = pairx::run_explain(to_config(opts), image_a, image_b);
      for (const auto& w : r.warnings) std::cerr << "warning: " << w << "\n";
      std::printf("cosine similarity: %.6f\n", r.cosine);
      std::printf("layer: %d\n", r.layer_index);
      std::printf("matches: %d (kept %d)\n", r.total_matches, r.kept_matches);
      std::printf("wrote %s\n", r.png_path.string().c_str());
    } else if (*eval) {
      const auto r = pairx::run_eval(to_config(opts));
      const auto& a = r.report["aggregate"];
      std::printf("pairs: %d correct, %d incorrect (layer %d)\n", r.aggregate.n_correct,
                  r.aggregate.n_incorrect, r.aggregate.layer_index);
      for (const char* key : {"rho_res", "delta_res", "rho_mc", "delta_mc"})
        std::printf("%-9s %s\n", key, a[key].is_null() ? "missing" : a[key].dump().c_str());
      std::printf("wrote %s\n", r.report_path.string().c_str());
    } else if (*sweep) {
      const auto r = pairx::run_sweep(to_config(opts));
      for (const auto& row : r.selection.rows)
        std::printf("layer %3d  rho_res %-10s  scored %d/%d%s\n", row.layer_index,
                    row.rho_res ? std::to_string(*row.rho_res).c_str() : "missing", row.n_scored,
                    row.n_pairs, row.layer_index == r.selection.best_layer ? "  *" : "");
      std::printf("wrote %s\n", r.output_path.string().c_str());
    } else if (*synth) {
      const auto d = pairx::synthetic::generate_dataset(synth_dir, synth_opts);
      std::printf("%d images\nmanifest: %s\ncorrespondences: %s\nmodel: %s\n", d.images,
                  d.manifest.string().c_str(), d.correspondences.string().c_str(), d.model.string().c_str());
    }
  } catch (const pairx::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(pairx::ErrorKind::Io);
  }
  return 0;
}
