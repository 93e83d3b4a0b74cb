#include <iostream>

#include <CLI11.hpp>

#include "dvs/cli/commands.hpp"
#include "dvs/common.hpp"

namespace {

void add_store(CLI::App* app, dvs::RunConfig& c) {
  app->add_option("--store", c.store, "Store directory")->required();
}

void add_build_flags(CLI::App* app, dvs::RunConfig& c) {
  app->add_option("--R", c.R, "Maximum out-degree");
  app->add_option("--Lb", c.L_b, "Build candidate list size");
  app->add_option("--prune-alpha", c.prune_alpha, "Robust-prune slack");
  app->add_option("--segment-bytes", c.segment_bytes, "Raw bytes per segment");
  app->add_option("--chunk-bytes", c.chunk_bytes, "Raw bytes per chunk");
  app->add_option("--beta", c.beta, "Metadata overhead budget (overrides --chunk-bytes)");
  app->add_option("--alpha", c.alpha, "Chunk metadata compression ratio estimate");
  app->add_option("--sample-fraction", c.sample_fraction, "Chunks sampled for transform selection");
  app->add_option("--pq-subspaces", c.pq_subspaces, "PQ subspaces (0 = dim/4, at most 64)");
  app->add_option("--gc-threshold", c.gc_threshold, "Segment garbage ratio that triggers GC");
  app->add_option("--merge-fraction", c.merge_fraction, "Buffered updates (fraction of vertices) that trigger a merge");
}

void add_search_flags(CLI::App* app, dvs::RunConfig& c) {
  app->add_option("--queries", c.queries, "Query vectors (fvecs/bvecs)")->required();
  app->add_option("--truth", c.truth, "Ground truth (ivecs)");
  app->add_flag("--oracle", c.oracle, "Compute ground truth by brute force over the live set");
  app->add_option("--K", c.K, "Neighbors per query");
  app->add_option("--Ls", c.L_s, "Search list sizes")->delimiter(',');
  app->add_option("--W", c.W, "Beam width");
  app->add_option("--B", c.B, "Rerank batch size");
  app->add_option("--threshold", c.benefit_threshold, "Rerank benefit-ratio threshold");
  app->add_option("--cache-entries", c.cache_entries, "Neighbor cache entries (0 = 1% of N)");
  app->add_option("--threads", c.threads, "Query threads");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Disk-resident vector search store"};
  app.require_subcommand(1);
  app.fallthrough();
  dvs::RunConfig c;
  app.add_option("--seed", c.seed, "Random seed");

  auto* build = app.add_subcommand("build", "Build a store from a vector file");
  add_store(build, c);
  build->add_option("--data", c.data, "Base vectors (fvecs/bvecs)")->required();
  add_build_flags(build, c);

  auto* bench = app.add_subcommand("bench", "Run queries and report recall, latency and I/O");
  add_store(bench, c);
  add_search_flags(bench, c);
  bench->add_option("--repeat", c.repeat, "Passes per list size (later passes run with a warm cache)");

  auto* analyze = app.add_subcommand("analyze", "Dispersion and entropy of a vector file");
  analyze->add_option("--data", c.data, "Vectors (fvecs/bvecs)")->required();

  auto* update = app.add_subcommand("update-bench", "Delete/insert/merge cycles with concurrent queries");
  add_store(update, c);
  add_search_flags(update, c);
  update->add_option("--data", c.data, "Pool of vectors to insert")->required();
  update->add_option("--iterations", c.iterations, "Update cycles (0 = plain bench)");
  update->add_option("--update-fraction", c.update_fraction, "Fraction deleted and inserted per cycle");
  update->add_flag("--compare-rebuild", c.compare_rebuild, "Rebuild the final live set and compare sizes");

  auto* stats = app.add_subcommand("stats", "Storage breakdown of a store");
  add_store(stats, c);

  auto* gen = app.add_subcommand("generate", "Write a synthetic dataset");
  gen->add_option("--data", c.data, "Output base file")->required();
  gen->add_option("--queries", c.queries, "Output query file");
  gen->add_option("--kind", c.kind, "structured, clustered or uniform");
  gen->add_option("--type", c.element_type, "float32, uint8 or int8");
  gen->add_option("--count", c.count, "Base vectors");
  gen->add_option("--dim", c.dim, "Dimension");
  gen->add_option("--query-count", c.query_count, "Held-out query vectors");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*build) dvs::cmd_build(c, std::cout, std::cerr);
    if (*bench) dvs::cmd_bench(c, std::cout, std::cerr);
    if (*analyze) dvs::cmd_analyze(c, std::cout, std::cerr);
    if (*update) dvs::cmd_update_bench(c, std::cout, std::cerr);
    if (*stats) dvs::cmd_stats(c, std::cout, std::cerr);
    if (*gen) dvs::cmd_generate(c, std::cout, std::cerr);
  } catch (const dvs::UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
