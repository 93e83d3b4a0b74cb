#pragma once

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

namespace dvs {

/// Every tunable a command may use. Defaults follow the engine defaults.
struct RunConfig {
  std::filesystem::path store;
  std::filesystem::path data;
  std::filesystem::path queries;
  std::filesystem::path truth;
  bool oracle = false;
  std::uint64_t seed = 42;
  unsigned threads = 1;

  // build
  std::uint32_t R = 96;
  std::uint32_t L_b = 100;
  float prune_alpha = 1.2f;
  std::uint64_t segment_bytes = 512ull << 20;
  std::uint64_t chunk_bytes = 4ull << 20;
  std::optional<double> beta;
  double alpha = 1.0;
  double sample_fraction = 0.10;
  std::uint32_t pq_subspaces = 0;
  double gc_threshold = 0.3;
  double merge_fraction = 0.05;

  // search
  std::uint32_t K = 10;
  std::vector<std::uint32_t> L_s{100};
  std::uint32_t W = 4;
  std::uint32_t B = 10;
  float benefit_threshold = 0.01f;
  std::size_t cache_entries = 0;
  unsigned repeat = 1;

  // update-bench
  unsigned iterations = 10;
  double update_fraction = 0.05;
  bool compare_rebuild = false;

  // generate
  std::string kind = "structured";
  std::string element_type = "float32";
  std::size_t count = 10000;
  std::size_t dim = 128;
  std::size_t query_count = 100;

  /// Throws UsageError when a value breaks a module precondition.
  void validate() const;
};

// Each command writes JSON lines to `out`, a readable summary to `log`, and
// returns its final aggregate. Failures surface as dvs::Error.
nlohmann::json cmd_build(const RunConfig& config, std::ostream& out, std::ostream& log);
nlohmann::json cmd_bench(const RunConfig& config, std::ostream& out, std::ostream& log);
nlohmann::json cmd_analyze(const RunConfig& config, std::ostream& out, std::ostream& log);
nlohmann::json cmd_update_bench(const RunConfig& config, std::ostream& out, std::ostream& log);
nlohmann::json cmd_stats(const RunConfig& config, std::ostream& out, std::ostream& log);
/// Writes synthetic base rows to `data` and held-out rows from the same draw
/// to `queries` (when set).
nlohmann::json cmd_generate(const RunConfig& config, std::ostream& out, std::ostream& log);

}  // namespace dvs
