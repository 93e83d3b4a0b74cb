#pragma once

#include <filesystem>
#include <optional>

#include <json.hpp>

#include "dvs/core/dataset.hpp"

namespace dvs {

inline constexpr std::size_t kMaxVectorBytes = 4050;

/// Forward form of the chunk-metadata budget: β = (V + 12)/C + α/1024.
double chunk_metadata_overhead(double chunk_bytes, double alpha, std::size_t vector_bytes);

/// Inverse: largest chunk size C (a multiple of V) whose metadata overhead
/// stays within `beta`. Throws InfeasibleError when β <= α/1024.
std::uint64_t chunk_capacity_for_budget(double beta, double alpha, std::size_t vector_bytes);
/// Unrounded closed form (V + 12) / (β − α/1024).
double chunk_capacity_for_budget_exact(double beta, double alpha, std::size_t vector_bytes);

/// Everything persisted in store.json: data shape, layout sizing, graph and
/// PQ build parameters, and maintenance thresholds.
struct StoreConfig {
  std::size_t dim = 0;
  ElementType element_type = ElementType::kFloat32;

  // Layout.
  std::uint64_t segment_bytes = 512ull << 20;
  std::uint64_t chunk_bytes = 4ull << 20;
  std::optional<double> beta;  // when set, overrides chunk_bytes
  double alpha = 1.0;
  double sample_fraction = 0.10;

  // Graph / PQ.
  std::uint32_t max_degree = 96;   // R
  std::uint32_t build_list = 100;  // L_b
  float prune_alpha = 1.2f;
  std::uint32_t pq_subspaces = 0;  // 0 = dim/4 capped at 64
  std::uint32_t pq_train_sample = 65536;
  std::uint64_t seed = 42;

  // Maintenance.
  double merge_threshold_fraction = 0.05;
  double gc_threshold = 0.3;
  double graph_garbage_threshold = 0.6;  // freed blocks are reused, so 0.5 is steady state

  // Derived at creation and persisted so reopen never re-derives them.
  std::uint32_t segment_capacity = 0;
  std::uint32_t chunk_vectors = 0;
  VectorId entry_point = kInvalidId;

  std::size_t vector_bytes() const { return dim * element_width(element_type); }
  std::uint32_t resolved_pq_subspaces() const;

  /// Fills the derived fields and checks every precondition.
  void finalize();
  void validate() const;

  nlohmann::json to_json() const;
  static StoreConfig from_json(const nlohmann::json& j);

  void save(const std::filesystem::path& dir) const;
  static StoreConfig load(const std::filesystem::path& dir, struct IoCounters* counters = nullptr);
};

}  // namespace dvs
