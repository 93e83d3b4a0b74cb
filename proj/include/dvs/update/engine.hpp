#pragma once

#include <functional>
#include <memory>
#include <set>
#include <mutex>
#include <string_view>

#include "dvs/search/beam_search.hpp"
#include "dvs/update/mem_index.hpp"
#include "dvs/update/state_lock.hpp"
#include "dvs/update/tombstones.hpp"
#include "dvs/layout/vector_store.hpp"

namespace dvs {

struct EngineOptions {
  /// Neighbor-cache entries; 0 means 1% of the vertex count.
  std::size_t cache_entries = 0;
  /// Merge as soon as the insert buffer reaches its threshold.
  bool auto_merge = true;
  /// Test hook called at named points inside merge; throwing aborts it.
  std::function<void(std::string_view)> fault_hook;
};

struct MergeStats {
  double load_seconds = 0.0;
  double merge_delete_seconds = 0.0;
  double merge_insert_seconds = 0.0;
  double gc_seconds = 0.0;
  std::uint64_t inserted = 0;
  std::uint64_t deleted = 0;
  std::uint64_t vertices_rewritten = 0;
  std::uint64_t graph_blocks_rewritten = 0;
  std::uint64_t graph_bytes_written = 0;
  bool graph_compacted = false;
  std::uint64_t vector_bytes_written = 0;  // appends since the last merge plus GC rewrites
  std::uint64_t gc_bytes_reclaimed = 0;

  nlohmann::json to_json() const;
};

/// Byte totals per store component, plus the size the same vectors and
/// graph would take as page-packed fixed-size records.
struct StorageBreakdown {
  std::uint64_t vector_segment_bytes = 0;
  std::uint64_t chunk_metadata_bytes = 0;
  std::uint64_t idmap_bytes = 0;
  std::uint64_t graph_data_bytes = 0;
  std::uint64_t graph_sparse_bytes = 0;
  std::uint64_t pq_codebook_bytes = 0;
  std::uint64_t pq_codes_bytes = 0;
  std::uint64_t tombstone_bytes = 0;
  std::uint64_t config_bytes = 0;
  std::uint64_t other_bytes = 0;
  std::uint64_t total_bytes = 0;      // sum of the components above
  std::uint64_t directory_bytes = 0;  // every regular file under the store

  std::uint64_t vector_count = 0;  // vectors the co-located layout would hold
  std::uint64_t colocated_entry_bytes = 0;
  double colocated_padded_entry_bytes = 0.0;
  std::uint64_t colocated_bytes = 0;
  std::uint64_t fragmentation_reclaimed = 0;

  nlohmann::json to_json() const;
};

/// Bytes one V + 4(R + 1) record occupies when records are packed whole into
/// 4 KiB pages: 4096 / ⌊4096 / entry⌋ when several fit, else whole pages.
double colocated_padded_entry(std::uint64_t vector_bytes, std::uint32_t max_degree);

/// An open store: sealed/compressed vectors, the block-packed graph, PQ
/// codes, tombstones and the in-memory insert buffer. Queries may run from
/// many threads; insert, remove, merge and run_gc are serialized.
class Engine {
 public:
  /// Builds a store from `data` into an empty or absent directory.
  static std::unique_ptr<Engine> build(const std::filesystem::path& dir, const Dataset& data, StoreConfig config,
                                       EngineOptions options = {});
  /// Fails with UsageError while another engine holds the store.
  static std::unique_ptr<Engine> open(const std::filesystem::path& dir, EngineOptions options = {});
  ~Engine();

  SearchResult search(std::span<const float> query, const SearchParams& params) const;

  VectorId insert(std::span<const float> values);
  VectorId insert_raw(ByteSpan vector);
  /// Tombstones a live id; NotFoundError otherwise.
  void remove(VectorId id);
  MergeStats merge();
  /// Compacts sealed segments whose garbage ratio reaches `threshold`.
  /// Returns the bytes reclaimed.
  std::uint64_t run_gc(double threshold, MergeStats* stats = nullptr);

  Bytes read_vector(VectorId id) const;
  bool is_live(VectorId id) const;
  std::vector<VectorId> live_ids() const;
  std::size_t live_count() const;

  std::vector<SegmentInfo> segments() const { return vectors_->segments(); }
  std::size_t pending_inserts() const;
  std::size_t pending_deletes() const;
  std::size_t merge_threshold() const;
  std::shared_ptr<const GraphStore> graph() const;
  const StoreConfig& config() const { return config_; }
  const PQCodebook& codebook() const { return codebook_; }
  NeighborCache& cache() const;
  IoCounters& counters() const { return *counters_; }
  const std::filesystem::path& dir() const { return dir_; }
  StorageBreakdown storage() const;

 private:
  Engine(std::filesystem::path dir, StoreConfig config, EngineOptions options);

  void load();
  void fault(std::string_view stage) const;
  std::vector<float> to_floats(ByteSpan vector) const;
  void append_code(std::span<const std::uint8_t> code);
  std::uint64_t load_codes(VectorId next);
  /// Rewrites pq.codes keeping only live ids and those in `keep` (deleted
  /// ids the graph still references).
  void pack_codes(const std::set<VectorId>& keep);
  MergeStats merge_locked();
  std::uint64_t gc_locked(double threshold, MergeStats* stats);
  void reset_cache(std::size_t num_vertices);

  std::filesystem::path dir_;
  int lock_fd_ = -1;  // flock on <dir>/LOCK for the engine's lifetime
  StoreConfig config_;
  EngineOptions options_;
  std::unique_ptr<IoCounters> counters_;
  std::unique_ptr<VectorStore> vectors_;
  PQCodebook codebook_;
  std::unique_ptr<File> codes_file_;

  std::mutex writer_;  // insert / remove / merge / gc
  mutable StateLock state_;
  // Guarded by state_ (exclusive to modify, shared to read).
  std::shared_ptr<GraphStore> graph_;
  std::unique_ptr<NeighborCache> cache_;
  std::vector<std::uint8_t> codes_;
  TombstoneSet tombstones_;
  MemIndex mem_;
  std::vector<VectorId> pending_deletes_;
  std::uint64_t appended_bytes_ = 0;
};

}  // namespace dvs
