#pragma once

#include <functional>
#include <string>
#include <unordered_map>

#include <json.hpp>

#include "dvs/core/knn.hpp"
#include "dvs/index/pq.hpp"
#include "dvs/search/neighbor_cache.hpp"

namespace dvs {

struct SearchParams {
  std::uint32_t K = 10;
  std::uint32_t L_s = 100;
  std::uint32_t W = 4;
  std::uint32_t B = 10;
  float benefit_threshold = 0.01f;

  /// Throws UsageError unless 1 ≤ K ≤ L_s, W ≥ 1, B ≥ 1, threshold in [0, 1].
  void validate() const;
};

struct QueryStats {
  std::uint64_t cache_hits = 0;
  std::uint64_t graph_ios = 0;             // neighbor lists read from graph.data
  std::uint64_t vector_ios = 0;            // full-precision vector reads, all paths
  std::uint64_t prefetch_ios = 0;          // subset of vector_ios issued while traversing
  std::uint64_t traversal_vector_ios = 0;  // vector reads made by graph traversal itself
  std::uint64_t pq_evals = 0;
  std::uint64_t hops = 0;                  // beam iterations
  std::uint64_t reranked = 0;              // candidates whose exact distance was evaluated
  std::uint64_t rerank_batches = 0;
  bool terminated_early = false;
  std::uint64_t read_errors = 0;
  std::string error;

  nlohmann::json to_json() const;
};

struct SearchResult {
  std::vector<Neighbor> neighbors;  // ascending exact squared L2
  QueryStats stats;
};

/// Everything a query needs from an open store. `code` must cover every id
/// the graph can reach; `is_deleted` may be empty.
struct SearchSource {
  const GraphStore* graph = nullptr;
  NeighborCache* cache = nullptr;
  const PQCodebook* codebook = nullptr;
  std::function<const std::uint8_t*(VectorId)> code;
  std::function<void(VectorId, std::span<float>)> read_vector;
  std::function<bool(VectorId)> is_deleted;
};

/// max(0, W − inflight)
std::size_t prefetch_budget(std::size_t W, std::size_t inflight);

/// Bounded max-heap over (PQ distance, id); the root is the worst retained
/// candidate.
class PrefetchHeap {
 public:
  explicit PrefetchHeap(std::size_t capacity) : capacity_(capacity) {}

  /// Returns true when the heap changed.
  bool offer(float distance, VectorId id);
  bool full() const { return heap_.size() >= capacity_; }
  std::size_t size() const { return heap_.size(); }
  std::size_t capacity() const { return capacity_; }
  const Neighbor& worst() const { return heap_.front(); }
  std::vector<Neighbor> sorted() const;

 private:
  std::size_t capacity_;
  std::vector<Neighbor> heap_;
};

bool is_stable(const PrefetchHeap& heap, std::size_t consecutive_non_updates, std::size_t B);

struct RerankOutcome {
  std::vector<Neighbor> top;
  std::size_t evaluated = 0;
  std::size_t batches = 0;
  std::size_t fetched = 0;
  std::size_t read_errors = 0;
  bool terminated_early = false;
  std::string error;
};

/// Exact distance for one id; throws on a failed read.
using ExactDistanceFn = std::function<float(VectorId)>;

/// Walks `ranked` (ascending PQ distance) in batches of B, prefetched ids
/// first, keeping the best K exact distances. Stops after a batch whose
/// improvement count / B falls below `threshold`.
RerankOutcome rerank(std::span<const Neighbor> ranked, const std::unordered_map<VectorId, float>& prefetched,
                     const ExactDistanceFn& exact, std::size_t K, std::size_t B, float threshold);

/// PQ-guided beam search over the on-disk graph followed by exact re-ranking.
/// Deleted ids are traversed but never returned.
SearchResult beam_search(const SearchSource& source, std::span<const float> query, const SearchParams& params);

}  // namespace dvs
