#pragma once

#include <functional>
#include <span>
#include <vector>

#include "dvs/core/knn.hpp"
#include "dvs/layout/graph_store.hpp"

namespace dvs {

/// Row-major float vectors addressed by id (rows of dead ids are ignored).
struct VectorTable {
  const float* data = nullptr;
  std::size_t dim = 0;
  std::size_t count = 0;

  const float* row(VectorId id) const { return data + std::size_t{id} * dim; }
  float distance(VectorId a, VectorId b) const;
  float distance(VectorId a, const float* q) const;
};

struct GraphIndex {
  Adjacency adjacency;
  VectorId entry_point = kInvalidId;
};

struct BuildParams {
  std::uint32_t max_degree = 96;   // R
  std::uint32_t build_list = 100;  // L_b
  float prune_alpha = 1.2f;
  std::uint64_t seed = 42;
  /// Reverse edges may grow a list to slack·R before it is pruned back to R;
  /// callers restore the bound with enforce_degree.
  float slack = 1.3f;
};

using NeighborFn = std::function<std::span<const VectorId>(VectorId)>;
using QueryDistanceFn = std::function<float(VectorId)>;
using PairDistanceFn = std::function<float(VectorId, VectorId)>;

struct GreedyResult {
  std::vector<Neighbor> top;      // best L, ascending
  std::vector<Neighbor> visited;  // every expanded vertex
};

/// Reusable visited marks; grows on demand, cleared in O(1) by `reset`.
class VisitedSet {
 public:
  explicit VisitedSet(std::size_t capacity = 0) : stamp_(capacity, 0) {}
  void reset();
  /// Returns true when `id` was not yet marked.
  bool test_and_set(VectorId id);

 private:
  std::vector<std::uint32_t> stamp_;
  std::uint32_t epoch_ = 1;
};

/// Best-first search with a size-L candidate list over exact distances;
/// stops once every retained candidate has been expanded.
GreedyResult greedy_search_mem(const NeighborFn& neighbors, const QueryDistanceFn& distance,
                               std::span<const VectorId> entries, std::size_t L, VisitedSet* scratch = nullptr);

/// α-dominance pruning: keep the nearest remaining candidate p, drop every c
/// with α·d(p, c) ≤ d(v, c), repeat until R are kept.
std::vector<VectorId> robust_prune(VectorId vertex, std::vector<Neighbor> candidates, std::uint32_t max_degree,
                                   float alpha, const PairDistanceFn& distance);

/// Vertex minimizing distance to the mean over `ids`.
VectorId medoid(const VectorTable& vectors, std::span<const VectorId> ids);

/// Vamana: random R-regular start, two passes over a seeded permutation
/// (α = 1, then prune_alpha), reverse edges pruned past slack·R, then every
/// list cut back to R.
GraphIndex build_graph(const VectorTable& vectors, const BuildParams& params);

/// Inserts vertex `p` into a graph held in memory: greedy search from the
/// entry point, prune, and reverse edges. Vertices whose list changed are
/// reported through `touched`.
void vamana_insert(Adjacency& adjacency, const VectorTable& vectors, VectorId p, VectorId entry,
                   const BuildParams& params, float alpha, VisitedSet& scratch,
                   std::vector<VectorId>* touched = nullptr);

/// Prunes every list longer than `max_degree`. Returns the vertices changed.
std::vector<VectorId> enforce_degree(Adjacency& adjacency, const VectorTable& vectors, std::uint32_t max_degree,
                                     float alpha);

/// Adds edges until every vertex in `live` is reachable from `entry`.
/// Returns the vertices whose lists changed.
std::vector<VectorId> repair_reachability(Adjacency& adjacency, const VectorTable& vectors, VectorId entry,
                                          std::uint32_t max_degree, const std::vector<bool>& live);

}  // namespace dvs
