#pragma once

#include <functional>
#include <span>
#include <vector>

#include "dvs/index/vamana.hpp"

namespace dvs {

/// In-memory Vamana graph over freshly inserted vectors, kept at full
/// precision until the next merge folds them into the on-disk graph.
class MemIndex {
 public:
  MemIndex(std::size_t dim, BuildParams params) : dim_(dim), params_(params) {}

  void insert(VectorId id, std::span<const float> vector);
  /// Best `L` by exact distance; ids matching `skip` are walked through but
  /// not returned.
  std::vector<Neighbor> search(std::span<const float> query, std::size_t L,
                               const std::function<bool(VectorId)>& skip = {}) const;

  std::size_t size() const { return ids_.size(); }
  bool empty() const { return ids_.empty(); }
  const std::vector<VectorId>& ids() const { return ids_; }
  std::span<const float> vector(std::size_t local) const { return {data_.data() + local * dim_, dim_}; }
  void clear();

 private:
  std::size_t dim_;
  BuildParams params_;
  std::vector<VectorId> ids_;
  std::vector<float> data_;
  Adjacency adjacency_;  // local indices
  VisitedSet scratch_;
};

/// Removes deleted vertices from the graph. Each survivor that pointed at a
/// deleted vertex gets robust_prune over its surviving neighbors plus the
/// surviving neighbors of those deleted ones; deleted lists are emptied.
/// Returns the survivors whose lists were rewritten, ascending.
std::vector<VectorId> consolidate_deletes(Adjacency& adjacency, const std::function<bool(VectorId)>& deleted,
                                          std::uint32_t max_degree, float alpha, const PairDistanceFn& distance);

}  // namespace dvs
