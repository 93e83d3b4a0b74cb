#include "dvs/update/mem_index.hpp"

#include <algorithm>
#include <map>

#include "dvs/core/distance.hpp"

namespace dvs {

void MemIndex::insert(VectorId id, std::span<const float> vector) {
  if (vector.size() != dim_) throw UsageError("MemIndex: dimension mismatch");
  const auto local = static_cast<VectorId>(ids_.size());
  ids_.push_back(id);
  data_.insert(data_.end(), vector.begin(), vector.end());
  adjacency_.emplace_back();
  if (local == 0) return;
  const VectorTable table{data_.data(), dim_, ids_.size()};
  vamana_insert(adjacency_, table, local, 0, params_, params_.prune_alpha, scratch_);
}

std::vector<Neighbor> MemIndex::search(std::span<const float> query, std::size_t L,
                                       const std::function<bool(VectorId)>& skip) const {
  if (ids_.empty()) return {};
  const VectorTable table{data_.data(), dim_, ids_.size()};
  const VectorId entry[] = {0};
  const auto res = greedy_search_mem([&](VectorId v) { return std::span<const VectorId>(adjacency_[v]); },
                                     [&](VectorId v) { return table.distance(v, query.data()); }, entry, L);
  std::vector<Neighbor> out;
  for (const auto& n : res.top) {
    const VectorId id = ids_[n.id];
    if (skip && skip(id)) continue;
    out.push_back({id, n.distance});
  }
  return out;
}

void MemIndex::clear() {
  ids_.clear();
  data_.clear();
  adjacency_.clear();
}

std::vector<VectorId> consolidate_deletes(Adjacency& adjacency, const std::function<bool(VectorId)>& deleted,
                                          std::uint32_t max_degree, float alpha, const PairDistanceFn& distance) {
  std::map<VectorId, std::vector<VectorId>> rewritten;
  for (VectorId u = 0; u < adjacency.size(); ++u) {
    if (deleted(u)) continue;
    const auto& list = adjacency[u];
    if (std::none_of(list.begin(), list.end(), deleted)) continue;
    std::vector<VectorId> pool;
    for (auto v : list) {
      if (!deleted(v)) {
        pool.push_back(v);
        continue;
      }
      for (auto w : adjacency[v]) {
        if (w != u && !deleted(w)) pool.push_back(w);
      }
    }
    std::sort(pool.begin(), pool.end());
    pool.erase(std::unique(pool.begin(), pool.end()), pool.end());
    std::vector<Neighbor> candidates;
    candidates.reserve(pool.size());
    for (auto w : pool) candidates.push_back({w, distance(u, w)});
    rewritten[u] = robust_prune(u, std::move(candidates), max_degree, alpha, distance);
  }
  std::vector<VectorId> changed;
  for (auto& [u, list] : rewritten) {
    adjacency[u] = std::move(list);
    changed.push_back(u);
  }
  for (VectorId v = 0; v < adjacency.size(); ++v) {
    if (deleted(v)) adjacency[v].clear();
  }
  return changed;
}

}  // namespace dvs
