#pragma once

#include <atomic>
#include <list>
#include <mutex>
#include <span>
#include <unordered_map>
#include <vector>

#include "dvs/layout/graph_store.hpp"

namespace dvs {

/// LRU cache of compressed neighbor lists. Every entry occupies the same
/// number of bytes, sized from the Elias-Fano worst case, so the arena never
/// fragments. Safe for concurrent lookups.
class NeighborCache {
 public:
  NeighborCache(std::size_t capacity, std::size_t entry_bytes);

  /// 2-byte prefix plus ⌈ef_worst_case_bits(R, N) / 8⌉.
  static std::size_t entry_bytes_for(std::uint32_t max_degree, std::uint64_t num_vertices);

  /// Neighbor list of `v`; on a miss the list is read from `graph` and
  /// inserted, evicting the least recently used entry when full.
  std::vector<VectorId> lookup(const GraphStore& graph, VectorId v, bool* hit = nullptr);

  void invalidate(std::span<const VectorId> ids);
  void clear();

  std::size_t capacity() const { return capacity_; }
  std::size_t entry_bytes() const { return entry_bytes_; }
  std::size_t size() const;
  std::uint64_t hits() const { return hits_.load(); }
  std::uint64_t misses() const { return misses_.load(); }

 private:
  using Lru = std::list<std::pair<VectorId, std::size_t>>;  // (vertex, slot), front = newest

  std::size_t capacity_;
  std::size_t entry_bytes_;
  mutable std::mutex mu_;
  Bytes arena_;
  Lru lru_;
  std::unordered_map<VectorId, Lru::iterator> index_;
  std::vector<std::size_t> free_slots_;
  std::atomic<std::uint64_t> hits_{0};
  std::atomic<std::uint64_t> misses_{0};
};

}  // namespace dvs
