#include "dvs/search/neighbor_cache.hpp"

#include <numeric>

#include "dvs/codec/elias_fano.hpp"

namespace dvs {

NeighborCache::NeighborCache(std::size_t capacity, std::size_t entry_bytes)
    : capacity_(capacity), entry_bytes_(entry_bytes), arena_(capacity * entry_bytes) {
  if (capacity > 0 && entry_bytes < 2) throw UsageError("NeighborCache: entry size too small");
  free_slots_.resize(capacity);
  // Hand out low slots first.
  std::iota(free_slots_.rbegin(), free_slots_.rend(), std::size_t{0});
}

std::size_t NeighborCache::entry_bytes_for(std::uint32_t max_degree, std::uint64_t num_vertices) {
  return ef_compact_entry_bytes(max_degree, std::max<std::uint64_t>(num_vertices, 1));
}

std::vector<VectorId> NeighborCache::lookup(const GraphStore& graph, VectorId v, bool* hit) {
  if (capacity_ > 0) {
    std::lock_guard lock(mu_);
    if (auto it = index_.find(v); it != index_.end()) {
      lru_.splice(lru_.begin(), lru_, it->second);
      ++hits_;
      if (hit) *hit = true;
      return ef_decode_compact(ByteSpan(arena_).subspan(it->second->second * entry_bytes_, entry_bytes_));
    }
  }
  ++misses_;
  if (hit) *hit = false;

  const Bytes raw = graph.read_encoded(v);
  const EncodedNeighborList enc = raw.empty() ? EncodedNeighborList{} : EncodedNeighborList::deserialize(raw);
  std::vector<VectorId> list = raw.empty() ? std::vector<VectorId>{} : ef_decode(enc);
  if (capacity_ == 0) return list;

  Bytes packed(entry_bytes_, 0);
  ef_pack_compact(enc, packed);  // throws if the list exceeds the sizing bound

  std::lock_guard lock(mu_);
  if (index_.count(v)) return list;  // another reader filled it meanwhile
  std::size_t slot;
  if (!free_slots_.empty()) {
    slot = free_slots_.back();
    free_slots_.pop_back();
  } else {
    auto victim = std::prev(lru_.end());
    slot = victim->second;
    index_.erase(victim->first);
    lru_.erase(victim);
  }
  std::copy(packed.begin(), packed.end(), arena_.begin() + slot * entry_bytes_);
  lru_.emplace_front(v, slot);
  index_[v] = lru_.begin();
  return list;
}

void NeighborCache::invalidate(std::span<const VectorId> ids) {
  std::lock_guard lock(mu_);
  for (auto v : ids) {
    auto it = index_.find(v);
    if (it == index_.end()) continue;
    free_slots_.push_back(it->second->second);
    lru_.erase(it->second);
    index_.erase(it);
  }
}

void NeighborCache::clear() {
  std::lock_guard lock(mu_);
  for (const auto& [v, slot] : lru_) free_slots_.push_back(slot);
  lru_.clear();
  index_.clear();
}

std::size_t NeighborCache::size() const {
  std::lock_guard lock(mu_);
  return index_.size();
}

}  // namespace dvs
