#pragma once

#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <shared_mutex>

#include "dvs/layout/config.hpp"
#include "dvs/layout/io.hpp"
#include "dvs/layout/segment.hpp"

namespace dvs {

struct Location {
  std::uint32_t segment = kInvalidId;
  std::uint32_t slot = kInvalidId;
  bool valid() const { return segment != kInvalidId; }
};

/// Vector id → (segment, slot). Persisted as `idmap.0` whenever GC relocates
/// vectors; segments appended after that extend it at open.
class IdLocationMap {
 public:
  static constexpr std::uint32_t kMagic = 0x4D495644;  // "DVIM"

  std::size_t size() const { return entries_.size(); }
  Location get(VectorId id) const { return id < entries_.size() ? entries_[id] : Location{}; }
  void set(VectorId id, Location loc);
  void clear(VectorId id);
  const std::vector<Location>& entries() const { return entries_; }

  Bytes serialize(std::uint32_t watermark) const;
  /// Returns the watermark (first segment id not covered by the snapshot).
  std::uint32_t deserialize(ByteSpan data, const std::string& what);

 private:
  std::vector<Location> entries_;
};

struct SegmentInfo {
  std::uint32_t segment_id = 0;
  SegmentState state = SegmentState::kMutable;
  std::uint32_t stored_count = 0;
  std::uint32_t stale_count = 0;
  std::uint64_t data_bytes = 0;
  std::uint64_t meta_bytes = 0;
  std::uint64_t chunk_metadata_bytes = 0;
  double garbage_ratio = 0.0;
};

struct CompactionResult {
  std::vector<std::uint32_t> removed_segments;
  std::vector<std::uint32_t> created_segments;
  std::uint64_t bytes_reclaimed = 0;  // old file bytes minus new file bytes
  std::uint64_t bytes_written = 0;
  std::vector<VectorId> dropped_ids;  // dead ids whose storage was released
};

/// Segmented, append-only vector storage under `<dir>/segments`. One writer
/// (append/seal/compact) may run concurrently with any number of readers.
class VectorStore {
 public:
  static std::unique_ptr<VectorStore> create(const std::filesystem::path& dir, const StoreConfig& config,
                                             IoCounters* counters);
  static std::unique_ptr<VectorStore> open(const std::filesystem::path& dir, const StoreConfig& config,
                                           IoCounters* counters);
  ~VectorStore();

  /// Appends one vector of exactly V bytes; seals the segment when it fills.
  VectorId append(ByteSpan vector);
  /// Makes appended bytes durable.
  void flush();
  /// Seals the current mutable segment even if partially filled; a fresh
  /// mutable segment takes over. No-op when it is empty.
  void seal_active();

  void read_into(VectorId id, std::span<std::uint8_t> out) const;
  Bytes read(VectorId id) const;
  bool contains(VectorId id) const;
  Location locate(VectorId id) const;

  /// Accounts a deleted vector against its segment's garbage.
  void mark_stale(VectorId id);
  double garbage_ratio(std::uint32_t segment_id) const;

  /// Rewrites the live vectors of `segment_ids` (sealed only) into new sealed
  /// segments, commits the id map, and removes the old files.
  CompactionResult compact(const std::vector<std::uint32_t>& segment_ids,
                           const std::function<bool(VectorId)>& is_live);

  std::vector<SegmentInfo> segments() const;
  VectorId next_id() const { return next_id_; }
  std::uint32_t active_segment() const;
  std::uint64_t data_bytes() const;
  std::uint64_t metadata_bytes() const;
  std::uint64_t idmap_bytes() const;
  const StoreConfig& config() const { return config_; }

 private:
  struct Segment;

  VectorStore(std::filesystem::path dir, StoreConfig config, IoCounters* counters);

  std::filesystem::path seg_dir() const { return dir_ / "segments"; }
  std::filesystem::path data_path(std::uint32_t id) const;
  std::filesystem::path meta_path(std::uint32_t id) const;
  std::shared_ptr<Segment> new_mutable_segment();
  std::shared_ptr<Segment> seal(const Segment& seg);
  std::shared_ptr<Segment> load_segment(std::uint32_t id);
  std::shared_ptr<Segment> segment_for(VectorId id, Location& loc) const;
  void read_slot(const Segment& seg, std::uint32_t slot, std::span<std::uint8_t> out) const;

  std::filesystem::path dir_;
  StoreConfig config_;
  IoCounters* counters_;

  mutable std::shared_mutex mu_;
  std::map<std::uint32_t, std::shared_ptr<Segment>> segments_;
  IdLocationMap idmap_;
  std::shared_ptr<Segment> active_;
  std::uint32_t next_segment_id_ = 0;
  std::atomic<VectorId> next_id_{0};
};

}  // namespace dvs
