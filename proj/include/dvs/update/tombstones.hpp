#pragma once

#include <filesystem>
#include <memory>
#include <span>
#include <vector>

#include "dvs/layout/io.hpp"

namespace dvs {

/// Deleted ids, persisted in `tombstones.log` as appended little-endian u32s.
/// Membership reads may run concurrently with each other; mutation needs
/// external exclusion.
class TombstoneSet {
 public:
  static constexpr const char* kFileName = "tombstones.log";

  /// Replays the log (a torn trailing record is dropped); creates it if absent.
  static TombstoneSet open(const std::filesystem::path& dir, IoCounters* counters = nullptr);

  /// Durably appends `id` to the log. Call before `insert`.
  void log(VectorId id);
  void insert(VectorId id);
  bool contains(VectorId id) const { return id < flags_.size() && flags_[id] != 0; }
  std::size_t size() const { return count_; }
  std::vector<VectorId> ids() const;

  /// Forgets `ids` and rewrites the log without them.
  void erase(std::span<const VectorId> ids);
  std::uint64_t file_bytes() const;

 private:
  std::filesystem::path path_;
  IoCounters* counters_ = nullptr;
  std::shared_ptr<File> file_;
  std::vector<std::uint8_t> flags_;
  std::size_t count_ = 0;
};

}  // namespace dvs
