#pragma once

#include <array>
#include <vector>

#include "dvs/common.hpp"

namespace dvs {

/// 4 KiB I/O unit: u16 entry count, then one u16 cumulative end offset per
/// entry (bit 15 flags a raw-fallback entry), then the concatenated payloads.
/// Offsets are relative to the payload start, which follows the header.
class BlockBuilder {
 public:
  static constexpr std::uint16_t kRawFlag = 0x8000;
  static constexpr std::size_t kMaxEntryBytes = kBlockSize - 4;

  /// Whether an entry of `bytes` would still fit.
  bool fits(std::size_t bytes) const;
  /// Adds an entry; returns false (and changes nothing) when it does not fit.
  bool add(ByteSpan payload, bool raw_flag = false);
  std::size_t count() const { return ends_.size(); }
  bool empty() const { return ends_.empty(); }
  std::size_t used_bytes() const { return 2 + 2 * ends_.size() + payload_.size(); }

  /// Serializes into a zero-padded 4,096-byte image and resets the builder.
  std::array<std::uint8_t, kBlockSize> finish();
  void finish_into(Bytes& out);

 private:
  std::vector<std::uint16_t> ends_;
  Bytes payload_;
};

struct BlockEntry {
  ByteSpan payload;
  bool raw = false;
};

/// Validating parser over one block image. Throws CorruptionError naming
/// `address` when the header is inconsistent.
class BlockView {
 public:
  BlockView(ByteSpan block, std::string_view address);

  std::size_t count() const { return count_; }
  BlockEntry entry(std::size_t slot) const;

 private:
  ByteSpan block_;
  std::size_t count_ = 0;
  std::string address_;
};

}  // namespace dvs
