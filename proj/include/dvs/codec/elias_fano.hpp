#pragma once

#include <span>
#include <vector>

#include "dvs/common.hpp"

namespace dvs {

/// Elias-Fano form of a nondecreasing id list: fixed-width low parts plus a
/// unary-gap bitmap of the high parts. Bit arrays are LSB-first.
struct EncodedNeighborList {
  std::uint32_t count = 0;         // R
  std::uint64_t universe = 0;      // N, every id < N
  std::uint8_t lower_width = 0;    // ℓ
  Bytes low_bits;                  // count·ℓ bits
  Bytes high_bits;                 // high_bit_count bits
  std::size_t high_bit_count = 0;  // count ones + (max >> ℓ) zeros

  /// Payload size in bits, excluding the header and byte padding.
  std::size_t payload_bits() const { return std::size_t{count} * lower_width + high_bit_count; }

  /// On-disk form: R (u16), ℓ (u8), low array, high bitmap; each array padded
  /// to a byte boundary.
  static constexpr std::size_t kHeaderBytes = 3;
  std::size_t serialized_size() const { return kHeaderBytes + low_bits.size() + high_bits.size(); }
  void serialize(Bytes& out) const;
  static EncodedNeighborList deserialize(ByteSpan data);
};

/// ℓ = max(0, ⌊log2(N / R)⌋)
std::uint8_t ef_lower_width(std::uint64_t count, std::uint64_t universe);

EncodedNeighborList ef_encode(std::span<const VectorId> sorted_ids, std::uint64_t universe);
std::vector<VectorId> ef_decode(const EncodedNeighborList& enc);

/// Decodes the on-disk form directly.
std::vector<VectorId> ef_decode_serialized(ByteSpan data);

/// 2R + R·⌈log2(N/R)⌉
std::uint64_t ef_worst_case_bits(std::uint64_t count, std::uint64_t universe);

/// Fixed-size compact form used by the neighbor cache: a u16 prefix holding R
/// (low 11 bits) and ℓ (high 5 bits), then the low and high bit arrays packed
/// back to back. Fits in 2 + ⌈ef_worst_case_bits/8⌉ bytes.
inline constexpr std::uint32_t kCompactMaxCount = 0x7FF;
std::size_t ef_compact_entry_bytes(std::uint64_t max_count, std::uint64_t universe);
void ef_pack_compact(const EncodedNeighborList& enc, std::span<std::uint8_t> out);
std::vector<VectorId> ef_decode_compact(ByteSpan entry);

}  // namespace dvs
