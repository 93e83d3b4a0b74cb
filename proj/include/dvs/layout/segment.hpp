#pragma once

#include <vector>

#include "dvs/codec/entropy.hpp"
#include "dvs/codec/huffman.hpp"
#include "dvs/layout/block.hpp"

namespace dvs {

enum class SegmentState : std::uint32_t { kMutable = 0, kSealed = 1 };

/// In-memory lookup metadata for one chunk of a sealed segment.
/// Serialized as first_block (u32), num_blocks (u32), flags (u32, bit 0 =
/// delta, bit 1 = dense), boundary ids (u32 each), base vector (V bytes,
/// zeros if unused): 4·(num_blocks + 3) + V bytes.
///
/// A dense chunk holds its vectors uncoded and back to back with no block
/// headers, so a vector may straddle two blocks. Used when coding would not
/// save a block.
struct ChunkMetadata {
  std::uint32_t first_block = 0;
  std::vector<std::uint32_t> boundary_ids;  // first slot stored in each block
  bool use_delta = false;
  bool dense = false;
  Bytes base;  // V bytes

  std::uint32_t num_blocks() const { return static_cast<std::uint32_t>(boundary_ids.size()); }
  std::size_t serialized_size(std::size_t v) const { return 4 * (boundary_ids.size() + 3) + v; }
};

/// Per-segment state. Vectors are addressed by their slot within the segment;
/// for segments filled by appends, id = first_id + slot.
struct SegmentManifest {
  static constexpr std::uint32_t kMagic = 0x4D535644;  // "DVSM"
  static constexpr std::uint32_t kVersion = 1;
  static constexpr std::size_t kHeaderBytes = 48;

  std::uint32_t segment_id = 0;
  SegmentState state = SegmentState::kMutable;
  std::uint32_t capacity = 0;
  std::uint32_t stored_count = 0;
  std::uint32_t first_id = kInvalidId;  // kInvalidId when ids are not contiguous
  std::uint32_t vector_bytes = 0;
  std::uint32_t chunk_vectors = 0;
  std::uint32_t live_count = 0;   // runtime accounting, not persisted
  std::uint32_t stale_count = 0;  // runtime accounting, not persisted
  FrequencyTable frequencies;      // sealed only
  std::vector<ChunkMetadata> chunks;

  std::uint32_t total_blocks() const;
  std::size_t chunk_metadata_bytes() const;

  Bytes serialize() const;
  static SegmentManifest deserialize(ByteSpan data, const std::string& what);
};

struct VectorLocation {
  std::uint32_t chunk = 0;
  std::uint32_t block = 0;  // block index within the segment file
  std::uint32_t slot = 0;   // entry within the block
  bool dense = false;       // when set, `offset` replaces `slot`
  std::uint32_t offset = 0;  // byte offset within the block
};

/// Resolves a slot of a sealed segment to its block entry.
VectorLocation locate_vector(const SegmentManifest& manifest, std::uint32_t slot);

/// Output of compressing a full run of vectors: the block file image plus the
/// chunk metadata and frequency table that go into the manifest.
struct SealedImage {
  Bytes blocks;
  std::vector<ChunkMetadata> chunks;
  FrequencyTable frequencies;
  std::size_t raw_fallbacks = 0;
  std::size_t dense_chunks = 0;
};

/// Two-stage compression: per-chunk delta decision, then one Huffman table for
/// the whole segment. `raw` holds count·V bytes. Every chunk starts on a fresh
/// block; an entry whose code is not shorter than V is stored uncoded, and a
/// chunk whose coded blocks would not beat ⌈n·V/4096⌉ is stored dense.
SealedImage compress_segment(ByteSpan raw, std::size_t vector_bytes, std::size_t chunk_vectors,
                             double sample_fraction);

/// Decodes one vector from a block entry.
void decode_vector(const BlockEntry& entry, const ChunkMetadata& chunk, const HuffmanTable& codes,
                   std::span<std::uint8_t> out);

}  // namespace dvs
