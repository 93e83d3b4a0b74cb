#pragma once

#include <optional>
#include <span>

#include "dvs/common.hpp"

namespace dvs {

/// Per-chunk decision: store vectors as XOR deltas against `base`, or raw.
struct ChunkTransform {
  bool use_delta = false;
  std::optional<Bytes> base;  // present iff use_delta
};

/// Most frequent byte value at each position; ties go to the smaller value.
Bytes build_base_vector(std::span<const ByteSpan> vectors);
/// Same, over `count` vectors of `width` bytes stored back to back.
Bytes build_base_vector(ByteSpan concatenated, std::size_t width);

Bytes xor_transform(ByteSpan data, ByteSpan base);
void xor_in_place(std::span<std::uint8_t> data, ByteSpan base);

/// Samples the first ⌈fraction·n⌉ vectors (at least one) and keeps the delta
/// form only when it strictly lowers byte entropy.
ChunkTransform choose_chunk_transform(ByteSpan concatenated, std::size_t width, double sample_fraction = 0.10);
ChunkTransform choose_chunk_transform(std::span<const ByteSpan> vectors, double sample_fraction = 0.10);

}  // namespace dvs
