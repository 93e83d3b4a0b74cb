#include "dvs/layout/segment.hpp"

#include <algorithm>

#include "dvs/codec/delta.hpp"

namespace dvs {

std::uint32_t SegmentManifest::total_blocks() const {
  std::uint32_t n = 0;
  for (const auto& c : chunks) n += c.num_blocks();
  return n;
}

std::size_t SegmentManifest::chunk_metadata_bytes() const {
  std::size_t n = 0;
  for (const auto& c : chunks) n += c.serialized_size(vector_bytes);
  return n;
}

Bytes SegmentManifest::serialize() const {
  Bytes out;
  out.reserve(kHeaderBytes + FrequencyTable::kSerializedBytes + chunk_metadata_bytes());
  put_le(out, kMagic);
  put_le(out, kVersion);
  put_le(out, static_cast<std::uint32_t>(state));
  put_le(out, segment_id);
  put_le(out, capacity);
  put_le(out, stored_count);
  put_le(out, first_id);
  put_le(out, vector_bytes);
  put_le(out, chunk_vectors);
  put_le(out, static_cast<std::uint32_t>(chunks.size()));
  put_le(out, total_blocks());
  put_le(out, std::uint32_t{0});
  if (state == SegmentState::kSealed) {
    frequencies.serialize(out);
    for (const auto& c : chunks) {
      put_le(out, c.first_block);
      put_le(out, c.num_blocks());
      put_le(out, std::uint32_t{(c.use_delta ? 1u : 0u) | (c.dense ? 2u : 0u)});
      for (auto b : c.boundary_ids) put_le(out, b);
      if (c.base.size() == vector_bytes) {
        out.insert(out.end(), c.base.begin(), c.base.end());
      } else {
        out.insert(out.end(), vector_bytes, 0);
      }
    }
  }
  return out;
}

SegmentManifest SegmentManifest::deserialize(ByteSpan data, const std::string& what) {
  ByteReader r(data, what);
  if (r.get<std::uint32_t>() != kMagic) throw FormatError(what + ": bad magic");
  if (r.get<std::uint32_t>() != kVersion) throw FormatError(what + ": unsupported version");
  SegmentManifest m;
  const auto state = r.get<std::uint32_t>();
  if (state > 1) throw FormatError(what + ": bad state " + std::to_string(state));
  m.state = static_cast<SegmentState>(state);
  m.segment_id = r.get<std::uint32_t>();
  m.capacity = r.get<std::uint32_t>();
  m.stored_count = r.get<std::uint32_t>();
  m.first_id = r.get<std::uint32_t>();
  m.vector_bytes = r.get<std::uint32_t>();
  m.chunk_vectors = r.get<std::uint32_t>();
  const auto num_chunks = r.get<std::uint32_t>();
  const auto total = r.get<std::uint32_t>();
  r.get<std::uint32_t>();
  if (m.vector_bytes == 0 || m.chunk_vectors == 0) throw FormatError(what + ": zero vector or chunk size");
  if (m.stored_count > m.capacity) throw FormatError(what + ": stored count exceeds capacity");
  if (m.state == SegmentState::kMutable) return m;

  m.frequencies = FrequencyTable::deserialize(r.take(FrequencyTable::kSerializedBytes));
  const std::uint64_t expected_chunks = (std::uint64_t{m.stored_count} + m.chunk_vectors - 1) / m.chunk_vectors;
  if (num_chunks != expected_chunks) throw FormatError(what + ": chunk count mismatch");
  m.chunks.resize(num_chunks);
  std::uint32_t next_block = 0;
  for (std::uint32_t i = 0; i < num_chunks; ++i) {
    auto& c = m.chunks[i];
    c.first_block = r.get<std::uint32_t>();
    const auto nb = r.get<std::uint32_t>();
    const auto flags = r.get<std::uint32_t>();
    c.use_delta = (flags & 1u) != 0;
    c.dense = (flags & 2u) != 0;
    if (flags > 3u || (c.dense && c.use_delta)) throw FormatError(what + ": bad flags in chunk " + std::to_string(i));
    if (c.first_block != next_block || nb == 0 || nb > r.remaining() / 4) {
      throw FormatError(what + ": bad block range in chunk " + std::to_string(i));
    }
    next_block += nb;
    c.boundary_ids.resize(nb);
    for (auto& b : c.boundary_ids) b = r.get<std::uint32_t>();
    const auto base = r.take(m.vector_bytes);
    if (c.use_delta) c.base.assign(base.begin(), base.end());
    if (c.boundary_ids.front() != i * m.chunk_vectors ||
        !std::is_sorted(c.boundary_ids.begin(), c.boundary_ids.end())) {
      throw FormatError(what + ": bad boundaries in chunk " + std::to_string(i));
    }
    if (c.dense) {
      const std::uint64_t n = std::min<std::uint64_t>(m.chunk_vectors, m.stored_count - i * std::uint64_t{m.chunk_vectors});
      if (nb != (n * m.vector_bytes + kBlockSize - 1) / kBlockSize) {
        throw FormatError(what + ": dense chunk " + std::to_string(i) + " has wrong block count");
      }
    }
  }
  if (next_block != total) throw FormatError(what + ": block total mismatch");
  return m;
}

VectorLocation locate_vector(const SegmentManifest& m, std::uint32_t slot) {
  if (m.state != SegmentState::kSealed) throw UsageError("locate_vector: segment is not sealed");
  if (slot >= m.stored_count) {
    throw NotFoundError("segment " + std::to_string(m.segment_id) + ": slot " + std::to_string(slot) +
                        " beyond " + std::to_string(m.stored_count));
  }
  const std::uint32_t chunk = slot / m.chunk_vectors;
  const auto& c = m.chunks[chunk];
  if (c.dense) {
    const std::uint64_t off = std::uint64_t{slot - chunk * m.chunk_vectors} * m.vector_bytes;
    return {chunk, c.first_block + static_cast<std::uint32_t>(off / kBlockSize), 0, true,
            static_cast<std::uint32_t>(off % kBlockSize)};
  }
  auto it = std::upper_bound(c.boundary_ids.begin(), c.boundary_ids.end(), slot);
  const auto index = static_cast<std::uint32_t>(it - c.boundary_ids.begin()) - 1;
  return {chunk, c.first_block + index, slot - c.boundary_ids[index]};
}

SealedImage compress_segment(ByteSpan raw, std::size_t v, std::size_t chunk_vectors, double sample_fraction) {
  if (v == 0 || chunk_vectors == 0) throw UsageError("compress_segment: zero vector or chunk size");
  if (raw.empty() || raw.size() % v != 0) throw UsageError("compress_segment: input is not a whole number of vectors");
  if (v > BlockBuilder::kMaxEntryBytes) throw UsageError("compress_segment: vector larger than a block entry");
  const std::size_t count = raw.size() / v;
  const std::size_t num_chunks = (count + chunk_vectors - 1) / chunk_vectors;

  SealedImage img;
  Bytes transformed(raw.begin(), raw.end());
  img.chunks.resize(num_chunks);
  for (std::size_t c = 0; c < num_chunks; ++c) {
    const std::size_t begin = c * chunk_vectors;
    const std::size_t n = std::min(chunk_vectors, count - begin);
    auto span = std::span<std::uint8_t>(transformed).subspan(begin * v, n * v);
    auto t = choose_chunk_transform(ByteSpan(span), v, sample_fraction);
    img.chunks[c].use_delta = t.use_delta;
    if (t.use_delta) {
      img.chunks[c].base = std::move(*t.base);
      for (std::size_t i = 0; i < n; ++i) xor_in_place(span.subspan(i * v, v), img.chunks[c].base);
    }
  }
  img.frequencies = build_frequency_table(transformed);
  const HuffmanTable codes = HuffmanTable::build(img.frequencies);

  BlockBuilder builder;
  Bytes encoded;
  std::uint32_t block = 0;
  for (std::size_t c = 0; c < num_chunks; ++c) {
    auto& meta = img.chunks[c];
    meta.first_block = block;
    const std::size_t begin = c * chunk_vectors;
    const std::size_t end = std::min(begin + chunk_vectors, count);
    for (std::size_t i = begin; i < end; ++i) {
      const ByteSpan vec = ByteSpan(transformed).subspan(i * v, v);
      encoded.clear();
      codes.encode_into(vec, encoded);
      const bool raw_entry = encoded.size() >= v;
      if (raw_entry) ++img.raw_fallbacks;
      const ByteSpan payload = raw_entry ? vec : ByteSpan(encoded);
      if (builder.empty() || !builder.add(payload, raw_entry)) {
        if (!builder.empty()) {
          builder.finish_into(img.blocks);
          ++block;
        }
        builder.add(payload, raw_entry);
        meta.boundary_ids.push_back(static_cast<std::uint32_t>(i));
      }
    }
    builder.finish_into(img.blocks);
    ++block;

    const std::size_t n = end - begin;
    const auto dense_blocks = static_cast<std::uint32_t>((n * v + kBlockSize - 1) / kBlockSize);
    if (block - meta.first_block >= dense_blocks) {
      img.blocks.resize(std::size_t{meta.first_block} * kBlockSize);
      img.blocks.insert(img.blocks.end(), raw.begin() + begin * v, raw.begin() + end * v);
      img.blocks.resize(std::size_t{meta.first_block + dense_blocks} * kBlockSize, 0);
      meta.dense = true;
      meta.use_delta = false;
      meta.base.clear();
      meta.boundary_ids.clear();
      for (std::uint32_t b = 0; b < dense_blocks; ++b) {
        // first slot that starts inside block b
        meta.boundary_ids.push_back(static_cast<std::uint32_t>(begin + (std::uint64_t{b} * kBlockSize + v - 1) / v));
      }
      block = meta.first_block + dense_blocks;
      ++img.dense_chunks;
    }
  }
  return img;
}

void decode_vector(const BlockEntry& entry, const ChunkMetadata& chunk, const HuffmanTable& codes,
                   std::span<std::uint8_t> out) {
  if (entry.raw) {
    if (entry.payload.size() != out.size()) throw CorruptionError("raw entry has wrong length");
    std::copy(entry.payload.begin(), entry.payload.end(), out.begin());
  } else {
    codes.decode_into(entry.payload, entry.payload.size() * 8, out);
  }
  if (chunk.use_delta) xor_in_place(out, chunk.base);
}

}  // namespace dvs
