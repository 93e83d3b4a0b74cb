#include "dvs/codec/elias_fano.hpp"

#include <bit>

namespace dvs {

namespace {

inline void set_bit(std::span<std::uint8_t> bits, std::size_t pos) { bits[pos >> 3] |= std::uint8_t(1u << (pos & 7)); }
inline bool get_bit(ByteSpan bits, std::size_t pos) { return (bits[pos >> 3] >> (pos & 7)) & 1u; }

inline void write_bits(std::span<std::uint8_t> bits, std::size_t pos, std::uint64_t value, unsigned width) {
  for (unsigned i = 0; i < width; ++i) {
    if ((value >> i) & 1u) set_bit(bits, pos + i);
  }
}

inline std::uint64_t read_bits(ByteSpan bits, std::size_t pos, unsigned width) {
  std::uint64_t v = 0;
  for (unsigned i = 0; i < width; ++i) v |= std::uint64_t{get_bit(bits, pos + i)} << i;
  return v;
}

inline std::size_t bytes_for(std::size_t bits) { return (bits + 7) / 8; }

// Decodes `count` ids whose low parts start at bit `low_pos` and whose high
// bitmap starts at bit `high_pos` within `bits` (limited to `bit_limit`).
std::vector<VectorId> decode_parts(ByteSpan bits, std::size_t count, unsigned width, std::size_t low_pos,
                                   std::size_t high_pos, std::size_t bit_limit) {
  std::vector<VectorId> out;
  out.reserve(count);
  std::uint64_t high = 0;
  std::size_t pos = high_pos;
  for (std::size_t i = 0; i < count; ++i) {
    while (true) {
      if (pos >= bit_limit) throw CorruptionError("ef_decode: high bitmap exhausted");
      if (get_bit(bits, pos++)) break;
      ++high;
    }
    const std::uint64_t low = width == 0 ? 0 : read_bits(bits, low_pos + i * width, width);
    const std::uint64_t id = (high << width) | low;
    if (id > 0xFFFFFFFFull) throw CorruptionError("ef_decode: id overflow");
    out.push_back(static_cast<VectorId>(id));
  }
  return out;
}

}  // namespace

std::uint8_t ef_lower_width(std::uint64_t count, std::uint64_t universe) {
  if (count == 0 || universe <= count) return 0;
  std::uint8_t l = 0;
  while (l < 63 && (count << (l + 1)) <= universe && (count << (l + 1)) >> (l + 1) == count) ++l;
  return l;
}

std::uint64_t ef_worst_case_bits(std::uint64_t count, std::uint64_t universe) {
  if (count < 1 || count > universe) {
    throw UsageError("ef_worst_case_bits: need 1 <= R <= N (R=" + std::to_string(count) +
                     ", N=" + std::to_string(universe) + ")");
  }
  unsigned c = 0;
  while ((count << c) < universe) ++c;  // smallest c with R·2^c >= N
  return 2 * count + count * c;
}

EncodedNeighborList ef_encode(std::span<const VectorId> sorted_ids, std::uint64_t universe) {
  if (sorted_ids.empty()) throw UsageError("ef_encode: empty list");
  if (sorted_ids.size() > 0xFFFF) throw UsageError("ef_encode: list longer than 65535");
  for (std::size_t i = 0; i < sorted_ids.size(); ++i) {
    if (sorted_ids[i] >= universe) {
      throw UsageError("ef_encode: id " + std::to_string(sorted_ids[i]) + " >= universe " + std::to_string(universe));
    }
    if (i > 0 && sorted_ids[i] < sorted_ids[i - 1]) throw UsageError("ef_encode: ids must be nondecreasing");
  }
  EncodedNeighborList e;
  e.count = static_cast<std::uint32_t>(sorted_ids.size());
  e.universe = universe;
  e.lower_width = ef_lower_width(e.count, universe);
  const unsigned width = e.lower_width;

  e.low_bits.assign(bytes_for(std::size_t{e.count} * width), 0);
  e.high_bit_count = (static_cast<std::size_t>(sorted_ids.back()) >> width) + e.count;
  e.high_bits.assign(bytes_for(e.high_bit_count), 0);
  for (std::size_t i = 0; i < sorted_ids.size(); ++i) {
    const std::uint64_t id = sorted_ids[i];
    if (width > 0) write_bits(e.low_bits, i * width, id & ((std::uint64_t{1} << width) - 1), width);
    set_bit(e.high_bits, (id >> width) + i);
  }
  return e;
}

std::vector<VectorId> ef_decode(const EncodedNeighborList& enc) {
  Bytes joined = enc.low_bits;
  const std::size_t high_pos = joined.size() * 8;
  joined.insert(joined.end(), enc.high_bits.begin(), enc.high_bits.end());
  return decode_parts(joined, enc.count, enc.lower_width, 0, high_pos, high_pos + enc.high_bit_count);
}

void EncodedNeighborList::serialize(Bytes& out) const {
  put_le(out, static_cast<std::uint16_t>(count));
  out.push_back(lower_width);
  out.insert(out.end(), low_bits.begin(), low_bits.end());
  out.insert(out.end(), high_bits.begin(), high_bits.end());
}

EncodedNeighborList EncodedNeighborList::deserialize(ByteSpan data) {
  ByteReader r(data, "neighbor list");
  EncodedNeighborList e;
  e.count = r.get<std::uint16_t>();
  e.lower_width = r.get<std::uint8_t>();
  if (e.lower_width > 32) throw CorruptionError("neighbor list: lower width " + std::to_string(e.lower_width));
  const auto low = r.take(bytes_for(std::size_t{e.count} * e.lower_width));
  e.low_bits.assign(low.begin(), low.end());
  const auto high = r.take(r.remaining());
  e.high_bits.assign(high.begin(), high.end());
  e.high_bit_count = e.high_bits.size() * 8;
  return e;
}

std::vector<VectorId> ef_decode_serialized(ByteSpan data) {
  if (data.size() < EncodedNeighborList::kHeaderBytes) throw CorruptionError("neighbor list: short header");
  const std::size_t count = load_le<std::uint16_t>(data.data());
  const unsigned width = data[2];
  if (width > 32) throw CorruptionError("neighbor list: lower width " + std::to_string(width));
  const ByteSpan body = data.subspan(EncodedNeighborList::kHeaderBytes);
  const std::size_t low_bytes = bytes_for(count * width);
  if (low_bytes > body.size()) throw CorruptionError("neighbor list: truncated low bits");
  return decode_parts(body, count, width, 0, low_bytes * 8, body.size() * 8);
}

std::size_t ef_compact_entry_bytes(std::uint64_t max_count, std::uint64_t universe) {
  return 2 + static_cast<std::size_t>((ef_worst_case_bits(max_count, universe) + 7) / 8);
}

void ef_pack_compact(const EncodedNeighborList& enc, std::span<std::uint8_t> out) {
  if (enc.count > kCompactMaxCount || enc.lower_width > 31) throw UsageError("ef_pack_compact: list too large");
  const std::size_t low_len = std::size_t{enc.count} * enc.lower_width;
  if (2 + bytes_for(low_len + enc.high_bit_count) > out.size()) {
    throw UsageError("ef_pack_compact: entry exceeds fixed slot size");
  }
  std::fill(out.begin(), out.end(), 0);
  store_le(out.data(), static_cast<std::uint16_t>(enc.count | (std::uint32_t{enc.lower_width} << 11)));
  auto bits = out.subspan(2);
  for (std::size_t i = 0; i < low_len; ++i) {
    if (get_bit(enc.low_bits, i)) set_bit(bits, i);
  }
  for (std::size_t i = 0; i < enc.high_bit_count; ++i) {
    if (get_bit(enc.high_bits, i)) set_bit(bits, low_len + i);
  }
}

std::vector<VectorId> ef_decode_compact(ByteSpan entry) {
  if (entry.size() < 2) throw CorruptionError("compact neighbor list: short entry");
  const std::uint16_t prefix = load_le<std::uint16_t>(entry.data());
  const std::size_t count = prefix & kCompactMaxCount;
  const unsigned width = prefix >> 11;
  const ByteSpan bits = entry.subspan(2);
  return decode_parts(bits, count, width, 0, count * width, bits.size() * 8);
}

}  // namespace dvs
