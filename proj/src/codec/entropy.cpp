#include "dvs/codec/entropy.hpp"

#include <algorithm>
#include <cmath>

#include "dvs/codec/delta.hpp"

namespace dvs {

std::uint64_t FrequencyTable::total() const {
  std::uint64_t t = 0;
  for (auto c : counts) t += c;
  return t;
}

std::size_t FrequencyTable::distinct() const {
  std::size_t d = 0;
  for (auto c : counts) d += c != 0;
  return d;
}

void FrequencyTable::add(ByteSpan data) {
  for (auto b : data) ++counts[b];
}

FrequencyTable& FrequencyTable::operator+=(const FrequencyTable& other) {
  for (std::size_t i = 0; i < 256; ++i) counts[i] += other.counts[i];
  return *this;
}

void FrequencyTable::serialize(Bytes& out) const {
  for (auto c : counts) put_le(out, c);
}

FrequencyTable FrequencyTable::deserialize(ByteSpan data) {
  if (data.size() < kSerializedBytes) throw FormatError("frequency table: need 2048 bytes");
  FrequencyTable t;
  for (std::size_t i = 0; i < 256; ++i) t.counts[i] = load_le<std::uint64_t>(data.data() + 8 * i);
  return t;
}

FrequencyTable build_frequency_table(ByteSpan stream) {
  if (stream.empty()) throw UsageError("build_frequency_table: empty stream");
  FrequencyTable t;
  t.add(stream);
  return t;
}

double entropy_of_counts(std::span<const std::uint64_t> counts) {
  double total = 0.0;
  for (auto c : counts) total += static_cast<double>(c);
  if (total == 0.0) return 0.0;
  double h = 0.0;
  for (auto c : counts) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / total;
    h -= p * std::log2(p);
  }
  return h;
}

double byte_entropy(ByteSpan data) {
  std::array<std::uint64_t, 256> counts{};
  for (auto b : data) ++counts[b];
  return entropy_of_counts(counts);
}

// ---- delta transform -------------------------------------------------------

Bytes build_base_vector(ByteSpan concatenated, std::size_t width) {
  if (width == 0 || concatenated.empty() || concatenated.size() % width != 0) {
    throw UsageError("build_base_vector: need a nonempty list of equal-length vectors");
  }
  const std::size_t n = concatenated.size() / width;
  std::vector<std::array<std::uint32_t, 256>> hist(width);
  for (auto& h : hist) h.fill(0);
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint8_t* p = concatenated.data() + i * width;
    for (std::size_t j = 0; j < width; ++j) ++hist[j][p[j]];
  }
  Bytes base(width);
  for (std::size_t j = 0; j < width; ++j) {
    std::size_t best = 0;
    for (std::size_t s = 1; s < 256; ++s) {
      if (hist[j][s] > hist[j][best]) best = s;
    }
    base[j] = static_cast<std::uint8_t>(best);
  }
  return base;
}

Bytes build_base_vector(std::span<const ByteSpan> vectors) {
  if (vectors.empty()) throw UsageError("build_base_vector: empty list");
  const std::size_t width = vectors.front().size();
  Bytes flat;
  flat.reserve(width * vectors.size());
  for (const auto& v : vectors) {
    if (v.size() != width) throw UsageError("build_base_vector: vectors differ in length");
    flat.insert(flat.end(), v.begin(), v.end());
  }
  return build_base_vector(flat, width);
}

void xor_in_place(std::span<std::uint8_t> data, ByteSpan base) {
  if (data.size() != base.size()) throw UsageError("xor_transform: length mismatch");
  for (std::size_t i = 0; i < data.size(); ++i) data[i] ^= base[i];
}

Bytes xor_transform(ByteSpan data, ByteSpan base) {
  Bytes out(data.begin(), data.end());
  xor_in_place(out, base);
  return out;
}

ChunkTransform choose_chunk_transform(ByteSpan concatenated, std::size_t width, double sample_fraction) {
  if (width == 0 || concatenated.empty() || concatenated.size() % width != 0) {
    throw UsageError("choose_chunk_transform: empty or ragged chunk");
  }
  if (!(sample_fraction > 0.0 && sample_fraction <= 1.0)) {
    throw UsageError("choose_chunk_transform: sample fraction must be in (0, 1]");
  }
  const std::size_t n = concatenated.size() / width;
  auto sampled = static_cast<std::size_t>(std::ceil(sample_fraction * static_cast<double>(n)));
  sampled = std::clamp<std::size_t>(sampled, 1, n);
  const ByteSpan sample = concatenated.first(sampled * width);

  Bytes base = build_base_vector(sample, width);
  Bytes delta(sample.begin(), sample.end());
  for (std::size_t i = 0; i < sampled; ++i) {
    xor_in_place(std::span<std::uint8_t>(delta).subspan(i * width, width), base);
  }
  if (byte_entropy(delta) < byte_entropy(sample)) return {true, std::move(base)};
  return {false, std::nullopt};
}

ChunkTransform choose_chunk_transform(std::span<const ByteSpan> vectors, double sample_fraction) {
  if (vectors.empty()) throw UsageError("choose_chunk_transform: empty chunk");
  const std::size_t width = vectors.front().size();
  Bytes flat;
  for (const auto& v : vectors) {
    if (v.size() != width) throw UsageError("choose_chunk_transform: vectors differ in length");
    flat.insert(flat.end(), v.begin(), v.end());
  }
  return choose_chunk_transform(flat, width, sample_fraction);
}

}  // namespace dvs
