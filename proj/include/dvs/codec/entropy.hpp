#pragma once

#include <array>
#include <span>

#include "dvs/common.hpp"

namespace dvs {

/// Byte histogram of a stream. Persisted as 256 little-endian u64 counts.
struct FrequencyTable {
  static constexpr std::size_t kSerializedBytes = 256 * 8;

  std::array<std::uint64_t, 256> counts{};

  std::uint64_t total() const;
  std::size_t distinct() const;

  void add(ByteSpan data);
  FrequencyTable& operator+=(const FrequencyTable& other);
  friend FrequencyTable operator+(FrequencyTable a, const FrequencyTable& b) { return a += b; }
  friend bool operator==(const FrequencyTable&, const FrequencyTable&) = default;

  void serialize(Bytes& out) const;
  static FrequencyTable deserialize(ByteSpan data);
};

FrequencyTable build_frequency_table(ByteSpan stream);

/// Shannon entropy (bits per symbol) of a histogram; 0·log0 = 0.
double entropy_of_counts(std::span<const std::uint64_t> counts);
double byte_entropy(ByteSpan data);

}  // namespace dvs
