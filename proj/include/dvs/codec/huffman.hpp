#pragma once

#include <array>
#include <vector>

#include "dvs/codec/entropy.hpp"

namespace dvs {

struct HuffmanBits {
  Bytes bits;  // MSB-first, zero padded to a byte boundary
  std::size_t bit_count = 0;
};

/// Canonical Huffman code over byte symbols. Only code lengths are derived
/// from the frequency table; codes follow (length, symbol) order, so the
/// table is fully reconstructible from the persisted counts.
class HuffmanTable {
 public:
  static constexpr unsigned kMaxCodeLength = 56;

  static HuffmanTable build(const FrequencyTable& table);

  unsigned code_length(std::uint8_t symbol) const { return lengths_[symbol]; }
  std::uint64_t code(std::uint8_t symbol) const { return codes_[symbol]; }
  const std::array<std::uint8_t, 256>& lengths() const { return lengths_; }

  /// Exact encoded size of `data` in bits (throws if a symbol has no code).
  std::size_t encoded_bits(ByteSpan data) const;

  HuffmanBits encode(ByteSpan data) const;
  /// Appends the code for `data` to `out`, returning the number of bits.
  std::size_t encode_into(ByteSpan data, Bytes& out) const;
  Bytes decode(ByteSpan bits, std::size_t bit_count, std::size_t out_len) const;
  void decode_into(ByteSpan bits, std::size_t bit_count, std::span<std::uint8_t> out) const;

 private:
  static constexpr unsigned kLookupBits = 11;

  void assign_canonical_codes();

  std::array<std::uint8_t, 256> lengths_{};
  std::array<std::uint64_t, 256> codes_{};
  // Canonical decode state per length.
  std::array<std::uint64_t, kMaxCodeLength + 2> first_code_{};
  std::array<std::uint32_t, kMaxCodeLength + 2> first_index_{};
  std::array<std::uint32_t, kMaxCodeLength + 2> count_{};
  std::vector<std::uint8_t> sorted_symbols_;
  // Fast path: (symbol, length) for every kLookupBits-bit prefix; length 0
  // means the code is longer than the lookup width.
  std::vector<std::uint16_t> lookup_;
  unsigned max_length_ = 0;
};

HuffmanTable huffman_build(const FrequencyTable& table);
HuffmanBits huffman_encode(ByteSpan data, const HuffmanTable& codes);
Bytes huffman_decode(ByteSpan bits, std::size_t bit_count, const HuffmanTable& codes, std::size_t out_len);

}  // namespace dvs
