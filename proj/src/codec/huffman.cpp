#include "dvs/codec/huffman.hpp"

#include <algorithm>
#include <queue>

namespace dvs {

namespace {

// MSB-first bit sink.
class MsbBitWriter {
 public:
  explicit MsbBitWriter(Bytes& out) : out_(out) {}

  void put(std::uint64_t code, unsigned len) {
    while (len > 0) {
      const unsigned take = std::min(len, 32u);
      const std::uint64_t part = (code >> (len - take)) & ((std::uint64_t{1} << take) - 1);
      acc_ = (acc_ << take) | part;
      acc_bits_ += take;
      len -= take;
      while (acc_bits_ >= 8) {
        acc_bits_ -= 8;
        out_.push_back(static_cast<std::uint8_t>(acc_ >> acc_bits_));
      }
    }
  }

  void flush() {
    if (acc_bits_ > 0) {
      out_.push_back(static_cast<std::uint8_t>(acc_ << (8 - acc_bits_)));
      acc_bits_ = 0;
    }
    acc_ = 0;
  }

 private:
  Bytes& out_;
  std::uint64_t acc_ = 0;
  unsigned acc_bits_ = 0;
};

inline unsigned bit_at(ByteSpan bits, std::size_t pos) { return (bits[pos >> 3] >> (7 - (pos & 7))) & 1u; }

// Next `n` (<= 16) bits starting at `pos`, zero-filled past the buffer end.
inline std::uint32_t peek_bits(ByteSpan bits, std::size_t pos, unsigned n) {
  const std::size_t byte = pos >> 3;
  std::uint32_t window = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    window = (window << 8) | (byte + i < bits.size() ? bits[byte + i] : 0u);
  }
  const unsigned shift = 24 - static_cast<unsigned>(pos & 7) - n;
  return (window >> shift) & ((1u << n) - 1);
}

}  // namespace

HuffmanTable HuffmanTable::build(const FrequencyTable& table) {
  struct Node {
    std::uint64_t weight;
    std::uint32_t order;  // deterministic tie-break: leaves by symbol, then creation order
    int left;
    int right;
  };
  std::vector<Node> nodes;
  for (std::uint32_t s = 0; s < 256; ++s) {
    if (table.counts[s] > 0) nodes.push_back({table.counts[s], s, -1, -1});
  }
  if (nodes.empty()) throw UsageError("huffman_build: all-zero frequency table");

  HuffmanTable h;
  if (nodes.size() == 1) {
    h.lengths_[nodes[0].order] = 1;
    h.assign_canonical_codes();
    return h;
  }

  const std::size_t leaves = nodes.size();
  auto cmp = [&nodes](int a, int b) {
    const auto& x = nodes[static_cast<std::size_t>(a)];
    const auto& y = nodes[static_cast<std::size_t>(b)];
    return x.weight > y.weight || (x.weight == y.weight && x.order > y.order);
  };
  std::priority_queue<int, std::vector<int>, decltype(cmp)> heap(cmp);
  for (std::size_t i = 0; i < leaves; ++i) heap.push(static_cast<int>(i));
  std::uint32_t next_order = 256;
  while (heap.size() > 1) {
    const int a = heap.top();
    heap.pop();
    const int b = heap.top();
    heap.pop();
    nodes.push_back({nodes[static_cast<std::size_t>(a)].weight + nodes[static_cast<std::size_t>(b)].weight,
                     next_order++, a, b});
    heap.push(static_cast<int>(nodes.size() - 1));
  }

  // Depth-first walk from the root to assign leaf depths.
  std::vector<std::pair<int, unsigned>> stack{{heap.top(), 0u}};
  while (!stack.empty()) {
    auto [idx, depth] = stack.back();
    stack.pop_back();
    const Node& n = nodes[static_cast<std::size_t>(idx)];
    if (n.left < 0) {
      if (depth > kMaxCodeLength) throw UsageError("huffman_build: code length exceeds 56 bits");
      h.lengths_[n.order] = static_cast<std::uint8_t>(depth);
      continue;
    }
    stack.push_back({n.left, depth + 1});
    stack.push_back({n.right, depth + 1});
  }
  h.assign_canonical_codes();
  return h;
}

void HuffmanTable::assign_canonical_codes() {
  max_length_ = 0;
  for (auto l : lengths_) max_length_ = std::max<unsigned>(max_length_, l);
  sorted_symbols_.clear();
  first_code_.fill(0);
  first_index_.fill(0);
  count_.fill(0);
  codes_.fill(0);

  std::uint64_t code = 0;
  for (unsigned len = 1; len <= max_length_; ++len) {
    first_code_[len] = code;
    first_index_[len] = static_cast<std::uint32_t>(sorted_symbols_.size());
    for (std::size_t s = 0; s < 256; ++s) {
      if (lengths_[s] != len) continue;
      codes_[s] = code++;
      sorted_symbols_.push_back(static_cast<std::uint8_t>(s));
      ++count_[len];
    }
    code <<= 1;
  }

  lookup_.assign(std::size_t{1} << kLookupBits, 0);
  for (std::size_t s = 0; s < 256; ++s) {
    const unsigned len = lengths_[s];
    if (len == 0 || len > kLookupBits) continue;
    const std::size_t prefix = codes_[s] << (kLookupBits - len);
    const std::size_t span = std::size_t{1} << (kLookupBits - len);
    for (std::size_t i = 0; i < span; ++i) {
      lookup_[prefix + i] = static_cast<std::uint16_t>(s | (len << 8));
    }
  }
}

std::size_t HuffmanTable::encoded_bits(ByteSpan data) const {
  std::size_t bits = 0;
  for (auto b : data) {
    if (lengths_[b] == 0) throw UsageError("huffman_encode: symbol " + std::to_string(b) + " has no code");
    bits += lengths_[b];
  }
  return bits;
}

std::size_t HuffmanTable::encode_into(ByteSpan data, Bytes& out) const {
  MsbBitWriter w(out);
  std::size_t bits = 0;
  for (auto b : data) {
    const unsigned len = lengths_[b];
    if (len == 0) throw UsageError("huffman_encode: symbol " + std::to_string(b) + " has no code");
    w.put(codes_[b], len);
    bits += len;
  }
  w.flush();
  return bits;
}

HuffmanBits HuffmanTable::encode(ByteSpan data) const {
  HuffmanBits r;
  r.bits.reserve(data.size());
  r.bit_count = encode_into(data, r.bits);
  return r;
}

void HuffmanTable::decode_into(ByteSpan bits, std::size_t bit_count, std::span<std::uint8_t> out) const {
  if (bit_count > bits.size() * 8) throw CorruptionError("huffman_decode: bit count exceeds buffer");
  std::size_t pos = 0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const std::uint16_t entry = lookup_[peek_bits(bits, pos, kLookupBits)];
    const unsigned fast_len = entry >> 8;
    if (fast_len != 0 && pos + fast_len <= bit_count) {
      out[i] = static_cast<std::uint8_t>(entry & 0xFF);
      pos += fast_len;
      continue;
    }
    std::uint64_t code = 0;
    bool found = false;
    for (unsigned len = 1; len <= max_length_; ++len) {
      if (pos + len > bit_count) break;
      code = (code << 1) | bit_at(bits, pos + len - 1);
      if (count_[len] != 0 && code >= first_code_[len] && code - first_code_[len] < count_[len]) {
        out[i] = sorted_symbols_[first_index_[len] + (code - first_code_[len])];
        pos += len;
        found = true;
        break;
      }
    }
    if (!found) {
      throw CorruptionError("huffman_decode: bit stream exhausted or invalid after " + std::to_string(i) + " of " +
                            std::to_string(out.size()) + " symbols");
    }
  }
}

Bytes HuffmanTable::decode(ByteSpan bits, std::size_t bit_count, std::size_t out_len) const {
  Bytes out(out_len);
  decode_into(bits, bit_count, out);
  return out;
}

HuffmanTable huffman_build(const FrequencyTable& table) { return HuffmanTable::build(table); }

HuffmanBits huffman_encode(ByteSpan data, const HuffmanTable& codes) { return codes.encode(data); }

Bytes huffman_decode(ByteSpan bits, std::size_t bit_count, const HuffmanTable& codes, std::size_t out_len) {
  return codes.decode(bits, bit_count, out_len);
}

}  // namespace dvs
