#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include "dvs/codec/delta.hpp"
#include "dvs/codec/elias_fano.hpp"
#include "dvs/codec/entropy.hpp"
#include "dvs/codec/huffman.hpp"

namespace dvs {
namespace {

Bytes str(std::string_view s) { return Bytes(s.begin(), s.end()); }

// Textbook Huffman: repeatedly merge the two lightest groups and deepen every
// symbol inside them. Independent of the production tree walk.
std::map<std::uint8_t, unsigned> textbook_lengths(const std::map<std::uint8_t, std::uint64_t>& counts) {
  std::vector<std::pair<std::uint64_t, std::vector<std::uint8_t>>> groups;
  for (auto [s, c] : counts) groups.push_back({c, {s}});
  std::map<std::uint8_t, unsigned> depth;
  for (auto [s, c] : counts) depth[s] = 0;
  while (groups.size() > 1) {
    std::sort(groups.begin(), groups.end());
    auto a = groups[0], b = groups[1];
    groups.erase(groups.begin(), groups.begin() + 2);
    for (auto s : a.second) ++depth[s];
    for (auto s : b.second) ++depth[s];
    a.second.insert(a.second.end(), b.second.begin(), b.second.end());
    groups.push_back({a.first + b.first, a.second});
  }
  return depth;
}

TEST(BaseVector, MostFrequentBytePerPosition) {
  const Bytes same{4, 5, 6};
  std::vector<ByteSpan> identical{same, same, same};
  EXPECT_EQ(build_base_vector(identical), same);

  const Bytes a{1, 2}, b{1, 3}, c{9, 2};
  std::vector<ByteSpan> mixed{a, b, c};
  EXPECT_EQ(build_base_vector(mixed), (Bytes{1, 2}));

  const Bytes z{0}, o{1};
  std::vector<ByteSpan> tie{z, o};
  EXPECT_EQ(build_base_vector(tie), Bytes{0});

  EXPECT_THROW(build_base_vector(std::vector<ByteSpan>{}), UsageError);
}

TEST(XorTransform, IsAnInvolution) {
  std::mt19937 rng(1);
  Bytes x(64), base(64);
  for (auto& v : x) v = static_cast<std::uint8_t>(rng());
  for (auto& v : base) v = static_cast<std::uint8_t>(rng());
  EXPECT_EQ(xor_transform(x, x), Bytes(64, 0));
  EXPECT_EQ(xor_transform(x, Bytes(64, 0)), x);
  EXPECT_EQ(xor_transform(xor_transform(x, base), base), x);
  EXPECT_THROW(xor_transform(x, Bytes(3)), UsageError);
}

TEST(ByteEntropy, Examples) {
  EXPECT_EQ(byte_entropy({}), 0.0);
  EXPECT_EQ(byte_entropy(Bytes(100, 7)), 0.0);
  EXPECT_DOUBLE_EQ(byte_entropy(str("abab")), 1.0);
  Bytes all(256);
  for (int i = 0; i < 256; ++i) all[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(i);
  EXPECT_DOUBLE_EQ(byte_entropy(all), 8.0);
}

TEST(ChunkTransform, DecisionRule) {
  Bytes identical;
  for (int i = 0; i < 50; ++i) identical.insert(identical.end(), {3, 1, 4, 1, 5, 9, 2, 6});
  auto t = choose_chunk_transform(identical, 8);
  EXPECT_TRUE(t.use_delta);
  ASSERT_TRUE(t.base.has_value());
  EXPECT_EQ(*t.base, (Bytes{3, 1, 4, 1, 5, 9, 2, 6}));

  t = choose_chunk_transform(Bytes(400, 0), 8);
  EXPECT_FALSE(t.use_delta);
  EXPECT_FALSE(t.base.has_value());

  std::mt19937 rng(3);
  Bytes random(64 * 1000);
  for (auto& v : random) v = static_cast<std::uint8_t>(rng());
  // Measured oracle: XOR maps each column's mode to 0, which concentrates
  // the zero symbol, so even random samples show a small entropy drop and the
  // strict rule picks the delta form. The decision must follow the measurement.
  const ByteSpan sample = ByteSpan(random).first(64 * 100);
  Bytes delta(sample.begin(), sample.end());
  const Bytes base = build_base_vector(sample, 64);
  for (std::size_t i = 0; i < 100; ++i) xor_in_place(std::span<std::uint8_t>(delta).subspan(i * 64, 64), base);
  const double raw_h = byte_entropy(sample);
  const double delta_h = byte_entropy(delta);
  EXPECT_NEAR(delta_h, raw_h, 0.1);
  const auto chosen = choose_chunk_transform(random, 64);
  EXPECT_EQ(chosen.use_delta, delta_h < raw_h);
  if (chosen.use_delta) EXPECT_EQ(*chosen.base, base);
}

TEST(FrequencyTable, CountsAndAdditivity) {
  const auto t = build_frequency_table(str("aaab"));
  EXPECT_EQ(t.counts['a'], 3u);
  EXPECT_EQ(t.counts['b'], 1u);
  EXPECT_EQ(t.total(), 4u);
  EXPECT_EQ(build_frequency_table(str("z")).distinct(), 1u);
  EXPECT_EQ(build_frequency_table(str("hello world")),
            build_frequency_table(str("hello")) + build_frequency_table(str(" world")));
  EXPECT_THROW(build_frequency_table({}), UsageError);

  Bytes ser;
  t.serialize(ser);
  EXPECT_EQ(ser.size(), 2048u);
  EXPECT_EQ(FrequencyTable::deserialize(ser), t);
}

TEST(Huffman, CodeLengths) {
  EXPECT_EQ(huffman_build(build_frequency_table(str("q"))).code_length('q'), 1u);
  const auto two = huffman_build(build_frequency_table(str("xyyy")));
  EXPECT_EQ(two.code_length('x'), 1u);
  EXPECT_EQ(two.code_length('y'), 1u);

  FrequencyTable t;
  t.counts['a'] = 5;
  t.counts['b'] = 2;
  t.counts['c'] = 1;
  t.counts['d'] = 1;
  const auto oracle = textbook_lengths({{'a', 5}, {'b', 2}, {'c', 1}, {'d', 1}});
  ASSERT_EQ(oracle, (std::map<std::uint8_t, unsigned>{{'a', 1}, {'b', 2}, {'c', 3}, {'d', 3}}));
  const auto h = huffman_build(t);
  for (auto [s, len] : oracle) EXPECT_EQ(h.code_length(s), len) << s;
  EXPECT_THROW(huffman_build(FrequencyTable{}), UsageError);
}

TEST(Huffman, CanonicalAndReconstructible) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    FrequencyTable t;
    const int symbols = 1 + static_cast<int>(rng() % 256);
    for (int i = 0; i < symbols; ++i) t.counts[rng() % 256] += 1 + rng() % 1000;
    const auto a = huffman_build(t);
    const auto b = huffman_build(FrequencyTable::deserialize([&] {
      Bytes s;
      t.serialize(s);
      return s;
    }()));
    double kraft = 0.0;
    std::vector<std::pair<unsigned, int>> order;
    for (int s = 0; s < 256; ++s) {
      EXPECT_EQ(a.code_length(static_cast<std::uint8_t>(s)), b.code_length(static_cast<std::uint8_t>(s)));
      EXPECT_EQ(a.code(static_cast<std::uint8_t>(s)), b.code(static_cast<std::uint8_t>(s)));
      const unsigned len = a.code_length(static_cast<std::uint8_t>(s));
      EXPECT_EQ(len == 0, t.counts[static_cast<std::size_t>(s)] == 0);
      if (len > 0) {
        kraft += std::ldexp(1.0, -static_cast<int>(len));
        order.push_back({len, s});
      }
    }
    EXPECT_LE(kraft, 1.0 + 1e-12);
    // Canonical: codes increase in (length, symbol) order once aligned.
    std::sort(order.begin(), order.end());
    for (std::size_t i = 1; i < order.size(); ++i) {
      const auto [l0, s0] = order[i - 1];
      const auto [l1, s1] = order[i];
      EXPECT_LE((a.code(static_cast<std::uint8_t>(s0)) + 1) << (l1 - l0), a.code(static_cast<std::uint8_t>(s1)));
    }
  }
}

TEST(Huffman, RoundTrips) {
  const auto single = huffman_build(build_frequency_table(str("a")));
  const auto enc = huffman_encode(str("aaaa"), single);
  EXPECT_EQ(enc.bit_count, 4u);
  EXPECT_EQ(huffman_decode(enc.bits, enc.bit_count, single, 4), str("aaaa"));

  const auto empty = huffman_encode({}, single);
  EXPECT_EQ(empty.bit_count, 0u);
  EXPECT_TRUE(huffman_decode(empty.bits, 0, single, 0).empty());

  std::mt19937_64 rng(42);
  Bytes data(10000);
  for (auto& b : data) b = static_cast<std::uint8_t>(rng());
  const auto table = huffman_build(build_frequency_table(data));
  const auto bits = huffman_encode(data, table);
  EXPECT_EQ(huffman_decode(bits.bits, bits.bit_count, table, data.size()), data);
}

TEST(Huffman, SkewedDataNearEntropy) {
  std::mt19937_64 rng(5);
  std::geometric_distribution<int> geo(0.3);
  Bytes data(50000);
  for (auto& b : data) b = static_cast<std::uint8_t>(std::min(geo(rng), 255));
  const auto table = huffman_build(build_frequency_table(data));
  const auto bits = huffman_encode(data, table);
  EXPECT_LE(static_cast<double>(bits.bit_count), (byte_entropy(data) + 1.0) * static_cast<double>(data.size()));
  EXPECT_EQ(huffman_decode(bits.bits, bits.bit_count, table, data.size()), data);
}

TEST(Huffman, Errors) {
  const auto table = huffman_build(build_frequency_table(str("ab")));
  EXPECT_THROW(huffman_encode(str("abc"), table), UsageError);
  const auto bits = huffman_encode(str("abab"), table);
  EXPECT_THROW(huffman_decode(bits.bits, bits.bit_count, table, 5), CorruptionError);
  const auto single = huffman_build(build_frequency_table(str("a")));
  // A 1 bit is not a codeword of the single-symbol code.
  EXPECT_THROW(huffman_decode(Bytes{0xFF}, 8, single, 1), CorruptionError);
}

TEST(EliasFano, WorstCaseBound) {
  EXPECT_EQ(ef_worst_case_bits(1, 2), 3u);
  EXPECT_EQ(ef_worst_case_bits(64, 64), 128u);
  // ⌈log2(1e9 / 128)⌉ = ⌈log2 7812500⌉ = 23 -> 2·128 + 128·23
  EXPECT_EQ(ef_worst_case_bits(128, 1'000'000'000), 3200u);
  EXPECT_THROW(ef_worst_case_bits(0, 10), UsageError);
  EXPECT_THROW(ef_worst_case_bits(11, 10), UsageError);
}

TEST(EliasFano, SmallCases) {
  const std::vector<VectorId> one{0};
  EXPECT_EQ(ef_decode(ef_encode(one, 2)), one);

  std::vector<VectorId> dense(100);
  std::iota(dense.begin(), dense.end(), 0);
  const auto enc = ef_encode(dense, 100);
  EXPECT_EQ(enc.lower_width, 0u);
  EXPECT_EQ(ef_decode(enc), dense);

  const std::vector<VectorId> dup{3, 3, 7};
  EXPECT_EQ(ef_decode(ef_encode(dup, 8)), dup);

  EXPECT_THROW(ef_encode(std::vector<VectorId>{5}, 5), UsageError);
  EXPECT_THROW(ef_encode(std::vector<VectorId>{4, 2}, 10), UsageError);
  EXPECT_THROW(ef_encode(std::vector<VectorId>{}, 10), UsageError);
}

TEST(EliasFano, RandomListsRoundTripWithinBound) {
  std::mt19937_64 rng(2024);
  constexpr std::uint64_t kUniverse = 1'000'000;
  for (int trial = 0; trial < 1000; ++trial) {
    std::set<VectorId> s;
    while (s.size() < 128) s.insert(static_cast<VectorId>(rng() % kUniverse));
    const std::vector<VectorId> ids(s.begin(), s.end());
    const auto enc = ef_encode(ids, kUniverse);
    ASSERT_EQ(ef_decode(enc), ids);
    ASSERT_LE(enc.payload_bits(), ef_worst_case_bits(128, kUniverse));

    Bytes ser;
    enc.serialize(ser);
    ASSERT_EQ(ser.size(), enc.serialized_size());
    ASSERT_EQ(ef_decode_serialized(ser), ids);

    Bytes slot(ef_compact_entry_bytes(128, kUniverse));
    ef_pack_compact(enc, slot);
    ASSERT_EQ(ef_decode_compact(slot), ids);
  }
}

TEST(EliasFano, SortingPreservesNeighborSet) {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<VectorId> ids;
    std::set<VectorId> uniq;
    while (uniq.size() < 1 + rng() % 60) uniq.insert(static_cast<VectorId>(rng() % 5000));
    ids.assign(uniq.begin(), uniq.end());
    std::shuffle(ids.begin(), ids.end(), rng);
    std::vector<VectorId> sorted = ids;
    std::sort(sorted.begin(), sorted.end());
    const auto decoded = ef_decode(ef_encode(sorted, 5000));
    EXPECT_EQ(std::set<VectorId>(decoded.begin(), decoded.end()), std::set<VectorId>(ids.begin(), ids.end()));
  }
}

}  // namespace
}  // namespace dvs
