#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>

#include "dvs/codec/elias_fano.hpp"
#include "dvs/core/dataset.hpp"
#include "dvs/layout/block.hpp"
#include "dvs/layout/config.hpp"
#include "dvs/layout/graph_store.hpp"
#include "dvs/layout/segment.hpp"
#include "dvs/layout/vector_store.hpp"
#include "test_util.hpp"

namespace dvs {
namespace {

namespace fs = std::filesystem;

StoreConfig small_config(std::size_t dim, ElementType type, std::uint32_t capacity, std::uint32_t chunk) {
  StoreConfig c;
  c.dim = dim;
  c.element_type = type;
  c.segment_bytes = std::uint64_t{capacity} * dim * element_width(type);
  c.chunk_bytes = std::uint64_t{chunk} * dim * element_width(type);
  c.max_degree = 8;
  c.finalize();
  return c;
}

// ---- chunk budget ---------------------------------------------------------

TEST(ChunkBudget, ForwardFormulaAtDefaults) {
  EXPECT_NEAR(chunk_metadata_overhead(4.0 * 1024 * 1024, 1.0, 512), 524.0 / 4194304.0 + 1.0 / 1024.0, 1e-12);
  EXPECT_NEAR(chunk_metadata_overhead(4.0 * 1024 * 1024, 1.0, 512), 0.0011015, 1e-6);
}

TEST(ChunkBudget, InverseClosedForm) {
  const double exact = chunk_capacity_for_budget_exact(0.002, 1.0, 512);
  EXPECT_NEAR(exact, 524.0 / (0.002 - 1.0 / 1024.0), 1e-6);
  EXPECT_NEAR(exact, 512000.0, 500.0);
  const auto rounded = chunk_capacity_for_budget(0.002, 1.0, 512);
  EXPECT_EQ(rounded % 512, 0u);
  EXPECT_LE(static_cast<double>(rounded), exact);
  EXPECT_GT(static_cast<double>(rounded) + 512, exact);
  // Inverse consistency: the rounded chunk stays within budget.
  EXPECT_LE(chunk_metadata_overhead(static_cast<double>(rounded), 1.0, 512), 0.002 * 1.01);
}

TEST(ChunkBudget, FloorBudgetIsInfeasible) {
  EXPECT_THROW(chunk_capacity_for_budget(1.0 / 1024.0, 1.0, 512), InfeasibleError);
  EXPECT_THROW(chunk_capacity_for_budget(0.0001, 1.0, 512), InfeasibleError);
}

TEST(StoreConfigTest, JsonRoundTripAndValidation) {
  TempDir dir;
  StoreConfig c = small_config(16, ElementType::kUint8, 100, 10);
  c.beta = 0.005;
  c.save(dir.path());
  const StoreConfig back = StoreConfig::load(dir.path());
  EXPECT_EQ(back.to_json(), c.to_json());
  StoreConfig bad;
  bad.dim = 4051;
  bad.element_type = ElementType::kUint8;
  EXPECT_THROW(bad.finalize(), UsageError);
  EXPECT_THROW(StoreConfig::load(dir.path() / "nope"), FormatError);
}

// ---- blocks ---------------------------------------------------------------

TEST(Block, RoundTripWithFlags) {
  BlockBuilder b;
  const Bytes a{1, 2, 3}, empty{}, c(100, 7);
  ASSERT_TRUE(b.add(a));
  ASSERT_TRUE(b.add(empty, true));
  ASSERT_TRUE(b.add(c, true));
  const auto image = b.finish();
  const BlockView view(image, "t");
  ASSERT_EQ(view.count(), 3u);
  EXPECT_EQ(Bytes(view.entry(0).payload.begin(), view.entry(0).payload.end()), a);
  EXPECT_FALSE(view.entry(0).raw);
  EXPECT_TRUE(view.entry(1).payload.empty());
  EXPECT_TRUE(view.entry(1).raw);
  EXPECT_EQ(Bytes(view.entry(2).payload.begin(), view.entry(2).payload.end()), c);
  EXPECT_THROW(view.entry(3), CorruptionError);
}

TEST(Block, RejectsOverflowAndCorruptHeader) {
  BlockBuilder b;
  EXPECT_TRUE(b.add(Bytes(4092, 1)));
  EXPECT_FALSE(b.add(Bytes(1, 1)));
  auto image = b.finish();
  store_le(image.data(), std::uint16_t{3000});
  EXPECT_THROW(BlockView(image, "seg 3 block 9"), CorruptionError);
  try {
    BlockView(image, "seg 3 block 9");
  } catch (const CorruptionError& e) {
    EXPECT_NE(std::string(e.what()).find("seg 3 block 9"), std::string::npos);
  }
}

// ---- segment compression --------------------------------------------------

TEST(SegmentCodec, IdenticalVectorsPickDeltaAndShrink) {
  const std::size_t v = 64, n = 300;
  Bytes one(v);
  for (std::size_t i = 0; i < v; ++i) one[i] = static_cast<std::uint8_t>(i * 7 + 3);
  Bytes raw;
  for (std::size_t i = 0; i < n; ++i) raw.insert(raw.end(), one.begin(), one.end());
  const auto img = compress_segment(raw, v, 100, 0.1);
  ASSERT_EQ(img.chunks.size(), 3u);
  for (const auto& c : img.chunks) EXPECT_TRUE(c.use_delta);
  // Chunk alignment pads each chunk to a block, so compare encoded payloads.
  EXPECT_EQ(img.blocks.size(), 3 * kBlockSize);
  std::size_t payload = 0;
  for (std::size_t b = 0; b < 3; ++b) {
    const BlockView view(ByteSpan(img.blocks).subspan(b * kBlockSize, kBlockSize), "t");
    for (std::size_t s = 0; s < view.count(); ++s) payload += view.entry(s).payload.size();
  }
  EXPECT_LT(payload, raw.size() / 4);
  const HuffmanTable codes = HuffmanTable::build(img.frequencies);
  SegmentManifest m;
  m.state = SegmentState::kSealed;
  m.stored_count = n;
  m.capacity = n;
  m.vector_bytes = v;
  m.chunk_vectors = 100;
  m.chunks = img.chunks;
  Bytes out(v);
  for (std::uint32_t s = 0; s < n; ++s) {
    const auto at = locate_vector(m, s);
    const BlockView view(ByteSpan(img.blocks).subspan(at.block * kBlockSize, kBlockSize), "t");
    decode_vector(view.entry(at.slot), m.chunks[at.chunk], codes, out);
    ASSERT_EQ(out, one);
  }
}

TEST(SegmentCodec, RandomBytesAreStoredDense) {
  const std::size_t v = 128, n = 500;
  const Dataset d = generate_uniform(n, v, ElementType::kUint8, 5);
  const auto img = compress_segment(d.raw(), v, 100, 0.1);
  ASSERT_EQ(img.dense_chunks, 5u);
  // 100 vectors of 128 B fill 3.125 blocks, so each chunk takes 4.
  EXPECT_EQ(img.blocks.size(), 5 * 4 * kBlockSize);

  SegmentManifest m;
  m.state = SegmentState::kSealed;
  m.stored_count = n;
  m.capacity = n;
  m.vector_bytes = v;
  m.chunk_vectors = 100;
  m.chunks = img.chunks;
  const auto back = SegmentManifest::deserialize(m.serialize(), "t");
  for (std::uint32_t s = 0; s < n; ++s) {
    const auto at = locate_vector(back, s);
    ASSERT_TRUE(at.dense);
    const std::size_t off = std::size_t{at.block} * kBlockSize + at.offset;
    ASSERT_TRUE(std::equal(d[s].bytes.begin(), d[s].bytes.end(), img.blocks.begin() + off));
  }
}

TEST(SegmentCodec, DenseChunkWithWrongBlockCountIsRejected) {
  const std::size_t v = 128, n = 100;
  const Dataset d = generate_uniform(n, v, ElementType::kUint8, 6);
  const auto img = compress_segment(d.raw(), v, 100, 0.1);
  SegmentManifest m;
  m.state = SegmentState::kSealed;
  m.stored_count = n;
  m.capacity = n;
  m.vector_bytes = v;
  m.chunk_vectors = 100;
  m.chunks = img.chunks;
  ASSERT_TRUE(m.chunks[0].dense);
  m.chunks[0].boundary_ids.push_back(99);
  EXPECT_THROW(SegmentManifest::deserialize(m.serialize(), "t"), FormatError);
}

TEST(SegmentCodec, EveryChunkStartsOnAFreshBlock) {
  const Dataset d = generate_structured(1000, 32, ElementType::kUint8, 11);
  const auto img = compress_segment(d.raw(), 32, 128, 0.1);
  std::uint32_t expect = 0;
  for (std::size_t c = 0; c < img.chunks.size(); ++c) {
    EXPECT_EQ(img.chunks[c].first_block, expect);
    EXPECT_EQ(img.chunks[c].boundary_ids.front(), c * 128);
    EXPECT_TRUE(std::is_sorted(img.chunks[c].boundary_ids.begin(), img.chunks[c].boundary_ids.end()));
    expect += img.chunks[c].num_blocks();
  }
  EXPECT_EQ(img.blocks.size(), expect * kBlockSize);
}

TEST(SegmentCodec, LocateAtBlockBoundaries) {
  SegmentManifest m;
  m.state = SegmentState::kSealed;
  m.stored_count = 30;
  m.capacity = 30;
  m.vector_bytes = 4;
  m.chunk_vectors = 20;
  m.chunks.resize(2);
  m.chunks[0].first_block = 0;
  m.chunks[0].boundary_ids = {0, 7, 15};
  m.chunks[1].first_block = 3;
  m.chunks[1].boundary_ids = {20, 26};
  auto at = locate_vector(m, 7);
  EXPECT_EQ(at.block, 1u);
  EXPECT_EQ(at.slot, 0u);
  at = locate_vector(m, 14);
  EXPECT_EQ(at.block, 1u);
  EXPECT_EQ(at.slot, 7u);
  at = locate_vector(m, 27);
  EXPECT_EQ(at.chunk, 1u);
  EXPECT_EQ(at.block, 4u);
  EXPECT_EQ(at.slot, 1u);
  EXPECT_THROW(locate_vector(m, 30), NotFoundError);
}

TEST(SegmentCodec, ManifestSizeFormulaAndRoundTrip) {
  const Dataset d = generate_structured(700, 16, ElementType::kUint8, 3);
  const auto img = compress_segment(d.raw(), 16, 256, 0.1);
  SegmentManifest m;
  m.segment_id = 4;
  m.state = SegmentState::kSealed;
  m.capacity = 700;
  m.stored_count = 700;
  m.first_id = 2800;
  m.vector_bytes = 16;
  m.chunk_vectors = 256;
  m.frequencies = img.frequencies;
  m.chunks = img.chunks;
  const Bytes bytes = m.serialize();
  std::size_t expected = SegmentManifest::kHeaderBytes + 2048;
  for (const auto& c : m.chunks) expected += 4 * (c.num_blocks() + 3) + 16;
  EXPECT_EQ(bytes.size(), expected);
  const auto back = SegmentManifest::deserialize(bytes, "m");
  EXPECT_EQ(back.serialize(), bytes);
  EXPECT_EQ(back.first_id, 2800u);
  Bytes truncated(bytes.begin(), bytes.end() - 1);
  EXPECT_THROW(SegmentManifest::deserialize(truncated, "m"), FormatError);
}

// ---- vector store ---------------------------------------------------------

TEST(VectorStoreTest, AppendIdsAndSegmentRollover) {
  TempDir dir;
  const auto cfg = small_config(8, ElementType::kUint8, 10, 5);
  auto store = VectorStore::create(dir.path(), cfg, nullptr);
  Bytes v(8, 1);
  EXPECT_EQ(store->append(v), 0u);
  EXPECT_EQ(store->locate(0).segment, 0u);
  for (int i = 1; i < 10; ++i) store->append(v);
  // The capacity-th append seals segment 0; the next id lands in segment 1.
  EXPECT_EQ(store->segments().front().state, SegmentState::kSealed);
  EXPECT_EQ(store->append(v), 10u);
  EXPECT_EQ(store->locate(10).segment, 1u);
}

TEST(VectorStoreTest, LosslessBeforeAfterSealAndReopen) {
  TempDir dir;
  const auto cfg = small_config(32, ElementType::kUint8, 250, 64);
  const Dataset d = generate_structured(1000, 32, ElementType::kUint8, 9);
  {
    auto store = VectorStore::create(dir.path(), cfg, nullptr);
    for (std::size_t i = 0; i < 900; ++i) {
      const auto id = store->append(d[i].bytes);
      ASSERT_EQ(store->read(id), Bytes(d[i].bytes.begin(), d[i].bytes.end()));
    }
    for (std::size_t i = 0; i < 900; ++i) ASSERT_EQ(store->read(i), Bytes(d[i].bytes.begin(), d[i].bytes.end()));
    store->flush();
  }
  {
    IoCounters io;
    auto store = VectorStore::open(dir.path(), cfg, &io);
    EXPECT_EQ(store->next_id(), 900u);
    for (std::size_t i = 900; i < 1000; ++i) store->append(d[i].bytes);
    for (std::size_t i = 0; i < 1000; ++i) ASSERT_EQ(store->read(i), Bytes(d[i].bytes.begin(), d[i].bytes.end()));
  }
  auto store = VectorStore::open(dir.path(), cfg, nullptr);
  for (std::size_t i = 0; i < 1000; ++i) ASSERT_EQ(store->read(i), Bytes(d[i].bytes.begin(), d[i].bytes.end()));
  EXPECT_THROW(store->read(1000), NotFoundError);
}

TEST(VectorStoreTest, StartupReadsOnlyMetadata) {
  TempDir dir;
  const auto cfg = small_config(64, ElementType::kUint8, 500, 100);
  const Dataset d = generate_structured(2000, 64, ElementType::kUint8, 2);
  {
    auto store = VectorStore::create(dir.path(), cfg, nullptr);
    for (std::size_t i = 0; i < d.size(); ++i) store->append(d[i].bytes);
    store->seal_active();
  }
  IoCounters io;
  auto store = VectorStore::open(dir.path(), cfg, &io);
  EXPECT_EQ(io.vector_bytes_read.load(), 0u);
  EXPECT_GT(io.metadata_bytes_read.load(), 0u);
  EXPECT_LT(io.metadata_bytes_read.load(), 2 * store->metadata_bytes());
  // Reads now work without any prior scan: one block per sealed lookup.
  Bytes out(64);
  store->read_into(1234, out);
  EXPECT_EQ(io.vector_reads.load(), 1u);
  // A whole block, or only the vector when its chunk is dense.
  EXPECT_GE(io.vector_bytes_read.load(), 64u);
  EXPECT_LE(io.vector_bytes_read.load(), kBlockSize);
}

TEST(VectorStoreTest, MissingMetadataIsStartupError) {
  TempDir dir;
  const auto cfg = small_config(8, ElementType::kUint8, 10, 5);
  {
    auto store = VectorStore::create(dir.path(), cfg, nullptr);
    for (int i = 0; i < 15; ++i) store->append(Bytes(8, static_cast<std::uint8_t>(i)));
  }
  fs::remove(dir.path() / "segments" / "0.meta");
  try {
    VectorStore::open(dir.path(), cfg, nullptr);
    FAIL() << "expected startup error";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("0.meta"), std::string::npos);
  }
}

TEST(VectorStoreTest, InterruptedSealIsDiscardedOrRolledForward) {
  TempDir dir;
  const auto cfg = small_config(8, ElementType::kUint8, 10, 5);
  Dataset d = generate_structured(25, 8, ElementType::kUint8, 4);
  {
    auto store = VectorStore::create(dir.path(), cfg, nullptr);
    for (std::size_t i = 0; i < 25; ++i) store->append(d[i].bytes);
    store->flush();
  }
  const auto seg = dir.path() / "segments";
  // Uncommitted seal of the mutable segment 2: stray files are discarded.
  write_file_durable(seg / "2.data.sealed", Bytes(4096, 0));
  write_file_durable(seg / "2.meta.sealed", Bytes(10, 0));
  // Committed seal of segment 1 whose data rename did not happen yet.
  fs::rename(seg / "1.data", seg / "1.data.sealed");
  write_file_durable(seg / "1.data", Bytes(80, 0xEE));
  auto store = VectorStore::open(dir.path(), cfg, nullptr);
  EXPECT_FALSE(fs::exists(seg / "2.data.sealed"));
  EXPECT_FALSE(fs::exists(seg / "1.data.sealed"));
  for (std::size_t i = 0; i < 25; ++i) ASSERT_EQ(store->read(i), Bytes(d[i].bytes.begin(), d[i].bytes.end()));
}

TEST(VectorStoreTest, TornTailRecordIsDropped) {
  TempDir dir;
  const auto cfg = small_config(8, ElementType::kUint8, 10, 5);
  {
    auto store = VectorStore::create(dir.path(), cfg, nullptr);
    for (int i = 0; i < 3; ++i) store->append(Bytes(8, static_cast<std::uint8_t>(i)));
    store->flush();
  }
  {
    File f(dir.path() / "segments" / "0.data", File::Mode::kReadWrite, FileClass::kVector, nullptr);
    f.append(Bytes(5, 9));
  }
  auto store = VectorStore::open(dir.path(), cfg, nullptr);
  EXPECT_EQ(store->next_id(), 3u);
  EXPECT_EQ(store->append(Bytes(8, 4)), 3u);
  EXPECT_EQ(store->read(3), Bytes(8, 4));
}

TEST(VectorStoreTest, MetadataBudgetHolds) {
  for (double beta : {0.002, 0.005}) {
    TempDir dir;
    StoreConfig cfg;
    cfg.dim = 128;
    cfg.element_type = ElementType::kUint8;
    cfg.segment_bytes = 20000 * 128;
    cfg.beta = beta;
    cfg.finalize();
    const Dataset d = generate_structured(20000, 128, ElementType::kUint8, 8);
    auto store = VectorStore::create(dir.path(), cfg, nullptr);
    for (std::size_t i = 0; i < d.size(); ++i) store->append(d[i].bytes);
    std::uint64_t meta = 0;
    for (const auto& s : store->segments()) meta += s.chunk_metadata_bytes;
    EXPECT_LE(static_cast<double>(meta) / static_cast<double>(d.raw().size()), beta * 1.10) << beta;
  }
}

TEST(VectorStoreTest, CompactionRelocatesAndReclaims) {
  TempDir dir;
  const auto cfg = small_config(16, ElementType::kUint8, 100, 25);
  const Dataset d = generate_structured(400, 16, ElementType::kUint8, 6);
  std::set<VectorId> dead;
  for (VectorId i = 0; i < 100; ++i) dead.insert(i);        // segment 0 fully dead
  for (VectorId i = 100; i < 200; i += 2) dead.insert(i);   // segment 1 half dead
  std::uint64_t seg0_bytes = 0;
  {
    auto store = VectorStore::create(dir.path(), cfg, nullptr);
    for (std::size_t i = 0; i < d.size(); ++i) store->append(d[i].bytes);
    for (auto id : dead) store->mark_stale(id);
    EXPECT_DOUBLE_EQ(store->garbage_ratio(0), 1.0);
    EXPECT_DOUBLE_EQ(store->garbage_ratio(1), 0.5);
    EXPECT_DOUBLE_EQ(store->garbage_ratio(2), 0.0);
    seg0_bytes = store->segments().front().data_bytes;
    const auto only0 = store->compact({0}, [&](VectorId id) { return !dead.count(id); });
    EXPECT_EQ(only0.bytes_reclaimed, seg0_bytes);
    EXPECT_TRUE(only0.created_segments.empty());
    const auto r = store->compact({1}, [&](VectorId id) { return !dead.count(id); });
    EXPECT_EQ(r.created_segments.size(), 1u);
    EXPECT_EQ(r.dropped_ids.size(), 50u);
    for (VectorId i = 0; i < 400; ++i) {
      if (dead.count(i)) {
        EXPECT_THROW(store->read(i), NotFoundError);
      } else {
        ASSERT_EQ(store->read(i), Bytes(d[i].bytes.begin(), d[i].bytes.end()));
      }
    }
    EXPECT_NE(store->locate(101).segment, 1u);
  }
  auto store = VectorStore::open(dir.path(), cfg, nullptr);
  EXPECT_EQ(store->next_id(), 400u);
  for (VectorId i = 0; i < 400; ++i) {
    if (!dead.count(i)) ASSERT_EQ(store->read(i), Bytes(d[i].bytes.begin(), d[i].bytes.end()));
  }
  EXPECT_EQ(store->append(d[0].bytes), 400u);
}

TEST(VectorStoreTest, OrphanedSegmentsAreRemovedAtOpen) {
  TempDir dir;
  const auto cfg = small_config(16, ElementType::kUint8, 100, 25);
  const Dataset d = generate_structured(250, 16, ElementType::kUint8, 6);
  {
    auto store = VectorStore::create(dir.path(), cfg, nullptr);
    for (std::size_t i = 0; i < d.size(); ++i) store->append(d[i].bytes);
    store->compact({0}, [](VectorId) { return true; });
  }
  // Simulate a crash after the id map committed but before segment 0 was
  // deleted: restore its files from a copy made by a second identical store.
  TempDir twin;
  {
    auto store = VectorStore::create(twin.path(), cfg, nullptr);
    for (std::size_t i = 0; i < d.size(); ++i) store->append(d[i].bytes);
  }
  fs::copy_file(twin.path() / "segments" / "0.meta", dir.path() / "segments" / "0.meta");
  fs::copy_file(twin.path() / "segments" / "0.data", dir.path() / "segments" / "0.data");
  auto store = VectorStore::open(dir.path(), cfg, nullptr);
  EXPECT_FALSE(fs::exists(dir.path() / "segments" / "0.meta"));
  for (VectorId i = 0; i < 250; ++i) ASSERT_EQ(store->read(i), Bytes(d[i].bytes.begin(), d[i].bytes.end()));
}

// ---- graph store ----------------------------------------------------------

Adjacency random_graph(std::uint32_t n, std::uint32_t r, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Adjacency adj(n);
  for (std::uint32_t v = 0; v < n; ++v) {
    std::set<VectorId> s;
    while (s.size() < std::min(r, n - 1)) {
      const auto u = static_cast<VectorId>(rng() % n);
      if (u != v) s.insert(u);
    }
    adj[v].assign(s.begin(), s.end());
  }
  return adj;
}

TEST(GraphStoreTest, DegreeOneListsPackManyPerBlock) {
  TempDir dir;
  const auto adj = random_graph(5000, 1, 1);
  GraphStore::write(dir.path(), adj, 0, 1);
  auto g = GraphStore::open(dir.path(), nullptr);
  EXPECT_LT(g->logical_blocks(), 50u);
  for (std::size_t i = 1; i < g->sparse().size(); ++i) EXPECT_LT(g->sparse()[i - 1].boundary, g->sparse()[i].boundary);
  EXPECT_EQ(g->read_all(), adj);
}

TEST(GraphStoreTest, ExhaustiveRoundTripAndSizeBound) {
  TempDir dir;
  const std::uint32_t n = 3000, r = 32;
  const auto adj = random_graph(n, r, 2);
  GraphStore::write(dir.path(), adj, 17, r);
  IoCounters io;
  auto g = GraphStore::open(dir.path(), &io);
  EXPECT_EQ(g->entry_point(), 17u);
  for (VectorId v = 0; v < n; ++v) ASSERT_EQ(g->read_neighbor_list(v), adj[v]);
  for (const auto& e : g->sparse()) EXPECT_EQ(g->read_encoded(e.boundary), g->read_encoded(e.boundary));
  const std::size_t entry_bound = 3 + (ef_worst_case_bits(r, n) + 7) / 8 + 2 + 2;
  const std::size_t per_block = (kBlockSize - 2) / entry_bound;
  EXPECT_LE(g->logical_blocks(), (n + per_block - 1) / per_block);
  EXPECT_EQ(fs::file_size(dir.path() / "graph.data"), g->logical_blocks() * kBlockSize);
  EXPECT_THROW(g->read_neighbor_list(n), NotFoundError);
  EXPECT_EQ(io.graph_reads.load(), n + g->logical_blocks() * 2);
}

TEST(GraphStoreTest, RejectsOutOfRangeNeighbor) {
  TempDir dir;
  Adjacency adj{{1}, {2}};
  EXPECT_THROW(GraphStore::write(dir.path(), adj, 0, 2), UsageError);
}

TEST(GraphStoreTest, CopyOnWriteUpdateRewritesOnlyAffectedBlocks) {
  TempDir dir;
  const std::uint32_t n = 4000, r = 16;
  auto adj = random_graph(n, r, 3);
  GraphStore::write(dir.path(), adj, 0, r);
  auto g = GraphStore::open(dir.path(), nullptr);
  const auto before = g->read_all();
  std::map<VectorId, std::vector<VectorId>> changes;
  changes[5] = {1, 2, 3};
  changes[6] = {};
  changes[n] = {0, 5};
  changes[n + 1] = {n};
  GraphUpdateStats stats;
  auto g2 = g->apply_update(changes, n + 2, n, &stats);
  EXPECT_EQ(stats.affected_blocks, 1u);
  EXPECT_LE(stats.blocks_written, 3u);
  // Old snapshot still serves the old graph.
  EXPECT_EQ(g->read_all(), before);
  adj[5] = {1, 2, 3};
  adj[6] = {};
  adj.push_back({0, 5});
  adj.push_back({n});
  EXPECT_EQ(g2->read_all(), adj);
  auto reopened = GraphStore::open(dir.path(), nullptr);
  EXPECT_EQ(reopened->read_all(), adj);
  EXPECT_EQ(reopened->entry_point(), n);
  EXPECT_GT(reopened->garbage_ratio(), 0.0);

  auto g3 = reopened->compact();
  EXPECT_EQ(g3->garbage_ratio(), 0.0);
  EXPECT_EQ(g3->read_all(), adj);
  EXPECT_EQ(GraphStore::open(dir.path(), nullptr)->read_all(), adj);
}

TEST(GraphStoreTest, UncommittedAppendIsTruncated) {
  TempDir dir;
  const auto adj = random_graph(500, 8, 4);
  GraphStore::write(dir.path(), adj, 0, 8);
  const auto size = fs::file_size(dir.path() / "graph.data");
  {
    File f(dir.path() / "graph.data", File::Mode::kReadWrite, FileClass::kGraph, nullptr);
    f.append(Bytes(2 * kBlockSize, 0xAB));
  }
  write_file_durable(dir.path() / "graph.data.compact", Bytes(10, 0));
  auto g = GraphStore::open(dir.path(), nullptr);
  EXPECT_EQ(fs::file_size(dir.path() / "graph.data"), size);
  EXPECT_FALSE(fs::exists(dir.path() / "graph.data.compact"));
  EXPECT_EQ(g->read_all(), adj);
}

TEST(GraphStoreTest, FreedBlocksAreReusedAndReleased) {
  TempDir dir;
  const std::uint32_t n = 3000, r = 16;
  auto adj = random_graph(n, r, 5);
  GraphStore::write(dir.path(), adj, 0, r);
  auto g = GraphStore::open(dir.path(), nullptr);
  const std::uint32_t live = g->logical_blocks();

  // Rewriting every vertex twice: the second pass lands in the blocks the
  // first one freed, so the file stops growing.
  for (std::uint64_t round = 0; round < 2; ++round) {
    std::map<VectorId, std::vector<VectorId>> changes;
    const auto next = random_graph(n, r, 6 + round);
    for (VectorId v = 0; v < n; ++v) changes[v] = next[v];
    GraphUpdateStats stats;
    g = g->apply_update(changes, n, 0, &stats);
    EXPECT_EQ(stats.affected_blocks, live);
    g->release_unreferenced();
    adj = next;
    EXPECT_EQ(g->read_all(), adj);
  }
  EXPECT_LE(g->data_blocks(), 2 * live + 1);
  EXPECT_LE(disk_usage(dir.path() / "graph.data"), std::uint64_t{g->logical_blocks() + 1} * kBlockSize);
  EXPECT_EQ(GraphStore::open(dir.path(), nullptr)->read_all(), adj);
}

TEST(IdLocationMapTest, EachGroupKindRoundTrips) {
  IdLocationMap map;
  for (std::uint32_t slot = 0; slot < 100; ++slot) map.set(400 + slot, {3, slot});       // run
  for (std::uint32_t slot = 0; slot < 50; ++slot) map.set(7 * slot + 1, {9, slot});      // ascending with gaps
  map.set(1090, {11, 1});                                                                    // pairs
  map.set(1050, {11, 0});
  map.set(1051, {11, 2});
  const Bytes image = map.serialize(12);
  EXPECT_EQ(image.size(), 20u + 3 * 9 + 4 + 50 + 3 * 8);  // header, group heads, run, deltas, pairs

  IdLocationMap back;
  EXPECT_EQ(back.deserialize(image, "idmap"), 12u);
  ASSERT_EQ(back.size(), map.size());
  for (VectorId id = 0; id < map.size(); ++id) {
    EXPECT_EQ(back.get(id).segment, map.get(id).segment) << id;
    EXPECT_EQ(back.get(id).slot, map.get(id).slot) << id;
  }
  Bytes trailing = image;
  trailing.push_back(0);
  EXPECT_THROW(back.deserialize(trailing, "idmap"), FormatError);
}

}  // namespace
}  // namespace dvs
