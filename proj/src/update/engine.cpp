#include "dvs/update/engine.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <chrono>
#include <random>
#include <set>
#include <shared_mutex>

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

namespace dvs {

namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

constexpr const char* kCodebookFile = "pq.codebook";
constexpr const char* kCodesFile = "pq.codes";

}  // namespace

nlohmann::json MergeStats::to_json() const {
  return {{"load_seconds", load_seconds},
          {"merge_delete_seconds", merge_delete_seconds},
          {"merge_insert_seconds", merge_insert_seconds},
          {"gc_seconds", gc_seconds},
          {"inserted", inserted},
          {"deleted", deleted},
          {"vertices_rewritten", vertices_rewritten},
          {"graph_blocks_rewritten", graph_blocks_rewritten},
          {"graph_bytes_written", graph_bytes_written},
          {"graph_compacted", graph_compacted},
          {"vector_bytes_written", vector_bytes_written},
          {"gc_bytes_reclaimed", gc_bytes_reclaimed}};
}

nlohmann::json StorageBreakdown::to_json() const {
  return {{"vector_segment_bytes", vector_segment_bytes},
          {"chunk_metadata_bytes", chunk_metadata_bytes},
          {"idmap_bytes", idmap_bytes},
          {"graph_data_bytes", graph_data_bytes},
          {"graph_sparse_bytes", graph_sparse_bytes},
          {"pq_codebook_bytes", pq_codebook_bytes},
          {"pq_codes_bytes", pq_codes_bytes},
          {"tombstone_bytes", tombstone_bytes},
          {"config_bytes", config_bytes},
          {"other_bytes", other_bytes},
          {"total_bytes", total_bytes},
          {"directory_bytes", directory_bytes},
          {"vector_count", vector_count},
          {"colocated_entry_bytes", colocated_entry_bytes},
          {"colocated_padded_entry_bytes", colocated_padded_entry_bytes},
          {"colocated_bytes", colocated_bytes},
          {"fragmentation_reclaimed", fragmentation_reclaimed}};
}

double colocated_padded_entry(std::uint64_t vector_bytes, std::uint32_t max_degree) {
  const std::uint64_t entry = vector_bytes + 4ull * (max_degree + 1);
  if (entry > kBlockSize) return static_cast<double>((entry + kBlockSize - 1) / kBlockSize * kBlockSize);
  return static_cast<double>(kBlockSize) / static_cast<double>(kBlockSize / entry);
}

Engine::Engine(fs::path dir, StoreConfig config, EngineOptions options)
    : dir_(std::move(dir)),
      config_(std::move(config)),
      options_(std::move(options)),
      counters_(std::make_unique<IoCounters>()),
      mem_(config_.dim, BuildParams{config_.max_degree, config_.build_list, config_.prune_alpha, config_.seed}) {}

Engine::~Engine() {
  try {
    if (vectors_) vectors_->flush();
  } catch (...) {
  }
  if (lock_fd_ >= 0) ::close(lock_fd_);  // releases the flock
}

std::unique_ptr<Engine> Engine::build(const fs::path& dir, const Dataset& data, StoreConfig config,
                                      EngineOptions options) {
  if (fs::exists(dir) && !fs::is_empty(dir)) throw UsageError("refusing to build into non-empty " + dir.string());
  if (data.empty()) throw UsageError("build: empty dataset");
  config.dim = data.dim();
  config.element_type = data.type();
  config.finalize();
  fs::create_directories(dir);

  IoCounters counters;
  {
    auto store = VectorStore::create(dir, config, &counters);
    for (std::size_t i = 0; i < data.size(); ++i) store->append(data[i].bytes);
    store->seal_active();
    store->flush();
  }

  const std::size_t n = data.size(), dim = data.dim();
  const auto rows = data.to_float_matrix();
  const BuildParams params{config.max_degree, config.build_list, config.prune_alpha, config.seed};
  auto graph = build_graph(VectorTable{rows.data(), dim, n}, params);
  for (auto& list : graph.adjacency) std::sort(list.begin(), list.end());
  GraphStore::write(dir, graph.adjacency, graph.entry_point, config.max_degree, &counters);

  std::vector<float> sample;
  if (n <= config.pq_train_sample) {
    sample = rows;
  } else {
    std::vector<std::size_t> all(n), pick;
    std::iota(all.begin(), all.end(), std::size_t{0});
    std::mt19937_64 rng(config.seed);
    std::sample(all.begin(), all.end(), std::back_inserter(pick), config.pq_train_sample, rng);
    sample.reserve(pick.size() * dim);
    for (auto i : pick) sample.insert(sample.end(), rows.begin() + i * dim, rows.begin() + (i + 1) * dim);
  }
  const auto codebook = train_pq(sample, dim, config.resolved_pq_subspaces(), config.seed);
  write_file_atomic(dir / kCodebookFile, codebook.serialize(), &counters);
  {
    Bytes codes(4, 0);  // empty packed prefix, then one dense code per id
    const Bytes dense = pq_encode_all(rows, codebook);
    codes.insert(codes.end(), dense.begin(), dense.end());
    write_file_atomic(dir / kCodesFile, codes, &counters);
  }
  TombstoneSet::open(dir, &counters);

  // store.json last: a directory without it is not a store.
  config.entry_point = graph.entry_point;
  config.save(dir);
  return open(dir, std::move(options));
}

std::unique_ptr<Engine> Engine::open(const fs::path& dir, EngineOptions options) {
  if (!fs::exists(dir / "store.json")) throw NotFoundError("no store at " + dir.string());
  auto config = StoreConfig::load(dir);
  std::unique_ptr<Engine> engine(new Engine(dir, std::move(config), std::move(options)));
  engine->load();
  return engine;
}

void Engine::load() {
  lock_fd_ = ::open((dir_ / "LOCK").c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
  if (lock_fd_ < 0) throw IoError("cannot create " + (dir_ / "LOCK").string());
  if (::flock(lock_fd_, LOCK_EX | LOCK_NB) != 0) throw UsageError("store " + dir_.string() + " is open elsewhere");
  vectors_ = VectorStore::open(dir_, config_, counters_.get());
  graph_ = GraphStore::open(dir_, counters_.get());
  graph_->release_unreferenced();
  codebook_ = PQCodebook::deserialize(read_whole_file(dir_ / kCodebookFile, FileClass::kMetadata, counters_.get()),
                                      kCodebookFile);
  if (codebook_.dim != config_.dim) throw CorruptionError("PQ codebook dimension does not match the store");
  tombstones_ = TombstoneSet::open(dir_, counters_.get());
  // Segment garbage counts live in memory only; rebuild them from the log.
  for (auto id : tombstones_.ids()) {
    if (vectors_->contains(id)) vectors_->mark_stale(id);
  }

  const std::size_t m = codebook_.subspaces;
  const VectorId next = vectors_->next_id();
  codes_file_ = std::make_unique<File>(dir_ / kCodesFile, File::Mode::kReadWrite, FileClass::kMetadata, counters_.get());
  std::uint64_t have = load_codes(next);
  if (have < graph_->num_vertices()) throw CorruptionError("PQ codes do not cover the graph");
  // Codes lost with an unsynced tail are recomputed from the vectors.
  for (VectorId id = static_cast<VectorId>(have); id < next; ++id) {
    std::vector<std::uint8_t> code(m, 0);
    if (vectors_->contains(id)) pq_encode(to_floats(vectors_->read(id)), codebook_, code);
    append_code(code);
  }

  // Vectors appended after the last merge go back into the insert buffer.
  for (VectorId id = graph_->num_vertices(); id < next; ++id) {
    if (!vectors_->contains(id)) continue;
    mem_.insert(id, to_floats(vectors_->read(id)));
  }
  // Without a record of which deletes were merged, every tombstone counts
  // as pending; re-consolidating a merged one is a no-op.
  pending_deletes_ = tombstones_.ids();
  reset_cache(graph_->num_vertices());
}

// pq.codes: u32 `covered`, a bitmap over ids [0, covered), the codes of the
// set ids in id order, then one dense code per id from `covered` on. Ids
// outside the bitmap hold zero codes in memory; nothing reads them.
std::uint64_t Engine::load_codes(VectorId next) {
  const std::size_t m = codebook_.subspaces;
  const std::uint64_t size = codes_file_->size();
  std::array<std::uint8_t, 4> head{};
  if (size < head.size()) throw CorruptionError("pq.codes: truncated header");
  codes_file_->read_exact(0, head);
  const std::uint32_t covered = load_le<std::uint32_t>(head.data());
  const std::uint64_t bitmap_bytes = (std::uint64_t{covered} + 7) / 8;
  Bytes bitmap(bitmap_bytes);
  if (size < 4 + bitmap_bytes || covered > next) throw CorruptionError("pq.codes: bad packed prefix");
  codes_file_->read_exact(4, bitmap);
  std::uint64_t packed = 0;
  for (auto b : bitmap) packed += static_cast<unsigned>(std::popcount(b));
  const std::uint64_t dense_at = 4 + bitmap_bytes + packed * m;
  if (size < dense_at) throw CorruptionError("pq.codes: packed codes truncated");

  codes_.assign(std::size_t{covered} * m, 0);
  Bytes buf(packed * m);
  codes_file_->read_exact(4 + bitmap_bytes, buf);
  std::size_t k = 0;
  for (VectorId id = 0; id < covered; ++id) {
    if (bitmap[id / 8] >> (id % 8) & 1) {
      std::copy_n(buf.begin() + k++ * m, m, codes_.begin() + std::size_t{id} * m);
    }
  }
  const std::uint64_t have = std::min<std::uint64_t>(covered + (size - dense_at) / m, next);
  const std::uint64_t end = dense_at + (have - covered) * m;
  if (size != end) codes_file_->truncate(end);
  codes_.resize(have * m);
  if (have > covered) {
    codes_file_->read_exact(dense_at, std::span<std::uint8_t>(codes_).subspan(std::size_t{covered} * m));
  }
  return have;
}

void Engine::pack_codes(const std::set<VectorId>& keep) {
  const std::size_t m = codebook_.subspaces;
  const auto covered = static_cast<std::uint32_t>(codes_.size() / m);
  Bytes out(4 + (std::size_t{covered} + 7) / 8, 0);
  store_le<std::uint32_t>(out.data(), covered);
  for (VectorId id = 0; id < covered; ++id) {
    const bool live = vectors_->contains(id) && !tombstones_.contains(id);
    if (!live && !keep.count(id)) continue;
    out[4 + id / 8] |= static_cast<std::uint8_t>(1u << (id % 8));
    out.insert(out.end(), codes_.begin() + std::size_t{id} * m, codes_.begin() + std::size_t{id + 1} * m);
  }
  codes_file_.reset();
  write_file_atomic(dir_ / kCodesFile, out, counters_.get());
  codes_file_ = std::make_unique<File>(dir_ / kCodesFile, File::Mode::kReadWrite, FileClass::kMetadata, counters_.get());
}

void Engine::fault(std::string_view stage) const {
  if (options_.fault_hook) options_.fault_hook(stage);
}

std::vector<float> Engine::to_floats(ByteSpan vector) const {
  return VectorView{kInvalidId, config_.element_type, config_.dim, vector}.to_floats();
}

void Engine::append_code(std::span<const std::uint8_t> code) {
  codes_file_->append(code);
  codes_.insert(codes_.end(), code.begin(), code.end());
}

void Engine::reset_cache(std::size_t num_vertices) {
  const std::size_t capacity = options_.cache_entries ? options_.cache_entries : std::max<std::size_t>(1, num_vertices / 100);
  cache_ = std::make_unique<NeighborCache>(capacity, NeighborCache::entry_bytes_for(config_.max_degree, num_vertices));
}

SearchResult Engine::search(std::span<const float> query, const SearchParams& params) const {
  params.validate();
  if (query.size() != config_.dim) throw UsageError("query dimension does not match the store");
  std::shared_lock lock(state_);

  SearchSource source;
  source.graph = graph_.get();
  source.cache = cache_.get();
  source.codebook = &codebook_;
  const std::size_t m = codebook_.subspaces;
  source.code = [&](VectorId id) { return codes_.data() + std::size_t{id} * m; };
  source.read_vector = [&](VectorId id, std::span<float> out) {
    thread_local Bytes buffer;
    buffer.resize(config_.vector_bytes());
    vectors_->read_into(id, buffer);
    VectorView{id, config_.element_type, config_.dim, buffer}.to_floats(out);
  };
  source.is_deleted = [&](VectorId id) { return tombstones_.contains(id); };

  SearchResult result;
  if (graph_->num_vertices() > 0) result = beam_search(source, query, params);
  if (mem_.empty()) return result;

  auto extra = mem_.search(query, params.L_s, source.is_deleted);
  auto& out = result.neighbors;
  out.insert(out.end(), extra.begin(), extra.end());
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end(), [](const Neighbor& a, const Neighbor& b) { return a.id == b.id; }),
            out.end());
  if (out.size() > params.K) out.resize(params.K);
  return result;
}

VectorId Engine::insert(std::span<const float> values) {
  if (values.size() != config_.dim) throw UsageError("insert: dimension mismatch");
  return insert_raw(VectorRecord::from_floats(kInvalidId, values, config_.element_type).bytes);
}

VectorId Engine::insert_raw(ByteSpan vector) {
  if (vector.size() != config_.vector_bytes()) throw UsageError("insert: vector has the wrong byte size");
  std::lock_guard writer(writer_);
  const VectorId id = vectors_->append(vector);
  const auto values = to_floats(vector);
  const auto code = pq_encode(values, codebook_);
  {
    std::unique_lock lock(state_);
    append_code(code);
    mem_.insert(id, values);
  }
  appended_bytes_ += vector.size();
  if (options_.auto_merge && mem_.size() >= merge_threshold()) merge_locked();
  return id;
}

void Engine::remove(VectorId id) {
  std::lock_guard writer(writer_);
  if (id >= vectors_->next_id() || tombstones_.contains(id) || !vectors_->contains(id)) {
    throw NotFoundError("vector " + std::to_string(id) + " is not live");
  }
  tombstones_.log(id);
  {
    std::unique_lock lock(state_);
    tombstones_.insert(id);
    pending_deletes_.push_back(id);
  }
  vectors_->mark_stale(id);
}

MergeStats Engine::merge() {
  std::lock_guard writer(writer_);
  return merge_locked();
}

// Runs with writer_ held, so nothing else mutates engine state; queries keep
// reading the old snapshot until the swap at the end.
MergeStats Engine::merge_locked() {
  MergeStats st;
  if (mem_.empty() && pending_deletes_.empty()) return st;
  fault("merge-begin");

  auto t = Clock::now();
  const auto old = graph_;
  const VectorId n_old = old->num_vertices();
  const VectorId n_new = vectors_->next_id();
  const std::size_t dim = config_.dim;
  Adjacency adj = old->read_all();
  adj.resize(n_new);
  const Adjacency before = adj;

  std::vector<float> rows(std::size_t{n_new} * dim, 0.0f);
  std::vector<bool> live(n_new, false);
  Bytes buffer(config_.vector_bytes());
  for (VectorId id = 0; id < n_new; ++id) {
    if (tombstones_.contains(id) || !vectors_->contains(id)) continue;
    vectors_->read_into(id, buffer);
    VectorView{id, config_.element_type, dim, buffer}.to_floats(std::span<float>(rows.data() + std::size_t{id} * dim, dim));
    live[id] = true;
  }
  const VectorTable table{rows.data(), dim, n_new};
  const auto dead = [&](VectorId v) { return !live[v]; };
  const auto distance = [&](VectorId a, VectorId b) { return table.distance(a, b); };
  st.load_seconds = seconds_since(t);

  t = Clock::now();
  consolidate_deletes(adj, dead, config_.max_degree, config_.prune_alpha, distance);
  VectorId entry = old->entry_point();
  if (entry == kInvalidId || entry >= n_new || !live[entry]) {
    std::vector<VectorId> ids;
    for (VectorId v = 0; v < n_old; ++v) {
      if (live[v]) ids.push_back(v);
    }
    if (!ids.empty()) entry = medoid(table, ids);
  }
  st.deleted = pending_deletes_.size();
  st.merge_delete_seconds = seconds_since(t);

  t = Clock::now();
  const BuildParams params{config_.max_degree, config_.build_list, config_.prune_alpha, config_.seed};
  VisitedSet scratch(n_new);
  for (VectorId id : mem_.ids()) {
    if (!live[id]) continue;
    ++st.inserted;
    if (entry == kInvalidId || !live[entry]) {
      entry = id;
      continue;
    }
    vamana_insert(adj, table, id, entry, params, config_.prune_alpha, scratch);
  }
  enforce_degree(adj, table, config_.max_degree, config_.prune_alpha);
  if (entry != kInvalidId && live[entry]) repair_reachability(adj, table, entry, config_.max_degree, live);
  if (entry == kInvalidId || entry >= n_new) entry = 0;  // nothing live; any in-range id will do

  std::map<VectorId, std::vector<VectorId>> changes;
  for (VectorId v = 0; v < n_new; ++v) {
    std::sort(adj[v].begin(), adj[v].end());
    if (adj[v] != before[v]) changes.emplace(v, adj[v]);
  }
  st.vertices_rewritten = changes.size();
  st.merge_insert_seconds = seconds_since(t);

  fault("before-graph-commit");
  vectors_->flush();  // the graph must never reference vectors that could vanish
  GraphUpdateStats gs;
  auto next = old->apply_update(changes, n_new, entry, &gs);
  st.graph_blocks_rewritten = gs.blocks_written;
  st.graph_bytes_written = gs.bytes_written;
  if (next->garbage_ratio() >= config_.graph_garbage_threshold) {
    GraphUpdateStats cs;
    next = next->compact(&cs);
    st.graph_compacted = true;
    st.graph_blocks_rewritten += cs.blocks_written;
    st.graph_bytes_written += cs.bytes_written;
  }
  fault("before-swap");

  {
    std::unique_lock lock(state_);
    graph_ = next;
    mem_.clear();
    pending_deletes_.clear();
    if (NeighborCache::entry_bytes_for(config_.max_degree, n_new) != cache_->entry_bytes()) {
      reset_cache(n_new);
    } else {
      std::vector<VectorId> stale;
      for (const auto& [v, list] : changes) stale.push_back(v);
      cache_->invalidate(stale);
    }
  }
  next->release_unreferenced();
  st.vector_bytes_written = appended_bytes_;
  appended_bytes_ = 0;
  gc_locked(config_.gc_threshold, &st);
  return st;
}

std::uint64_t Engine::run_gc(double threshold, MergeStats* stats) {
  if (!(threshold >= 0.0 && threshold <= 1.0)) throw UsageError("GC threshold must be in [0, 1]");
  std::lock_guard writer(writer_);
  return gc_locked(threshold, stats);
}

std::uint64_t Engine::gc_locked(double threshold, MergeStats* stats) {
  const auto t = Clock::now();
  auto infos = vectors_->segments();
  std::vector<SegmentInfo> picked;
  for (const auto& s : infos) {
    if (s.state == SegmentState::kSealed && s.stored_count > 0 && s.garbage_ratio > 0.0 && s.garbage_ratio >= threshold) {
      picked.push_back(s);
    }
  }
  if (picked.empty()) return 0;
  std::stable_sort(picked.begin(), picked.end(),
                   [](const SegmentInfo& a, const SegmentInfo& b) { return a.garbage_ratio > b.garbage_ratio; });
  std::vector<std::uint32_t> ids;
  for (const auto& s : picked) ids.push_back(s.segment_id);

  const auto result = vectors_->compact(ids, [&](VectorId id) { return !tombstones_.contains(id); });

  // A dropped id the graph may still reference keeps its tombstone until the
  // next merge removes those references.
  const std::set<VectorId> pending(pending_deletes_.begin(), pending_deletes_.end());
  std::vector<VectorId> forget;
  for (auto id : result.dropped_ids) {
    if (!pending.count(id)) forget.push_back(id);
  }
  if (!result.dropped_ids.empty()) pack_codes(pending);
  if (!forget.empty()) {
    std::unique_lock lock(state_);
    tombstones_.erase(forget);
  }
  if (stats) {
    stats->gc_bytes_reclaimed += result.bytes_reclaimed;
    stats->vector_bytes_written += result.bytes_written;
    stats->gc_seconds += seconds_since(t);
  }
  return result.bytes_reclaimed;
}

Bytes Engine::read_vector(VectorId id) const {
  {
    std::shared_lock lock(state_);
    if (tombstones_.contains(id)) throw NotFoundError("vector " + std::to_string(id) + " is deleted");
  }
  return vectors_->read(id);
}

bool Engine::is_live(VectorId id) const {
  std::shared_lock lock(state_);
  return id < vectors_->next_id() && !tombstones_.contains(id) && vectors_->contains(id);
}

std::vector<VectorId> Engine::live_ids() const {
  std::shared_lock lock(state_);
  std::vector<VectorId> out;
  const VectorId next = vectors_->next_id();
  for (VectorId id = 0; id < next; ++id) {
    if (!tombstones_.contains(id) && vectors_->contains(id)) out.push_back(id);
  }
  return out;
}

std::size_t Engine::live_count() const { return live_ids().size(); }

std::size_t Engine::pending_inserts() const {
  std::shared_lock lock(state_);
  return mem_.size();
}

std::size_t Engine::pending_deletes() const {
  std::shared_lock lock(state_);
  return pending_deletes_.size();
}

std::size_t Engine::merge_threshold() const {
  std::shared_lock lock(state_);
  return std::max<std::size_t>(1, static_cast<std::size_t>(config_.merge_threshold_fraction * graph_->num_vertices()));
}

std::shared_ptr<const GraphStore> Engine::graph() const {
  std::shared_lock lock(state_);
  return graph_;
}

NeighborCache& Engine::cache() const {
  std::shared_lock lock(state_);
  return *cache_;
}

StorageBreakdown Engine::storage() const {
  StorageBreakdown b;
  for (const auto& e : fs::recursive_directory_iterator(dir_)) {
    if (!e.is_regular_file()) continue;
    const std::uint64_t size = disk_usage(e.path());
    const auto name = e.path().filename().string();
    const auto ext = e.path().extension().string();
    const bool in_segments = e.path().parent_path().filename() == "segments";
    b.directory_bytes += size;
    if (in_segments && ext == ".data") {
      b.vector_segment_bytes += size;
    } else if (in_segments && ext == ".meta") {
      b.chunk_metadata_bytes += size;
    } else if (name.rfind("idmap.", 0) == 0) {
      b.idmap_bytes += size;
    } else if (name == "graph.data") {
      b.graph_data_bytes += size;
    } else if (name == "graph.sparse") {
      b.graph_sparse_bytes += size;
    } else if (name == kCodebookFile) {
      b.pq_codebook_bytes += size;
    } else if (name == kCodesFile) {
      b.pq_codes_bytes += size;
    } else if (name == TombstoneSet::kFileName) {
      b.tombstone_bytes += size;
    } else if (name == "store.json" || name == "LOCK") {
      b.config_bytes += size;
    } else {
      b.other_bytes += size;
    }
  }
  b.total_bytes = b.vector_segment_bytes + b.chunk_metadata_bytes + b.idmap_bytes + b.graph_data_bytes +
                  b.graph_sparse_bytes + b.pq_codebook_bytes + b.pq_codes_bytes + b.tombstone_bytes + b.config_bytes +
                  b.other_bytes;

  b.vector_count = live_count();
  b.colocated_entry_bytes = config_.vector_bytes() + 4ull * (config_.max_degree + 1);
  b.colocated_padded_entry_bytes = colocated_padded_entry(config_.vector_bytes(), config_.max_degree);
  b.colocated_bytes = static_cast<std::uint64_t>(std::llround(b.vector_count * b.colocated_padded_entry_bytes));
  b.fragmentation_reclaimed = b.colocated_bytes - b.vector_count * b.colocated_entry_bytes;
  return b;
}

}  // namespace dvs
