#include "dvs/layout/graph_store.hpp"

#include <algorithm>
#include <array>

#include "dvs/codec/elias_fano.hpp"
#include "dvs/layout/block.hpp"

namespace dvs {

namespace fs = std::filesystem;

namespace {

constexpr std::uint32_t kVersion = 1;

Bytes encode_list(std::vector<VectorId> ids, std::uint64_t universe) {
  if (ids.empty()) return {};
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  Bytes out;
  ef_encode(ids, universe).serialize(out);
  if (out.size() > BlockBuilder::kMaxEntryBytes) {
    throw UsageError("neighbor list of " + std::to_string(ids.size()) + " ids does not fit in a block");
  }
  return out;
}

/// Packs consecutive vertices into blocks, recording each block's first vertex.
class Packer {
 public:
  explicit Packer(Bytes& out) : out_(out) {}

  void add(VectorId vertex, ByteSpan entry) {
    if (builder_.empty() || !builder_.add(entry)) {
      if (!builder_.empty()) builder_.finish_into(out_);
      builder_.add(entry);
      boundaries_.push_back(vertex);
    }
  }
  std::vector<VectorId> finish() {
    if (!builder_.empty()) builder_.finish_into(out_);
    return std::move(boundaries_);
  }

 private:
  Bytes& out_;
  BlockBuilder builder_;
  std::vector<VectorId> boundaries_;
};

fs::path with_suffix(const fs::path& p, const char* suffix) {
  fs::path out = p;
  out += suffix;
  return out;
}

}  // namespace

Bytes GraphStore::serialize_sparse(std::uint32_t num_vertices, VectorId entry, std::uint32_t max_degree,
                                   std::uint32_t data_blocks, const std::vector<SparseEntry>& sparse) {
  Bytes out;
  out.reserve(kHeaderBytes + 8 * sparse.size());
  put_le(out, kMagic);
  put_le(out, kVersion);
  put_le(out, num_vertices);
  put_le(out, entry);
  put_le(out, max_degree);
  put_le(out, static_cast<std::uint32_t>(sparse.size()));
  put_le(out, data_blocks);
  put_le(out, std::uint32_t{0});
  for (const auto& e : sparse) {
    put_le(out, e.boundary);
    put_le(out, e.physical);
  }
  return out;
}

void GraphStore::write(const fs::path& dir, const Adjacency& adjacency, VectorId entry_point,
                       std::uint32_t max_degree, IoCounters* counters) {
  const auto n = static_cast<std::uint32_t>(adjacency.size());
  if (n > 0 && entry_point >= n) throw UsageError("graph entry point out of range");
  Bytes data;
  Packer packer(data);
  for (VectorId v = 0; v < n; ++v) {
    for (auto id : adjacency[v]) {
      if (id >= n) {
        throw UsageError("vertex " + std::to_string(v) + " lists neighbor " + std::to_string(id) + " >= N=" +
                         std::to_string(n));
      }
    }
    packer.add(v, encode_list(adjacency[v], n));
  }
  const auto boundaries = packer.finish();
  std::vector<SparseEntry> sparse(boundaries.size());
  for (std::size_t i = 0; i < boundaries.size(); ++i) sparse[i] = {boundaries[i], static_cast<std::uint32_t>(i)};
  write_file_atomic(dir / "graph.data", data, counters);
  write_file_atomic(dir / "graph.sparse",
                    serialize_sparse(n, entry_point, max_degree, static_cast<std::uint32_t>(sparse.size()), sparse),
                    counters);
}

std::shared_ptr<GraphStore> GraphStore::open(const fs::path& dir, IoCounters* counters) {
  const fs::path marker = dir / "graph.compact.commit";
  const fs::path data = dir / "graph.data";
  const fs::path sparse = dir / "graph.sparse";
  const fs::path data_c = with_suffix(data, ".compact");
  const fs::path sparse_c = with_suffix(sparse, ".compact");
  if (fs::exists(marker)) {
    if (fs::exists(data_c)) rename_durable(data_c, data);
    if (fs::exists(sparse_c)) rename_durable(sparse_c, sparse);
    fs::remove(marker);
  } else {
    fs::remove(data_c);
    fs::remove(sparse_c);
  }
  fs::remove(with_suffix(sparse, ".tmp"));
  fs::remove(with_suffix(data, ".tmp"));
  return load(dir, counters);
}

std::shared_ptr<GraphStore> GraphStore::load(const fs::path& dir, IoCounters* counters) {
  const fs::path sparse_path = dir / "graph.sparse";
  const fs::path data_path = dir / "graph.data";
  if (!fs::exists(sparse_path)) throw FormatError("startup: missing " + sparse_path.string());
  if (!fs::exists(data_path)) throw FormatError("startup: missing " + data_path.string());
  const Bytes bytes = read_whole_file(sparse_path, FileClass::kMetadata, counters);
  const std::string what = "startup: " + sparse_path.string();
  std::shared_ptr<GraphStore> g(new GraphStore());
  g->dir_ = dir;
  g->counters_ = counters;
  ByteReader r(bytes, what);
  if (r.get<std::uint32_t>() != kMagic) throw FormatError(what + ": bad magic");
  if (r.get<std::uint32_t>() != kVersion) throw FormatError(what + ": unsupported version");
  g->num_vertices_ = r.get<std::uint32_t>();
  g->entry_point_ = r.get<std::uint32_t>();
  g->max_degree_ = r.get<std::uint32_t>();
  const auto logical = r.get<std::uint32_t>();
  g->data_blocks_ = r.get<std::uint32_t>();
  r.get<std::uint32_t>();
  if (r.remaining() != std::size_t{logical} * 8) throw FormatError(what + ": size does not match block count");
  g->sparse_.resize(logical);
  for (std::uint32_t i = 0; i < logical; ++i) {
    auto& e = g->sparse_[i];
    e.boundary = r.get<std::uint32_t>();
    e.physical = r.get<std::uint32_t>();
    const bool ordered = i == 0 ? e.boundary == 0 : e.boundary > g->sparse_[i - 1].boundary;
    if (!ordered || e.boundary >= g->num_vertices_ || e.physical >= g->data_blocks_) {
      throw FormatError(what + ": bad entry " + std::to_string(i));
    }
  }
  if ((g->num_vertices_ == 0) != (logical == 0)) throw FormatError(what + ": vertex and block counts disagree");
  g->file_ = std::make_shared<File>(data_path, File::Mode::kReadWrite, FileClass::kGraph, counters);
  const std::uint64_t expected = std::uint64_t{g->data_blocks_} * kBlockSize;
  const std::uint64_t size = g->file_->size();
  if (size < expected) throw FormatError("startup: " + data_path.string() + " is shorter than its index");
  // Blocks appended by an update that never committed its index.
  if (size > expected) g->file_->truncate(expected);
  return g;
}

double GraphStore::garbage_ratio() const {
  return data_blocks_ == 0 ? 0.0 : 1.0 - static_cast<double>(sparse_.size()) / data_blocks_;
}

void GraphStore::release_unreferenced() const {
  std::vector<bool> referenced(data_blocks_, false);
  for (const auto& e : sparse_) referenced[e.physical] = true;
  for (std::uint32_t p = 0; p < data_blocks_;) {
    if (referenced[p]) {
      ++p;
      continue;
    }
    std::uint32_t end = p;
    while (end < data_blocks_ && !referenced[end]) ++end;
    if (!file_->punch_hole(std::uint64_t{p} * kBlockSize, std::uint64_t{end - p} * kBlockSize)) return;
    p = end;
  }
}

std::size_t GraphStore::block_of(VectorId v) const {
  if (v >= num_vertices_) {
    throw NotFoundError("vertex " + std::to_string(v) + " not in graph of " + std::to_string(num_vertices_));
  }
  const auto it = std::upper_bound(sparse_.begin(), sparse_.end(), v,
                                   [](VectorId x, const SparseEntry& e) { return x < e.boundary; });
  return static_cast<std::size_t>(it - sparse_.begin()) - 1;
}

void GraphStore::read_block(std::uint32_t physical, std::span<std::uint8_t> out) const {
  file_->read_exact(std::uint64_t{physical} * kBlockSize, out);
}

Bytes GraphStore::read_encoded(VectorId v) const {
  const std::size_t b = block_of(v);
  std::array<std::uint8_t, kBlockSize> block;
  read_block(sparse_[b].physical, block);
  const BlockView view(block, "graph block " + std::to_string(sparse_[b].physical));
  const auto e = view.entry(v - sparse_[b].boundary);
  return Bytes(e.payload.begin(), e.payload.end());
}

std::vector<VectorId> GraphStore::read_neighbor_list(VectorId v) const {
  const Bytes enc = read_encoded(v);
  if (enc.empty()) return {};
  return ef_decode_serialized(enc);
}

Adjacency GraphStore::read_all() const {
  Adjacency adj(num_vertices_);
  std::array<std::uint8_t, kBlockSize> block;
  for (std::size_t b = 0; b < sparse_.size(); ++b) {
    read_block(sparse_[b].physical, block);
    const BlockView view(block, "graph block " + std::to_string(sparse_[b].physical));
    const VectorId first = sparse_[b].boundary;
    const VectorId end = b + 1 < sparse_.size() ? sparse_[b + 1].boundary : num_vertices_;
    if (view.count() != end - first) {
      throw CorruptionError("graph block " + std::to_string(sparse_[b].physical) + ": holds " +
                            std::to_string(view.count()) + " lists, index expects " + std::to_string(end - first));
    }
    for (VectorId v = first; v < end; ++v) {
      const auto e = view.entry(v - first);
      if (!e.payload.empty()) adj[v] = ef_decode_serialized(e.payload);
    }
  }
  return adj;
}

std::shared_ptr<GraphStore> GraphStore::apply_update(const std::map<VectorId, std::vector<VectorId>>& changes,
                                                     std::uint32_t new_num_vertices, VectorId entry_point,
                                                     GraphUpdateStats* stats) const {
  if (new_num_vertices < num_vertices_) throw UsageError("graph update cannot remove vertices");
  if (new_num_vertices > 0 && entry_point >= new_num_vertices) throw UsageError("graph entry point out of range");
  for (const auto& [v, list] : changes) {
    if (v >= new_num_vertices) throw UsageError("graph update names vertex " + std::to_string(v));
    for (auto id : list) {
      if (id >= new_num_vertices) throw UsageError("graph update lists neighbor " + std::to_string(id));
    }
  }

  std::vector<bool> affected(sparse_.size(), false);
  for (auto it = changes.begin(); it != changes.end() && it->first < num_vertices_; ++it) {
    affected[block_of(it->first)] = true;
  }

  Bytes appended;
  std::vector<SparseEntry> sparse;
  sparse.reserve(sparse_.size());
  GraphUpdateStats local;
  std::array<std::uint8_t, kBlockSize> block;
  std::uint32_t produced = 0;

  // Slot k of `appended` is placed later; record it as k for now.
  auto collect = [&](std::vector<VectorId> boundaries) {
    for (auto b : boundaries) sparse.push_back({b, produced++});
  };
  std::vector<bool> placed_slot;  // true where sparse[i] kept its old block

  for (std::size_t b = 0; b < sparse_.size();) {
    if (!affected[b]) {
      sparse.push_back(sparse_[b]);
      placed_slot.resize(sparse.size(), false);
      placed_slot.back() = true;
      ++b;
      continue;
    }
    std::size_t e = b;
    while (e < sparse_.size() && affected[e]) ++e;
    Packer run(appended);
    for (std::size_t k = b; k < e; ++k) {
      read_block(sparse_[k].physical, block);
      const BlockView view(block, "graph block " + std::to_string(sparse_[k].physical));
      const VectorId first = sparse_[k].boundary;
      const VectorId end = k + 1 < sparse_.size() ? sparse_[k + 1].boundary : num_vertices_;
      for (VectorId v = first; v < end; ++v) {
        const auto found = changes.find(v);
        if (found != changes.end()) {
          run.add(v, encode_list(found->second, new_num_vertices));
        } else {
          run.add(v, view.entry(v - first).payload);
        }
      }
    }
    local.affected_blocks += e - b;
    collect(run.finish());
    b = e;
  }

  if (new_num_vertices > num_vertices_) {
    Packer fresh(appended);
    for (VectorId v = num_vertices_; v < new_num_vertices; ++v) {
      const auto found = changes.find(v);
      fresh.add(v, found != changes.end() ? encode_list(found->second, new_num_vertices) : Bytes{});
    }
    const auto boundaries = fresh.finish();
    local.new_vertex_blocks = boundaries.size();
    collect(boundaries);
  }

  // Blocks this snapshot no longer references are overwritten first.
  std::vector<bool> referenced(data_blocks_, false);
  for (const auto& e : sparse_) referenced[e.physical] = true;
  std::vector<std::uint32_t> target;
  target.reserve(produced);
  for (std::uint32_t p = 0; p < data_blocks_ && target.size() < produced; ++p) {
    if (!referenced[p]) target.push_back(p);
  }
  for (std::uint32_t p = data_blocks_; target.size() < produced; ++p) target.push_back(p);
  placed_slot.resize(sparse.size(), false);
  for (std::size_t i = 0; i < sparse.size(); ++i) {
    if (!placed_slot[i]) sparse[i].physical = target[sparse[i].physical];
  }

  for (std::uint32_t k = 0; k < produced;) {
    std::uint32_t run = 1;
    while (k + run < produced && target[k + run] == target[k] + run) ++run;
    file_->write_at(std::uint64_t{target[k]} * kBlockSize,
                    std::span<const std::uint8_t>(appended).subspan(std::size_t{k} * kBlockSize,
                                                                    std::size_t{run} * kBlockSize));
    k += run;
  }
  if (produced > 0) file_->sync();
  const std::uint32_t data_blocks = std::max(data_blocks_, produced ? target.back() + 1 : 0u);
  const Bytes index = serialize_sparse(new_num_vertices, entry_point, max_degree_, data_blocks, sparse);
  write_file_atomic(dir_ / "graph.sparse", index, counters_);

  local.blocks_written = produced;
  local.bytes_written = appended.size() + index.size();
  if (stats) *stats = local;

  std::shared_ptr<GraphStore> g(new GraphStore());
  g->dir_ = dir_;
  g->counters_ = counters_;
  g->file_ = file_;
  g->num_vertices_ = new_num_vertices;
  g->entry_point_ = entry_point;
  g->max_degree_ = max_degree_;
  g->data_blocks_ = data_blocks;
  g->sparse_ = std::move(sparse);
  return g;
}

std::shared_ptr<GraphStore> GraphStore::compact(GraphUpdateStats* stats) const {
  const fs::path data = dir_ / "graph.data";
  const fs::path sparse_path = dir_ / "graph.sparse";
  const fs::path data_c = with_suffix(data, ".compact");
  const fs::path sparse_c = with_suffix(sparse_path, ".compact");
  const fs::path marker = dir_ / "graph.compact.commit";

  Bytes image(sparse_.size() * kBlockSize);
  std::vector<SparseEntry> sparse = sparse_;
  for (std::size_t b = 0; b < sparse_.size(); ++b) {
    read_block(sparse_[b].physical, std::span<std::uint8_t>(image).subspan(b * kBlockSize, kBlockSize));
    sparse[b].physical = static_cast<std::uint32_t>(b);
  }
  const auto blocks = static_cast<std::uint32_t>(sparse.size());
  const Bytes index = serialize_sparse(num_vertices_, entry_point_, max_degree_, blocks, sparse);
  write_file_durable(data_c, image, counters_);
  write_file_durable(sparse_c, index, counters_);
  write_file_durable(marker, Bytes{}, counters_);
  sync_directory(dir_);
  rename_durable(data_c, data);
  rename_durable(sparse_c, sparse_path);
  fs::remove(marker);
  sync_directory(dir_);

  if (stats) {
    stats->blocks_written = blocks;
    stats->bytes_written = image.size() + index.size();
  }
  std::shared_ptr<GraphStore> g(new GraphStore());
  g->dir_ = dir_;
  g->counters_ = counters_;
  g->file_ = std::make_shared<File>(data, File::Mode::kReadWrite, FileClass::kGraph, counters_);
  g->num_vertices_ = num_vertices_;
  g->entry_point_ = entry_point_;
  g->max_degree_ = max_degree_;
  g->data_blocks_ = blocks;
  g->sparse_ = std::move(sparse);
  return g;
}

std::uint64_t GraphStore::data_file_bytes() const { return std::uint64_t{data_blocks_} * kBlockSize; }

std::uint64_t GraphStore::sparse_file_bytes() const { return kHeaderBytes + 8 * sparse_.size(); }

}  // namespace dvs
