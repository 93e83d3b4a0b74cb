#include "dvs/layout/vector_store.hpp"

#include <algorithm>
#include <optional>
#include <set>

namespace dvs {

namespace fs = std::filesystem;

void IdLocationMap::set(VectorId id, Location loc) {
  if (id >= entries_.size()) entries_.resize(std::size_t{id} + 1);
  entries_[id] = loc;
}

void IdLocationMap::clear(VectorId id) {
  if (id < entries_.size()) entries_[id] = Location{};
}

// Entries are grouped by segment. Each group is a run of consecutive ids, a
// varint-delta list of ascending ids in slot order, or explicit pairs.
namespace {
enum IdMapGroup : std::uint8_t { kRun = 0, kAscending = 1, kPairs = 2 };
}

Bytes IdLocationMap::serialize(std::uint32_t watermark) const {
  std::map<std::uint32_t, std::vector<std::pair<std::uint32_t, VectorId>>> groups;  // segment -> (slot, id)
  for (VectorId id = 0; id < entries_.size(); ++id) {
    if (entries_[id].valid()) groups[entries_[id].segment].emplace_back(entries_[id].slot, id);
  }
  Bytes out;
  put_le(out, kMagic);
  put_le(out, std::uint32_t{2});
  put_le(out, static_cast<std::uint32_t>(entries_.size()));
  put_le(out, watermark);
  put_le(out, static_cast<std::uint32_t>(groups.size()));
  for (auto& [segment, list] : groups) {
    std::sort(list.begin(), list.end());
    bool dense = true, ascending = true, run = true;
    for (std::size_t i = 0; i < list.size(); ++i) {
      dense = dense && list[i].first == i;
      if (i > 0) {
        ascending = ascending && list[i].second > list[i - 1].second;
        run = run && list[i].second == list[i - 1].second + 1;
      }
    }
    put_le(out, segment);
    put_le(out, static_cast<std::uint32_t>(list.size()));
    if (dense && run) {
      out.push_back(kRun);
      put_le(out, list.front().second);
    } else if (dense && ascending) {
      out.push_back(kAscending);
      VectorId prev = 0;
      for (const auto& [slot, id] : list) {
        put_varint(out, id - prev);
        prev = id;
      }
    } else {
      out.push_back(kPairs);
      for (const auto& [slot, id] : list) {
        put_le(out, id);
        put_le(out, slot);
      }
    }
  }
  return out;
}

std::uint32_t IdLocationMap::deserialize(ByteSpan data, const std::string& what) {
  ByteReader r(data, what);
  if (r.get<std::uint32_t>() != kMagic) throw FormatError(what + ": bad magic");
  if (r.get<std::uint32_t>() != 2) throw FormatError(what + ": unsupported version");
  const auto count = r.get<std::uint32_t>();
  const auto watermark = r.get<std::uint32_t>();
  const auto groups = r.get<std::uint32_t>();
  entries_.assign(count, Location{});
  const auto put = [&](VectorId id, Location loc) {
    if (id >= count) throw FormatError(what + ": id " + std::to_string(id) + " beyond entry count");
    entries_[id] = loc;
  };
  for (std::uint32_t g = 0; g < groups; ++g) {
    const auto segment = r.get<std::uint32_t>();
    const auto n = r.get<std::uint32_t>();
    switch (r.get<std::uint8_t>()) {
      case kRun: {
        const auto first = r.get<std::uint32_t>();
        for (std::uint32_t slot = 0; slot < n; ++slot) put(first + slot, {segment, slot});
        break;
      }
      case kAscending: {
        std::uint64_t id = 0;
        for (std::uint32_t slot = 0; slot < n; ++slot) {
          id += r.get_varint();
          if (id >= count) throw FormatError(what + ": id beyond entry count");
          put(static_cast<VectorId>(id), {segment, slot});
        }
        break;
      }
      case kPairs:
        for (std::uint32_t i = 0; i < n; ++i) {
          const auto id = r.get<std::uint32_t>();
          put(id, {segment, r.get<std::uint32_t>()});
        }
        break;
      default:
        throw FormatError(what + ": unknown group kind");
    }
  }
  if (r.remaining() != 0) throw FormatError(what + ": trailing bytes");
  return watermark;
}

struct VectorStore::Segment {
  SegmentManifest manifest;
  std::atomic<std::uint32_t> count{0};
  std::atomic<std::uint32_t> stale{0};
  std::optional<HuffmanTable> codes;
  fs::path path;
  IoCounters* counters = nullptr;
  std::uint64_t meta_bytes = 0;
  mutable std::once_flag once;
  mutable std::unique_ptr<File> file;

  std::uint32_t id() const { return manifest.segment_id; }
  bool sealed() const { return manifest.state == SegmentState::kSealed; }
  File& handle() const {
    std::call_once(once, [&] {
      if (!file) file = std::make_unique<File>(path, File::Mode::kRead, FileClass::kVector, counters);
    });
    return *file;
  }
};

VectorStore::VectorStore(fs::path dir, StoreConfig config, IoCounters* counters)
    : dir_(std::move(dir)), config_(std::move(config)), counters_(counters) {}

VectorStore::~VectorStore() = default;

fs::path VectorStore::data_path(std::uint32_t id) const { return seg_dir() / (std::to_string(id) + ".data"); }
fs::path VectorStore::meta_path(std::uint32_t id) const { return seg_dir() / (std::to_string(id) + ".meta"); }

std::unique_ptr<VectorStore> VectorStore::create(const fs::path& dir, const StoreConfig& config,
                                                 IoCounters* counters) {
  std::unique_ptr<VectorStore> store(new VectorStore(dir, config, counters));
  fs::create_directories(store->seg_dir());
  store->active_ = store->new_mutable_segment();
  store->segments_[store->active_->id()] = store->active_;
  sync_directory(dir);
  return store;
}

std::shared_ptr<VectorStore::Segment> VectorStore::new_mutable_segment() {
  auto seg = std::make_shared<Segment>();
  auto& m = seg->manifest;
  m.segment_id = next_segment_id_++;
  m.state = SegmentState::kMutable;
  m.capacity = config_.segment_capacity;
  m.first_id = next_id_;
  m.vector_bytes = static_cast<std::uint32_t>(config_.vector_bytes());
  m.chunk_vectors = config_.chunk_vectors;
  seg->path = data_path(m.segment_id);
  seg->counters = counters_;
  seg->file = std::make_unique<File>(seg->path, File::Mode::kCreate, FileClass::kVector, counters_);
  seg->file->sync();
  const Bytes meta = m.serialize();
  write_file_durable(meta_path(m.segment_id), meta, counters_);
  seg->meta_bytes = meta.size();
  sync_directory(seg_dir());
  return seg;
}

std::shared_ptr<VectorStore::Segment> VectorStore::load_segment(std::uint32_t id) {
  const fs::path meta = meta_path(id);
  const fs::path data = data_path(id);
  fs::path sealed_meta = meta;
  sealed_meta += ".sealed";
  fs::path sealed_data = data;
  sealed_data += ".sealed";
  // The meta rename commits a seal; anything left beside an unsealed meta is a
  // discarded attempt, a leftover sealed data file next to a sealed meta is
  // rolled forward.
  if (fs::exists(sealed_meta)) {
    fs::remove(sealed_meta);
    fs::remove(sealed_data);
  }
  // Only leftovers of an uncommitted seal of a compaction output.
  if (!fs::exists(meta) && !fs::exists(data)) return nullptr;
  if (!fs::exists(meta)) throw FormatError("startup: missing " + meta.string());
  const Bytes bytes = read_whole_file(meta, FileClass::kMetadata, counters_);
  auto seg = std::make_shared<Segment>();
  try {
    seg->manifest = SegmentManifest::deserialize(bytes, meta.string());
  } catch (const FormatError& e) {
    throw FormatError(std::string("startup: ") + e.what());
  }
  seg->meta_bytes = bytes.size();
  auto& m = seg->manifest;
  if (m.segment_id != id) throw FormatError("startup: " + meta.string() + ": segment id mismatch");
  if (m.vector_bytes != config_.vector_bytes()) throw FormatError("startup: " + meta.string() + ": vector size mismatch");
  if (m.state == SegmentState::kSealed && fs::exists(sealed_data)) rename_durable(sealed_data, data);
  if (m.state == SegmentState::kMutable) fs::remove(sealed_data);
  if (!fs::exists(data)) throw FormatError("startup: missing " + data.string());
  seg->path = data;
  seg->counters = counters_;
  if (m.state == SegmentState::kSealed) {
    if (m.stored_count == 0) throw FormatError("startup: " + meta.string() + ": empty sealed segment");
    seg->codes = HuffmanTable::build(m.frequencies);
    seg->count = m.stored_count;
  } else {
    seg->file = std::make_unique<File>(data, File::Mode::kReadWrite, FileClass::kVector, counters_);
    const std::uint64_t size = seg->file->size();
    const std::uint64_t whole = std::min<std::uint64_t>(size / m.vector_bytes, m.capacity);
    // A torn tail record was never published.
    if (whole * m.vector_bytes != size) seg->file->truncate(whole * m.vector_bytes);
    seg->count = static_cast<std::uint32_t>(whole);
  }
  return seg;
}

std::unique_ptr<VectorStore> VectorStore::open(const fs::path& dir, const StoreConfig& config,
                                               IoCounters* counters) {
  std::unique_ptr<VectorStore> store(new VectorStore(dir, config, counters));
  if (!fs::is_directory(store->seg_dir())) throw FormatError("startup: missing " + store->seg_dir().string());

  std::set<std::uint32_t> ids;
  for (const auto& entry : fs::directory_iterator(store->seg_dir())) {
    const std::string name = entry.path().filename().string();
    const auto dot = name.find('.');
    if (dot == 0 || dot == std::string::npos) continue;
    const std::string stem = name.substr(0, dot);
    if (!std::all_of(stem.begin(), stem.end(), [](char c) { return c >= '0' && c <= '9'; })) continue;
    if (name.ends_with(".tmp") || name.ends_with(".stage")) {
      fs::remove(entry.path());
      continue;
    }
    ids.insert(static_cast<std::uint32_t>(std::stoul(stem)));
  }

  std::uint32_t watermark = 0;
  const fs::path idmap_path = dir / "idmap.0";
  if (fs::exists(idmap_path)) {
    const Bytes bytes = read_whole_file(idmap_path, FileClass::kMetadata, counters);
    try {
      watermark = store->idmap_.deserialize(bytes, idmap_path.string());
    } catch (const FormatError& e) {
      throw FormatError(std::string("startup: ") + e.what());
    }
  }
  const std::size_t snapshot = store->idmap_.size();
  std::set<std::uint32_t> referenced;
  for (const auto& e : store->idmap_.entries()) {
    if (e.valid()) referenced.insert(e.segment);
  }

  for (auto id : ids) {
    auto seg = store->load_segment(id);
    if (!seg) continue;
    const auto& m = seg->manifest;
    const bool orphan =
        seg->sealed() && !referenced.count(id) && (m.first_id == kInvalidId || id < watermark);
    if (orphan) {
      // Superseded by a committed compaction, or output of an uncommitted one.
      fs::remove(store->meta_path(id));
      fs::remove(store->data_path(id));
      continue;
    }
    store->next_segment_id_ = std::max(store->next_segment_id_, id + 1);
    if (m.first_id != kInvalidId) {
      const std::uint32_t n = seg->count;
      for (std::uint32_t slot = 0; slot < n; ++slot) {
        const VectorId v = m.first_id + slot;
        if (v >= snapshot) store->idmap_.set(v, Location{id, slot});
      }
      store->next_id_ = std::max<VectorId>(store->next_id_, m.first_id + n);
    }
    if (!seg->sealed()) {
      if (store->active_) throw FormatError("startup: more than one mutable segment");
      store->active_ = seg;
    }
    store->segments_[id] = seg;
  }
  store->next_segment_id_ = std::max(store->next_segment_id_, watermark);
  store->next_id_ = std::max<VectorId>(store->next_id_, static_cast<VectorId>(snapshot));
  if (store->active_ && store->active_->manifest.first_id + store->active_->count != store->next_id_) {
    if (store->active_->count != 0) throw FormatError("startup: mutable segment does not hold the newest ids");
    // An empty tail segment created before later ids existed: retire it.
    store->segments_.erase(store->active_->id());
    fs::remove(store->meta_path(store->active_->id()));
    fs::remove(store->data_path(store->active_->id()));
    store->active_.reset();
  }
  if (!store->active_) {
    store->active_ = store->new_mutable_segment();
    store->segments_[store->active_->id()] = store->active_;
  }
  return store;
}

VectorId VectorStore::append(ByteSpan vector) {
  if (vector.size() != config_.vector_bytes()) {
    throw UsageError("append: expected " + std::to_string(config_.vector_bytes()) + " bytes, got " +
                     std::to_string(vector.size()));
  }
  if (next_id_ == kInvalidId) throw UsageError("append: id space exhausted");
  Segment& seg = *active_;
  const std::uint32_t slot = seg.count;
  try {
    seg.file->write_at(std::uint64_t{slot} * vector.size(), vector);
  } catch (const IoError& e) {
    throw IoError("segment " + std::to_string(seg.id()) + ": " + e.what());
  }
  const VectorId id = next_id_;
  {
    std::unique_lock lock(mu_);
    idmap_.set(id, Location{seg.id(), slot});
    seg.count = slot + 1;
    next_id_ = id + 1;
  }
  if (seg.count >= seg.manifest.capacity) seal_active();
  return id;
}

void VectorStore::flush() {
  if (active_ && active_->file) active_->file->sync();
}

std::shared_ptr<VectorStore::Segment> VectorStore::seal(const Segment& seg) {
  const std::uint32_t n = seg.count;
  const std::size_t v = config_.vector_bytes();
  Bytes raw(std::size_t{n} * v);
  seg.handle().read_exact(0, raw);

  SealedImage image = compress_segment(raw, v, config_.chunk_vectors, config_.sample_fraction);
  auto out = std::make_shared<Segment>();
  auto& m = out->manifest;
  m = seg.manifest;
  m.state = SegmentState::kSealed;
  m.stored_count = n;
  m.chunk_vectors = config_.chunk_vectors;
  m.frequencies = image.frequencies;
  m.chunks = std::move(image.chunks);

  const fs::path data = data_path(m.segment_id);
  const fs::path meta = meta_path(m.segment_id);
  fs::path sealed_data = data;
  sealed_data += ".sealed";
  fs::path sealed_meta = meta;
  sealed_meta += ".sealed";
  const Bytes meta_bytes = m.serialize();
  write_file_durable(sealed_data, image.blocks, counters_);
  write_file_durable(sealed_meta, meta_bytes, counters_);
  rename_durable(sealed_meta, meta);
  rename_durable(sealed_data, data);

  out->codes = HuffmanTable::build(m.frequencies);
  out->count = n;
  out->stale = seg.stale.load();
  out->path = data;
  out->counters = counters_;
  out->meta_bytes = meta_bytes.size();
  return out;
}

void VectorStore::seal_active() {
  if (active_->count == 0) return;
  flush();
  auto sealed = seal(*active_);
  auto fresh = new_mutable_segment();
  std::unique_lock lock(mu_);
  segments_[sealed->id()] = sealed;
  segments_[fresh->id()] = fresh;
  active_ = fresh;
}

std::shared_ptr<VectorStore::Segment> VectorStore::segment_for(VectorId id, Location& loc) const {
  std::shared_lock lock(mu_);
  loc = idmap_.get(id);
  if (!loc.valid()) throw NotFoundError("vector " + std::to_string(id) + " not found");
  const auto it = segments_.find(loc.segment);
  if (it == segments_.end()) {
    throw CorruptionError("vector " + std::to_string(id) + " maps to missing segment " + std::to_string(loc.segment));
  }
  return it->second;
}

void VectorStore::read_slot(const Segment& seg, std::uint32_t slot, std::span<std::uint8_t> out) const {
  const std::size_t v = config_.vector_bytes();
  if (out.size() != v) throw UsageError("read: output buffer has wrong size");
  if (!seg.sealed()) {
    seg.handle().read_exact(std::uint64_t{slot} * v, out);
    return;
  }
  const VectorLocation at = locate_vector(seg.manifest, slot);
  if (at.dense) {
    seg.handle().read_exact(std::uint64_t{at.block} * kBlockSize + at.offset, out);
    return;
  }
  std::array<std::uint8_t, kBlockSize> block;
  seg.handle().read_exact(std::uint64_t{at.block} * kBlockSize, block);
  const BlockView view(block, "segment " + std::to_string(seg.id()) + " block " + std::to_string(at.block));
  decode_vector(view.entry(at.slot), seg.manifest.chunks[at.chunk], *seg.codes, out);
}

void VectorStore::read_into(VectorId id, std::span<std::uint8_t> out) const {
  Location loc;
  auto seg = segment_for(id, loc);
  read_slot(*seg, loc.slot, out);
}

Bytes VectorStore::read(VectorId id) const {
  Bytes out(config_.vector_bytes());
  read_into(id, out);
  return out;
}

bool VectorStore::contains(VectorId id) const {
  std::shared_lock lock(mu_);
  return idmap_.get(id).valid();
}

Location VectorStore::locate(VectorId id) const {
  std::shared_lock lock(mu_);
  return idmap_.get(id);
}

void VectorStore::mark_stale(VectorId id) {
  Location loc;
  auto seg = segment_for(id, loc);
  ++seg->stale;
}

double VectorStore::garbage_ratio(std::uint32_t segment_id) const {
  std::shared_lock lock(mu_);
  const auto it = segments_.find(segment_id);
  if (it == segments_.end()) throw NotFoundError("segment " + std::to_string(segment_id) + " not found");
  const std::uint32_t n = it->second->count;
  return n == 0 ? 0.0 : static_cast<double>(it->second->stale) / n;
}

std::uint32_t VectorStore::active_segment() const {
  std::shared_lock lock(mu_);
  return active_->id();
}

CompactionResult VectorStore::compact(const std::vector<std::uint32_t>& segment_ids,
                                      const std::function<bool(VectorId)>& is_live) {
  CompactionResult result;
  std::map<std::uint32_t, std::shared_ptr<Segment>> victims;
  IdLocationMap map;
  {
    std::shared_lock lock(mu_);
    for (auto id : segment_ids) {
      const auto it = segments_.find(id);
      if (it == segments_.end()) throw NotFoundError("segment " + std::to_string(id) + " not found");
      if (!it->second->sealed()) throw UsageError("compact: segment " + std::to_string(id) + " is not sealed");
      victims[id] = it->second;
    }
    map = idmap_;
  }
  if (victims.empty()) return result;

  const std::size_t v = config_.vector_bytes();
  const std::uint32_t capacity = config_.segment_capacity;
  std::vector<VectorId> live;
  Bytes raw;
  std::vector<std::shared_ptr<Segment>> created;

  auto emit = [&] {
    if (live.empty()) return;
    Segment tmp;
    tmp.manifest.segment_id = next_segment_id_++;
    tmp.manifest.capacity = capacity;
    tmp.manifest.first_id = kInvalidId;
    tmp.manifest.vector_bytes = static_cast<std::uint32_t>(v);
    tmp.manifest.chunk_vectors = config_.chunk_vectors;
    // seal() reads the raw run from a file; open() discards stale stage files.
    tmp.path = seg_dir() / (std::to_string(tmp.manifest.segment_id) + ".stage");
    tmp.counters = counters_;
    write_file_durable(tmp.path, raw, counters_);
    tmp.count = static_cast<std::uint32_t>(live.size());
    auto seg = seal(tmp);
    tmp.file.reset();
    fs::remove(tmp.path);
    result.bytes_written += fs::file_size(seg->path) + seg->meta_bytes;
    for (std::uint32_t slot = 0; slot < live.size(); ++slot) map.set(live[slot], Location{seg->id(), slot});
    created.push_back(seg);
    result.created_segments.push_back(seg->id());
    live.clear();
    raw.clear();
  };

  Bytes buf(v);
  const auto& entries = map.entries();
  for (VectorId id = 0; id < entries.size(); ++id) {
    const Location loc = entries[id];
    if (!loc.valid()) continue;
    const auto it = victims.find(loc.segment);
    if (it == victims.end()) continue;
    if (!is_live(id)) {
      result.dropped_ids.push_back(id);
      continue;
    }
    read_slot(*it->second, loc.slot, buf);
    live.push_back(id);
    raw.insert(raw.end(), buf.begin(), buf.end());
    if (live.size() == capacity) emit();
  }
  emit();
  for (auto id : result.dropped_ids) map.clear(id);

  const Bytes image = map.serialize(next_segment_id_);
  write_file_atomic(dir_ / "idmap.0", image, counters_);
  result.bytes_written += image.size();

  // Readers that fetched a victim before the swap keep reading through an
  // already-open descriptor after the unlink.
  for (const auto& [id, seg] : victims) seg->handle();
  std::uint64_t old_bytes = 0;
  {
    std::unique_lock lock(mu_);
    for (const auto& [id, seg] : victims) segments_.erase(id);
    for (const auto& seg : created) segments_[seg->id()] = seg;
    idmap_ = std::move(map);
  }
  for (const auto& [id, seg] : victims) {
    old_bytes += fs::file_size(seg->path);
    fs::remove(meta_path(id));
    fs::remove(data_path(id));
    result.removed_segments.push_back(id);
  }
  sync_directory(seg_dir());
  std::uint64_t new_bytes = 0;
  for (const auto& seg : created) new_bytes += fs::file_size(seg->path);
  result.bytes_reclaimed = old_bytes > new_bytes ? old_bytes - new_bytes : 0;
  return result;
}

std::vector<SegmentInfo> VectorStore::segments() const {
  std::shared_lock lock(mu_);
  std::vector<SegmentInfo> out;
  for (const auto& [id, seg] : segments_) {
    SegmentInfo info;
    info.segment_id = id;
    info.state = seg->manifest.state;
    info.stored_count = seg->count;
    info.stale_count = seg->stale;
    info.data_bytes = fs::file_size(seg->path);
    info.meta_bytes = seg->meta_bytes;
    info.chunk_metadata_bytes = seg->manifest.chunk_metadata_bytes();
    info.garbage_ratio = info.stored_count == 0 ? 0.0 : static_cast<double>(info.stale_count) / info.stored_count;
    out.push_back(info);
  }
  return out;
}

std::uint64_t VectorStore::data_bytes() const {
  std::uint64_t n = 0;
  for (const auto& s : segments()) n += s.data_bytes;
  return n;
}

std::uint64_t VectorStore::metadata_bytes() const {
  std::uint64_t n = 0;
  for (const auto& s : segments()) n += s.meta_bytes;
  return n;
}

std::uint64_t VectorStore::idmap_bytes() const {
  const fs::path p = dir_ / "idmap.0";
  return fs::exists(p) ? fs::file_size(p) : 0;
}

}  // namespace dvs
