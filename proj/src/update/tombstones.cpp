#include "dvs/update/tombstones.hpp"

namespace dvs {

namespace fs = std::filesystem;

TombstoneSet TombstoneSet::open(const fs::path& dir, IoCounters* counters) {
  TombstoneSet t;
  t.path_ = dir / kFileName;
  t.counters_ = counters;
  if (!fs::exists(t.path_)) write_file_atomic(t.path_, {}, counters);
  t.file_ = std::make_shared<File>(t.path_, File::Mode::kReadWrite, FileClass::kMetadata, counters);
  const std::uint64_t size = t.file_->size();
  const std::uint64_t whole = size / 4 * 4;
  if (whole != size) t.file_->truncate(whole);
  Bytes raw(whole);
  if (whole) t.file_->read_exact(0, raw);
  for (std::uint64_t off = 0; off < whole; off += 4) t.insert(load_le<std::uint32_t>(raw.data() + off));
  return t;
}

void TombstoneSet::log(VectorId id) {
  Bytes rec;
  put_le(rec, id);
  file_->append(rec);
  file_->sync();
}

void TombstoneSet::insert(VectorId id) {
  if (id >= flags_.size()) flags_.resize(std::max<std::size_t>(std::size_t{id} + 1, flags_.size() * 2), 0);
  if (!flags_[id]) {
    flags_[id] = 1;
    ++count_;
  }
}

std::vector<VectorId> TombstoneSet::ids() const {
  std::vector<VectorId> out;
  out.reserve(count_);
  for (VectorId i = 0; i < flags_.size(); ++i) {
    if (flags_[i]) out.push_back(i);
  }
  return out;
}

void TombstoneSet::erase(std::span<const VectorId> ids) {
  for (auto id : ids) {
    if (contains(id)) {
      flags_[id] = 0;
      --count_;
    }
  }
  Bytes image;
  for (auto id : this->ids()) put_le(image, id);
  write_file_atomic(path_, image, counters_);
  file_ = std::make_shared<File>(path_, File::Mode::kReadWrite, FileClass::kMetadata, counters_);
}

std::uint64_t TombstoneSet::file_bytes() const { return file_->size(); }

}  // namespace dvs
