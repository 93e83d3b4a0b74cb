#include "dvs/layout/io.hpp"

#include <fcntl.h>
#include <linux/falloc.h>
#include <sys/stat.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>

namespace dvs {

namespace {

std::string errno_text() { return std::strerror(errno); }

void charge_read(FileClass cls, IoCounters* c, std::uint64_t n) {
  if (c == nullptr) return;
  switch (cls) {
    case FileClass::kMetadata:
      c->metadata_bytes_read += n;
      break;
    case FileClass::kVector:
      c->vector_bytes_read += n;
      ++c->vector_reads;
      break;
    case FileClass::kGraph:
      c->graph_bytes_read += n;
      ++c->graph_reads;
      break;
  }
}

}  // namespace

File::File(const std::filesystem::path& path, Mode mode, FileClass cls, IoCounters* counters)
    : path_(path), class_(cls), counters_(counters) {
  int flags = O_CLOEXEC;
  switch (mode) {
    case Mode::kRead:
      flags |= O_RDONLY;
      break;
    case Mode::kReadWrite:
      flags |= O_RDWR;
      break;
    case Mode::kCreate:
      flags |= O_RDWR | O_CREAT | O_TRUNC;
      break;
  }
  fd_ = ::open(path.c_str(), flags, 0644);
  if (fd_ < 0) throw IoError("cannot open " + path.string() + ": " + errno_text());
}

File::~File() {
  if (fd_ >= 0) ::close(fd_);
}

void File::read_exact(std::uint64_t offset, std::span<std::uint8_t> out) const {
  std::size_t done = 0;
  while (done < out.size()) {
    const ssize_t n = ::pread(fd_, out.data() + done, out.size() - done, static_cast<off_t>(offset + done));
    if (n < 0) {
      if (errno == EINTR) continue;
      throw IoError("read failed on " + path_.string() + ": " + errno_text());
    }
    if (n == 0) {
      throw CorruptionError("short read on " + path_.string() + " at byte offset " + std::to_string(offset + done));
    }
    done += static_cast<std::size_t>(n);
  }
  charge_read(class_, counters_, out.size());
}

void File::write_at(std::uint64_t offset, ByteSpan data) {
  std::size_t done = 0;
  while (done < data.size()) {
    const ssize_t n = ::pwrite(fd_, data.data() + done, data.size() - done, static_cast<off_t>(offset + done));
    if (n < 0) {
      if (errno == EINTR) continue;
      throw IoError("write failed on " + path_.string() + ": " + errno_text());
    }
    done += static_cast<std::size_t>(n);
  }
  if (counters_ != nullptr) counters_->bytes_written += data.size();
}

void File::append(ByteSpan data) { write_at(size(), data); }

void File::sync() {
  if (::fdatasync(fd_) != 0) throw IoError("fsync failed on " + path_.string() + ": " + errno_text());
}

void File::truncate(std::uint64_t size) {
  if (::ftruncate(fd_, static_cast<off_t>(size)) != 0) {
    throw IoError("truncate failed on " + path_.string() + ": " + errno_text());
  }
}

bool File::punch_hole(std::uint64_t offset, std::uint64_t length) {
  if (length == 0) return true;
  return ::fallocate(fd_, FALLOC_FL_PUNCH_HOLE | FALLOC_FL_KEEP_SIZE, static_cast<off_t>(offset),
                     static_cast<off_t>(length)) == 0;
}

std::uint64_t File::size() const {
  struct stat st {};
  if (::fstat(fd_, &st) != 0) throw IoError("stat failed on " + path_.string() + ": " + errno_text());
  return static_cast<std::uint64_t>(st.st_size);
}

std::uint64_t disk_usage(const std::filesystem::path& path) {
  struct stat st {};
  if (::stat(path.c_str(), &st) != 0) throw IoError("stat failed on " + path.string() + ": " + errno_text());
  return std::min(static_cast<std::uint64_t>(st.st_size), static_cast<std::uint64_t>(st.st_blocks) * 512);
}

Bytes read_whole_file(const std::filesystem::path& path, FileClass cls, IoCounters* counters) {
  File f(path, File::Mode::kRead, cls, counters);
  Bytes out(f.size());
  f.read_exact(0, out);
  return out;
}

void write_file_durable(const std::filesystem::path& path, ByteSpan data, IoCounters* counters) {
  File f(path, File::Mode::kCreate, FileClass::kMetadata, counters);
  f.write_at(0, data);
  f.sync();
}

void sync_directory(const std::filesystem::path& dir) {
  const int fd = ::open(dir.c_str(), O_RDONLY | O_DIRECTORY | O_CLOEXEC);
  if (fd < 0) return;
  ::fsync(fd);
  ::close(fd);
}

void rename_durable(const std::filesystem::path& from, const std::filesystem::path& to) {
  std::error_code ec;
  std::filesystem::rename(from, to, ec);
  if (ec) throw IoError("rename " + from.string() + " -> " + to.string() + ": " + ec.message());
  sync_directory(to.parent_path());
}

void write_file_atomic(const std::filesystem::path& path, ByteSpan data, IoCounters* counters) {
  auto tmp = path;
  tmp += ".tmp";
  write_file_durable(tmp, data, counters);
  rename_durable(tmp, path);
}

}  // namespace dvs
