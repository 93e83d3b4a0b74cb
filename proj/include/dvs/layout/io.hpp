#pragma once

#include <atomic>
#include <filesystem>
#include <memory>

#include "dvs/common.hpp"

namespace dvs {

/// Read/write byte accounting, split by file class so tests can tell startup
/// metadata loads apart from data-path reads.
struct IoCounters {
  std::atomic<std::uint64_t> metadata_bytes_read{0};
  std::atomic<std::uint64_t> vector_bytes_read{0};
  std::atomic<std::uint64_t> vector_reads{0};
  std::atomic<std::uint64_t> graph_bytes_read{0};
  std::atomic<std::uint64_t> graph_reads{0};
  std::atomic<std::uint64_t> bytes_written{0};

  void reset() {
    metadata_bytes_read = 0;
    vector_bytes_read = 0;
    vector_reads = 0;
    graph_bytes_read = 0;
    graph_reads = 0;
    bytes_written = 0;
  }
};

enum class FileClass { kMetadata, kVector, kGraph };

/// Positional-I/O file handle. Reads are safe from many threads.
class File {
 public:
  enum class Mode { kRead, kReadWrite, kCreate };

  File(const std::filesystem::path& path, Mode mode, FileClass cls, IoCounters* counters);
  ~File();
  File(const File&) = delete;
  File& operator=(const File&) = delete;

  void read_exact(std::uint64_t offset, std::span<std::uint8_t> out) const;
  void write_at(std::uint64_t offset, ByteSpan data);
  void append(ByteSpan data);
  void sync();
  void truncate(std::uint64_t size);
  /// Frees the disk space of a byte range, which then reads as zeros. Returns
  /// false when the filesystem cannot do it; the data is then left as is.
  bool punch_hole(std::uint64_t offset, std::uint64_t length);
  std::uint64_t size() const;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  int fd_ = -1;
  FileClass class_;
  IoCounters* counters_;
};

/// Bytes a file occupies: its size, or less when it has holes.
std::uint64_t disk_usage(const std::filesystem::path& path);

/// Reads a whole file, charging the bytes to `cls`.
Bytes read_whole_file(const std::filesystem::path& path, FileClass cls, IoCounters* counters);
/// Write-new-then-rename: `path` either keeps its old content or gets `data`.
void write_file_atomic(const std::filesystem::path& path, ByteSpan data, IoCounters* counters = nullptr);
/// Writes and fsyncs `path` without renaming.
void write_file_durable(const std::filesystem::path& path, ByteSpan data, IoCounters* counters = nullptr);
void sync_directory(const std::filesystem::path& dir);
void rename_durable(const std::filesystem::path& from, const std::filesystem::path& to);

}  // namespace dvs
