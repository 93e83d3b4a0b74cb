#pragma once

#include <map>
#include <memory>
#include <vector>

#include "dvs/layout/io.hpp"

namespace dvs {

using Adjacency = std::vector<std::vector<VectorId>>;

/// One logical graph block: the first vertex it holds and where it lives in
/// graph.data.
struct SparseEntry {
  VectorId boundary = 0;
  std::uint32_t physical = 0;
};

struct GraphUpdateStats {
  std::uint64_t blocks_written = 0;
  std::uint64_t bytes_written = 0;  // graph.data appends plus the new sparse file
  std::uint64_t affected_blocks = 0;
  std::uint64_t new_vertex_blocks = 0;
};

/// Block-packed Elias-Fano adjacency file (`graph.data`) with its sparse index
/// (`graph.sparse`). An instance is an immutable snapshot; updates produce a
/// new instance that shares the append-only data file.
class GraphStore {
 public:
  static constexpr std::uint32_t kMagic = 0x47535644;  // "DVSG"
  static constexpr std::size_t kHeaderBytes = 32;

  /// Writes a fresh graph. Lists are sorted; ids must be < adjacency.size().
  static void write(const std::filesystem::path& dir, const Adjacency& adjacency, VectorId entry_point,
                    std::uint32_t max_degree, IoCounters* counters = nullptr);
  static std::shared_ptr<GraphStore> open(const std::filesystem::path& dir, IoCounters* counters);

  std::uint32_t num_vertices() const { return num_vertices_; }
  VectorId entry_point() const { return entry_point_; }
  std::uint32_t max_degree() const { return max_degree_; }
  const std::vector<SparseEntry>& sparse() const { return sparse_; }
  std::uint32_t data_blocks() const { return data_blocks_; }
  std::uint32_t logical_blocks() const { return static_cast<std::uint32_t>(sparse_.size()); }
  /// Fraction of graph.data blocks no longer referenced by the sparse index.
  double garbage_ratio() const;

  std::vector<VectorId> read_neighbor_list(VectorId v) const;
  /// Serialized Elias-Fano bytes of `v` (empty for a vertex without edges).
  Bytes read_encoded(VectorId v) const;
  /// Sequential scan of every logical block.
  Adjacency read_all() const;

  /// Copy-on-write update: rewrites the logical blocks holding a changed
  /// vertex, appends vertices [num_vertices, new_num_vertices), and commits
  /// a new sparse index. An empty list clears a vertex. New blocks go to
  /// physical blocks this snapshot does not reference before the file grows,
  /// so no reader may still hold an older snapshot.
  std::shared_ptr<GraphStore> apply_update(const std::map<VectorId, std::vector<VectorId>>& changes,
                                           std::uint32_t new_num_vertices, VectorId entry_point,
                                           GraphUpdateStats* stats = nullptr) const;

  /// Frees the disk space of every block this snapshot does not reference.
  /// Same precondition as apply_update: no reader holds an older snapshot.
  void release_unreferenced() const;

  /// Rewrites graph.data holding only live blocks, in logical order.
  std::shared_ptr<GraphStore> compact(GraphUpdateStats* stats = nullptr) const;

  std::uint64_t data_file_bytes() const;
  std::uint64_t sparse_file_bytes() const;

 private:
  GraphStore() = default;

  static Bytes serialize_sparse(std::uint32_t num_vertices, VectorId entry, std::uint32_t max_degree,
                                std::uint32_t data_blocks, const std::vector<SparseEntry>& sparse);
  static std::shared_ptr<GraphStore> load(const std::filesystem::path& dir, IoCounters* counters);
  std::size_t block_of(VectorId v) const;
  void read_block(std::uint32_t physical, std::span<std::uint8_t> out) const;

  std::filesystem::path dir_;
  IoCounters* counters_ = nullptr;
  std::shared_ptr<File> file_;
  std::uint32_t num_vertices_ = 0;
  VectorId entry_point_ = kInvalidId;
  std::uint32_t max_degree_ = 0;
  std::uint32_t data_blocks_ = 0;
  std::vector<SparseEntry> sparse_;
};

}  // namespace dvs
