#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "dvs/common.hpp"

namespace dvs {

/// Product-quantization codebook: M subspaces of dim/M values, 256 centroids
/// each, stored as centroids[(m·256 + j)·sub_dim + t].
struct PQCodebook {
  static constexpr std::size_t kCentroids = 256;

  std::size_t dim = 0;
  std::size_t subspaces = 0;  // M
  std::vector<float> centroids;

  std::size_t sub_dim() const { return subspaces == 0 ? 0 : dim / subspaces; }
  const float* centroid(std::size_t m, std::size_t j) const {
    return centroids.data() + (m * kCentroids + j) * sub_dim();
  }

  /// `pq.codebook`: dim (u32), M (u32), then centroids as little-endian f32.
  Bytes serialize() const;
  static PQCodebook deserialize(ByteSpan data, const std::string& what);
};

/// Per-subspace k-means (k = 256, k-means++ seeding from `seed`, exactly
/// `iterations` Lloyd rounds). `sample` is row-major, count × dim.
PQCodebook train_pq(std::span<const float> sample, std::size_t dim, std::size_t subspaces, std::uint64_t seed,
                    unsigned iterations = 10);

/// Nearest centroid per subspace; ties go to the smaller index.
void pq_encode(std::span<const float> vector, const PQCodebook& codebook, std::span<std::uint8_t> code);
std::vector<std::uint8_t> pq_encode(std::span<const float> vector, const PQCodebook& codebook);
/// Encodes count rows at once into count × M bytes.
std::vector<std::uint8_t> pq_encode_all(std::span<const float> rows, const PQCodebook& codebook);
void pq_reconstruct(std::span<const std::uint8_t> code, const PQCodebook& codebook, std::span<float> out);

/// table[m·256 + j] = squared L2 between the query's m-th subvector and
/// centroid j.
class PQDistanceTable {
 public:
  PQDistanceTable(std::span<const float> query, const PQCodebook& codebook);

  float distance(const std::uint8_t* code) const {
    float acc = 0.0f;
    for (std::size_t m = 0; m < subspaces_; ++m) acc += table_[m * PQCodebook::kCentroids + code[m]];
    return acc;
  }
  float at(std::size_t m, std::size_t j) const { return table_[m * PQCodebook::kCentroids + j]; }
  std::size_t subspaces() const { return subspaces_; }

 private:
  std::size_t subspaces_;
  std::vector<float> table_;
};

PQDistanceTable pq_distance_table(std::span<const float> query, const PQCodebook& codebook);
float pq_asym_distance(std::span<const std::uint8_t> code, const PQDistanceTable& table);

}  // namespace dvs
