#pragma once

#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

#include "dvs/common.hpp"

namespace dvs {

enum class ElementType : std::uint8_t {
  kUint8 = 0,
  kInt8 = 1,
  kFloat32 = 2,
  kInt32 = 3,  // ivecs ground-truth files only
};

std::size_t element_width(ElementType type);
std::string_view element_type_name(ElementType type);
ElementType parse_element_type(std::string_view name);

enum class VecsFormat { kFvecs, kBvecs, kIvecs };

VecsFormat parse_vecs_format(std::string_view name);
/// Infers the container format from the file extension.
VecsFormat vecs_format_from_path(const std::filesystem::path& path);
ElementType element_type_for(VecsFormat format);

/// Non-owning view of one stored vector.
struct VectorView {
  VectorId id = kInvalidId;
  ElementType type = ElementType::kFloat32;
  std::size_t dim = 0;
  ByteSpan bytes;

  void to_floats(std::span<float> out) const;
  std::vector<float> to_floats() const;
};

/// Owning vector with identity.
struct VectorRecord {
  VectorId id = kInvalidId;
  ElementType type = ElementType::kFloat32;
  std::size_t dim = 0;
  Bytes bytes;

  VectorView view() const { return {id, type, dim, bytes}; }
  static VectorRecord from_floats(VectorId id, std::span<const float> values, ElementType type);
};

/// Dense row-major collection of fixed-width vectors; record i has id i.
class Dataset {
 public:
  Dataset() = default;
  Dataset(std::size_t dim, ElementType type);

  std::size_t dim() const { return dim_; }
  ElementType type() const { return type_; }
  std::size_t vector_bytes() const { return dim_ * element_width(type_); }
  std::size_t size() const { return vector_bytes() == 0 ? 0 : data_.size() / vector_bytes(); }
  bool empty() const { return size() == 0; }

  VectorView operator[](std::size_t i) const;
  void append(ByteSpan bytes);
  void reserve(std::size_t n) { data_.reserve(n * vector_bytes()); }
  const Bytes& raw() const { return data_; }

  /// Row-major float copy of the whole dataset (count × dim).
  std::vector<float> to_float_matrix() const;
  /// Copies rows [first, first + count) into a new dataset.
  Dataset slice(std::size_t first, std::size_t count) const;

 private:
  std::size_t dim_ = 0;
  ElementType type_ = ElementType::kFloat32;
  Bytes data_;
};

Dataset load_dataset(const std::filesystem::path& path, VecsFormat format);
void save_dataset(const std::filesystem::path& path, const Dataset& dataset, VecsFormat format);

/// Reads an ivecs ground-truth file as per-query id lists.
std::vector<std::vector<VectorId>> load_id_lists(const std::filesystem::path& path);
void save_id_lists(const std::filesystem::path& path, const std::vector<std::vector<VectorId>>& lists);

/// Per-dimension Gaussian values around dimension-specific means, rounded and
/// clamped to [0, 255] (stored as-is for float32, like the SIFT files).
Dataset generate_structured(std::size_t count, std::size_t dim, ElementType type, std::uint64_t seed,
                            double stddev = 10.0);
/// Same per-dimension means, but each row is drawn around one of `clusters`
/// seeded centers (center offset ~ N(0, spread), row noise ~ N(0, stddev)).
/// Rows are drawn in order, so a prefix and its continuation share centers.
Dataset generate_clustered(std::size_t count, std::size_t dim, ElementType type, std::uint64_t seed,
                           std::size_t clusters = 64, double spread = 8.0, double stddev = 6.0);
/// Uniformly random payload bytes (float32 values drawn uniformly instead,
/// so the data stays finite).
Dataset generate_uniform(std::size_t count, std::size_t dim, ElementType type, std::uint64_t seed);

}  // namespace dvs
