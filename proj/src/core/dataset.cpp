#include "dvs/core/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

namespace dvs {

std::size_t element_width(ElementType type) {
  switch (type) {
    case ElementType::kUint8:
    case ElementType::kInt8:
      return 1;
    case ElementType::kFloat32:
    case ElementType::kInt32:
      return 4;
  }
  throw UsageError("unknown element type");
}

std::string_view element_type_name(ElementType type) {
  switch (type) {
    case ElementType::kUint8:
      return "uint8";
    case ElementType::kInt8:
      return "int8";
    case ElementType::kFloat32:
      return "float32";
    case ElementType::kInt32:
      return "int32";
  }
  return "unknown";
}

ElementType parse_element_type(std::string_view name) {
  if (name == "uint8" || name == "u8") return ElementType::kUint8;
  if (name == "int8" || name == "i8") return ElementType::kInt8;
  if (name == "float32" || name == "f32" || name == "float") return ElementType::kFloat32;
  if (name == "int32") return ElementType::kInt32;
  throw UsageError("unknown element type '" + std::string(name) + "'");
}

VecsFormat parse_vecs_format(std::string_view name) {
  if (name == "fvecs") return VecsFormat::kFvecs;
  if (name == "bvecs") return VecsFormat::kBvecs;
  if (name == "ivecs") return VecsFormat::kIvecs;
  throw UsageError("unknown vector file format '" + std::string(name) + "'");
}

VecsFormat vecs_format_from_path(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  if (ext.size() < 2) throw UsageError("cannot infer vector format of " + path.string());
  return parse_vecs_format(ext.substr(1));
}

ElementType element_type_for(VecsFormat format) {
  switch (format) {
    case VecsFormat::kFvecs:
      return ElementType::kFloat32;
    case VecsFormat::kBvecs:
      return ElementType::kUint8;
    case VecsFormat::kIvecs:
      return ElementType::kInt32;
  }
  throw UsageError("unknown vector file format");
}

void VectorView::to_floats(std::span<float> out) const {
  if (out.size() != dim) throw UsageError("float buffer size does not match dim");
  const std::uint8_t* p = bytes.data();
  switch (type) {
    case ElementType::kUint8:
      for (std::size_t i = 0; i < dim; ++i) out[i] = static_cast<float>(p[i]);
      break;
    case ElementType::kInt8:
      for (std::size_t i = 0; i < dim; ++i) out[i] = static_cast<float>(static_cast<std::int8_t>(p[i]));
      break;
    case ElementType::kFloat32:
      std::memcpy(out.data(), p, dim * sizeof(float));
      break;
    case ElementType::kInt32:
      for (std::size_t i = 0; i < dim; ++i) out[i] = static_cast<float>(load_le<std::int32_t>(p + 4 * i));
      break;
  }
}

std::vector<float> VectorView::to_floats() const {
  std::vector<float> out(dim);
  to_floats(out);
  return out;
}

VectorRecord VectorRecord::from_floats(VectorId id, std::span<const float> values, ElementType type) {
  VectorRecord r{id, type, values.size(), {}};
  r.bytes.resize(values.size() * element_width(type));
  for (std::size_t i = 0; i < values.size(); ++i) {
    switch (type) {
      case ElementType::kUint8:
        r.bytes[i] = static_cast<std::uint8_t>(std::clamp(std::lround(values[i]), 0L, 255L));
        break;
      case ElementType::kInt8:
        r.bytes[i] = static_cast<std::uint8_t>(static_cast<std::int8_t>(std::clamp(std::lround(values[i]), -128L, 127L)));
        break;
      case ElementType::kFloat32:
        std::memcpy(r.bytes.data() + 4 * i, &values[i], 4);
        break;
      case ElementType::kInt32:
        store_le(r.bytes.data() + 4 * i, static_cast<std::int32_t>(std::lround(values[i])));
        break;
    }
  }
  return r;
}

Dataset::Dataset(std::size_t dim, ElementType type) : dim_(dim), type_(type) {
  if (dim == 0) throw UsageError("dataset dim must be >= 1");
}

VectorView Dataset::operator[](std::size_t i) const {
  const std::size_t v = vector_bytes();
  return {static_cast<VectorId>(i), type_, dim_, ByteSpan(data_).subspan(i * v, v)};
}

void Dataset::append(ByteSpan bytes) {
  if (bytes.size() != vector_bytes()) {
    throw UsageError("vector has " + std::to_string(bytes.size()) + " bytes, expected " +
                     std::to_string(vector_bytes()));
  }
  data_.insert(data_.end(), bytes.begin(), bytes.end());
}

std::vector<float> Dataset::to_float_matrix() const {
  std::vector<float> out(size() * dim_);
  for (std::size_t i = 0; i < size(); ++i) {
    (*this)[i].to_floats(std::span<float>(out).subspan(i * dim_, dim_));
  }
  return out;
}

Dataset Dataset::slice(std::size_t first, std::size_t count) const {
  if (first + count > size()) throw UsageError("dataset slice out of range");
  Dataset out(dim_, type_);
  const std::size_t v = vector_bytes();
  out.data_.assign(data_.begin() + static_cast<std::ptrdiff_t>(first * v),
                   data_.begin() + static_cast<std::ptrdiff_t>((first + count) * v));
  return out;
}

namespace {

Bytes read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return Bytes(std::istreambuf_iterator<char>(in), {});
}

void write_file(const std::filesystem::path& path, const Bytes& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot create " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace

Dataset load_dataset(const std::filesystem::path& path, VecsFormat format) {
  const Bytes file = read_file(path);
  const ElementType type = element_type_for(format);
  const std::size_t width = element_width(type);
  Dataset out;
  std::size_t pos = 0;
  std::uint32_t dim = 0;
  while (pos < file.size()) {
    if (file.size() - pos < 4) {
      throw FormatError(path.string() + ": truncated record header at byte offset " + std::to_string(pos));
    }
    const auto d = load_le<std::uint32_t>(file.data() + pos);
    if (d == 0) throw FormatError(path.string() + ": zero dimension at byte offset " + std::to_string(pos));
    if (dim == 0) {
      dim = d;
      out = Dataset(dim, type);
      out.reserve(file.size() / (4 + dim * width));
    } else if (d != dim) {
      throw FormatError(path.string() + ": inconsistent dim " + std::to_string(d) + " (expected " +
                        std::to_string(dim) + ") at byte offset " + std::to_string(pos));
    }
    const std::size_t payload = static_cast<std::size_t>(dim) * width;
    if (file.size() - pos - 4 < payload) {
      throw FormatError(path.string() + ": truncated record at byte offset " + std::to_string(pos));
    }
    out.append(ByteSpan(file).subspan(pos + 4, payload));
    pos += 4 + payload;
  }
  if (dim == 0) return Dataset(1, type);
  return out;
}

void save_dataset(const std::filesystem::path& path, const Dataset& dataset, VecsFormat format) {
  if (element_type_for(format) != dataset.type() &&
      !(format == VecsFormat::kBvecs && dataset.type() == ElementType::kInt8)) {
    throw UsageError("dataset element type does not match output format");
  }
  Bytes out;
  out.reserve(dataset.size() * (4 + dataset.vector_bytes()));
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    put_le(out, static_cast<std::uint32_t>(dataset.dim()));
    const auto v = dataset[i];
    out.insert(out.end(), v.bytes.begin(), v.bytes.end());
  }
  write_file(path, out);
}

std::vector<std::vector<VectorId>> load_id_lists(const std::filesystem::path& path) {
  const Dataset d = load_dataset(path, VecsFormat::kIvecs);
  std::vector<std::vector<VectorId>> out(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    const auto row = d[i];
    out[i].resize(row.dim);
    for (std::size_t j = 0; j < row.dim; ++j) out[i][j] = load_le<std::uint32_t>(row.bytes.data() + 4 * j);
  }
  return out;
}

void save_id_lists(const std::filesystem::path& path, const std::vector<std::vector<VectorId>>& lists) {
  Bytes out;
  for (const auto& row : lists) {
    put_le(out, static_cast<std::uint32_t>(row.size()));
    for (VectorId id : row) put_le(out, id);
  }
  write_file(path, out);
}

Dataset generate_structured(std::size_t count, std::size_t dim, ElementType type, std::uint64_t seed,
                            double stddev) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> mean_dist(type == ElementType::kInt8 ? -100.0 : 20.0,
                                                   type == ElementType::kInt8 ? 100.0 : 235.0);
  std::vector<double> means(dim);
  for (auto& m : means) m = mean_dist(rng);
  const double lo = type == ElementType::kInt8 ? -128.0 : 0.0;
  const double hi = type == ElementType::kInt8 ? 127.0 : 255.0;

  Dataset out(dim, type);
  out.reserve(count);
  std::normal_distribution<double> noise(0.0, stddev);
  std::vector<float> row(dim);
  for (std::size_t i = 0; i < count; ++i) {
    for (std::size_t d = 0; d < dim; ++d) {
      row[d] = static_cast<float>(std::clamp(std::round(means[d] + noise(rng)), lo, hi));
    }
    out.append(VectorRecord::from_floats(static_cast<VectorId>(i), row, type).bytes);
  }
  return out;
}

Dataset generate_clustered(std::size_t count, std::size_t dim, ElementType type, std::uint64_t seed,
                           std::size_t clusters, double spread, double stddev) {
  if (clusters == 0) throw UsageError("generate_clustered: need at least one cluster");
  std::mt19937_64 rng(seed);
  const bool signed_type = type == ElementType::kInt8;
  std::uniform_real_distribution<double> mean_dist(signed_type ? -100.0 : 20.0, signed_type ? 100.0 : 235.0);
  std::vector<double> means(dim);
  for (auto& m : means) m = mean_dist(rng);
  std::normal_distribution<double> offset(0.0, spread);
  std::vector<double> centers(clusters * dim);
  for (std::size_t c = 0; c < clusters; ++c) {
    for (std::size_t d = 0; d < dim; ++d) centers[c * dim + d] = means[d] + offset(rng);
  }
  const double lo = signed_type ? -128.0 : 0.0;
  const double hi = signed_type ? 127.0 : 255.0;

  Dataset out(dim, type);
  out.reserve(count);
  std::normal_distribution<double> noise(0.0, stddev);
  std::vector<float> row(dim);
  for (std::size_t i = 0; i < count; ++i) {
    const double* center = centers.data() + (rng() % clusters) * dim;
    for (std::size_t d = 0; d < dim; ++d) {
      row[d] = static_cast<float>(std::clamp(std::round(center[d] + noise(rng)), lo, hi));
    }
    out.append(VectorRecord::from_floats(static_cast<VectorId>(i), row, type).bytes);
  }
  return out;
}

Dataset generate_uniform(std::size_t count, std::size_t dim, ElementType type, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Dataset out(dim, type);
  out.reserve(count);
  Bytes row(out.vector_bytes());
  std::uniform_real_distribution<float> fdist(-1.0f, 1.0f);
  for (std::size_t i = 0; i < count; ++i) {
    if (type == ElementType::kFloat32) {
      for (std::size_t d = 0; d < dim; ++d) {
        const float f = fdist(rng);
        std::memcpy(row.data() + 4 * d, &f, 4);
      }
    } else {
      for (auto& b : row) b = static_cast<std::uint8_t>(rng() & 0xFF);
    }
    out.append(row);
  }
  return out;
}

}  // namespace dvs
