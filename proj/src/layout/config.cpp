#include "dvs/layout/config.hpp"

#include <algorithm>
#include <cmath>

#include "dvs/layout/io.hpp"

namespace dvs {

double chunk_metadata_overhead(double chunk_bytes, double alpha, std::size_t vector_bytes) {
  if (chunk_bytes <= 0.0) throw UsageError("chunk size must be positive");
  return (static_cast<double>(vector_bytes) + 12.0) / chunk_bytes + alpha / 1024.0;
}

double chunk_capacity_for_budget_exact(double beta, double alpha, std::size_t vector_bytes) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw UsageError("alpha must be in (0, 1]");
  const double floor_overhead = alpha / 1024.0;
  if (!(beta > floor_overhead)) {
    throw InfeasibleError("metadata budget beta=" + std::to_string(beta) + " is not above alpha/1024=" +
                          std::to_string(floor_overhead));
  }
  return (static_cast<double>(vector_bytes) + 12.0) / (beta - floor_overhead);
}

std::uint64_t chunk_capacity_for_budget(double beta, double alpha, std::size_t vector_bytes) {
  if (vector_bytes == 0) throw UsageError("vector size must be positive");
  const double exact = chunk_capacity_for_budget_exact(beta, alpha, vector_bytes);
  const auto vectors = static_cast<std::uint64_t>(std::floor(exact / static_cast<double>(vector_bytes)));
  return vectors * vector_bytes;
}

std::uint32_t StoreConfig::resolved_pq_subspaces() const {
  if (pq_subspaces != 0) return pq_subspaces;
  std::uint32_t m = std::clamp<std::uint32_t>(static_cast<std::uint32_t>(dim / 4), 1, 64);
  while (dim % m != 0) --m;
  return m;
}

void StoreConfig::finalize() {
  validate();
  const std::size_t v = vector_bytes();
  if (segment_capacity == 0) {
    segment_capacity = static_cast<std::uint32_t>(std::max<std::uint64_t>(1, segment_bytes / v));
  }
  if (chunk_vectors == 0) {
    const std::uint64_t c = beta ? chunk_capacity_for_budget(*beta, alpha, v) : chunk_bytes;
    chunk_vectors = static_cast<std::uint32_t>(std::clamp<std::uint64_t>(c / v, 1, segment_capacity));
  }
}

void StoreConfig::validate() const {
  if (dim == 0) throw UsageError("dim must be >= 1");
  if (element_type == ElementType::kInt32) throw UsageError("int32 vectors cannot be stored");
  if (vector_bytes() > kMaxVectorBytes) {
    throw UsageError("vector size " + std::to_string(vector_bytes()) + " exceeds " + std::to_string(kMaxVectorBytes) +
                     " bytes");
  }
  if (segment_bytes < vector_bytes()) throw UsageError("segment size smaller than one vector");
  if (max_degree < 2 || max_degree > 2047) throw UsageError("R must be in [2, 2047]");
  if (build_list < 1) throw UsageError("L_b must be >= 1");
  if (!(prune_alpha >= 1.0f)) throw UsageError("prune alpha must be >= 1");
  if (!(alpha > 0.0 && alpha <= 1.0)) throw UsageError("alpha must be in (0, 1]");
  if (!(sample_fraction > 0.0 && sample_fraction <= 1.0)) throw UsageError("sample fraction must be in (0, 1]");
  if (dim % resolved_pq_subspaces() != 0) throw UsageError("PQ subspace count must divide dim");
  if (!(gc_threshold >= 0.0 && gc_threshold <= 1.0)) throw UsageError("GC threshold must be in [0, 1]");
  if (!(merge_threshold_fraction > 0.0)) throw UsageError("merge threshold must be positive");
  if (beta) chunk_capacity_for_budget_exact(*beta, alpha, vector_bytes());
}

nlohmann::json StoreConfig::to_json() const {
  nlohmann::json j;
  j["version"] = 1;
  j["dim"] = dim;
  j["element_type"] = std::string(element_type_name(element_type));
  j["vector_bytes"] = vector_bytes();
  j["segment_bytes"] = segment_bytes;
  j["segment_capacity"] = segment_capacity;
  j["chunk_bytes"] = chunk_bytes;
  j["chunk_vectors"] = chunk_vectors;
  j["beta"] = beta ? nlohmann::json(*beta) : nlohmann::json(nullptr);
  j["alpha"] = alpha;
  j["sample_fraction"] = sample_fraction;
  j["R"] = max_degree;
  j["L_b"] = build_list;
  j["prune_alpha"] = prune_alpha;
  j["pq_subspaces"] = resolved_pq_subspaces();
  j["pq_train_sample"] = pq_train_sample;
  j["seed"] = seed;
  j["merge_threshold_fraction"] = merge_threshold_fraction;
  j["gc_threshold"] = gc_threshold;
  j["graph_garbage_threshold"] = graph_garbage_threshold;
  j["entry_point"] = entry_point;
  return j;
}

StoreConfig StoreConfig::from_json(const nlohmann::json& j) {
  try {
    StoreConfig c;
    c.dim = j.at("dim").get<std::size_t>();
    c.element_type = parse_element_type(j.at("element_type").get<std::string>());
    c.segment_bytes = j.at("segment_bytes").get<std::uint64_t>();
    c.segment_capacity = j.at("segment_capacity").get<std::uint32_t>();
    c.chunk_bytes = j.at("chunk_bytes").get<std::uint64_t>();
    c.chunk_vectors = j.at("chunk_vectors").get<std::uint32_t>();
    if (!j.at("beta").is_null()) c.beta = j.at("beta").get<double>();
    c.alpha = j.at("alpha").get<double>();
    c.sample_fraction = j.at("sample_fraction").get<double>();
    c.max_degree = j.at("R").get<std::uint32_t>();
    c.build_list = j.at("L_b").get<std::uint32_t>();
    c.prune_alpha = j.at("prune_alpha").get<float>();
    c.pq_subspaces = j.at("pq_subspaces").get<std::uint32_t>();
    c.pq_train_sample = j.at("pq_train_sample").get<std::uint32_t>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.merge_threshold_fraction = j.at("merge_threshold_fraction").get<double>();
    c.gc_threshold = j.at("gc_threshold").get<double>();
    c.graph_garbage_threshold = j.at("graph_garbage_threshold").get<double>();
    c.entry_point = j.at("entry_point").get<VectorId>();
    if (j.at("vector_bytes").get<std::size_t>() != c.vector_bytes()) throw FormatError("vector_bytes mismatch");
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("store.json: ") + e.what());
  }
}

void StoreConfig::save(const std::filesystem::path& dir) const {
  const std::string text = to_json().dump(2) + "\n";
  write_file_atomic(dir / "store.json", ByteSpan(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

StoreConfig StoreConfig::load(const std::filesystem::path& dir, IoCounters* counters) {
  const auto path = dir / "store.json";
  if (!std::filesystem::exists(path)) throw FormatError("startup: missing " + path.string());
  const Bytes text = read_whole_file(path, FileClass::kMetadata, counters);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text.begin(), text.end());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("startup: corrupt " + path.string() + ": " + e.what());
  }
  return from_json(j);
}

}  // namespace dvs
