#include "dvs/index/pq.hpp"

#include <algorithm>
#include <limits>
#include <random>

#include "dvs/core/distance.hpp"

namespace dvs {

namespace {

constexpr std::size_t K = PQCodebook::kCentroids;

void check_dims(std::size_t dim, std::size_t subspaces) {
  if (dim == 0 || subspaces == 0 || dim % subspaces != 0) {
    throw UsageError("PQ: subspace count " + std::to_string(subspaces) + " must divide dim " + std::to_string(dim));
  }
}

std::size_t nearest(const float* x, const float* centroids, std::size_t sub) {
  std::size_t best = 0;
  float best_d = std::numeric_limits<float>::infinity();
  for (std::size_t j = 0; j < K; ++j) {
    const float d = l2_sq_short(x, centroids + j * sub, sub);
    if (d < best_d) {
      best_d = d;
      best = j;
    }
  }
  return best;
}

// k-means on one subspace; `points` is n × sub, contiguous.
std::vector<float> kmeans(const std::vector<float>& points, std::size_t n, std::size_t sub, std::mt19937_64& rng,
                          unsigned iterations) {
  std::vector<float> c(K * sub);
  std::vector<float> d2(n, std::numeric_limits<float>::infinity());
  std::size_t pick = static_cast<std::size_t>(rng() % n);
  for (std::size_t j = 0; j < K; ++j) {
    std::copy_n(points.data() + pick * sub, sub, c.data() + j * sub);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], l2_sq_short(points.data() + i * sub, c.data() + j * sub, sub));
      total += d2[i];
    }
    if (j + 1 == K) break;
    if (total <= 0.0) {
      // Fewer distinct points than centroids: repeat them in order.
      pick = (pick + 1) % n;
      continue;
    }
    double r = std::uniform_real_distribution<double>(0.0, total)(rng);
    pick = n - 1;
    for (std::size_t i = 0; i < n; ++i) {
      r -= d2[i];
      if (r < 0.0) {
        pick = i;
        break;
      }
    }
  }

  std::vector<std::uint32_t> assign(n);
  std::vector<double> sums(K * sub);
  std::vector<std::size_t> counts(K);
  for (unsigned it = 0; it < iterations; ++it) {
    for (std::size_t i = 0; i < n; ++i) assign[i] = static_cast<std::uint32_t>(nearest(points.data() + i * sub, c.data(), sub));
    std::fill(sums.begin(), sums.end(), 0.0);
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      ++counts[assign[i]];
      for (std::size_t t = 0; t < sub; ++t) sums[assign[i] * sub + t] += points[i * sub + t];
    }
    for (std::size_t j = 0; j < K; ++j) {
      if (counts[j] == 0) continue;  // empty cluster keeps its centroid
      for (std::size_t t = 0; t < sub; ++t) c[j * sub + t] = static_cast<float>(sums[j * sub + t] / counts[j]);
    }
  }
  return c;
}

}  // namespace

Bytes PQCodebook::serialize() const {
  Bytes out;
  out.reserve(8 + centroids.size() * 4);
  put_le(out, static_cast<std::uint32_t>(dim));
  put_le(out, static_cast<std::uint32_t>(subspaces));
  for (float f : centroids) put_f32(out, f);
  return out;
}

PQCodebook PQCodebook::deserialize(ByteSpan data, const std::string& what) {
  ByteReader r(data, what);
  PQCodebook cb;
  cb.dim = r.get<std::uint32_t>();
  cb.subspaces = r.get<std::uint32_t>();
  if (cb.dim == 0 || cb.subspaces == 0 || cb.dim % cb.subspaces != 0) throw FormatError(what + ": bad dimensions");
  const std::size_t n = K * cb.dim;
  if (r.remaining() != n * 4) throw FormatError(what + ": size does not match dimensions");
  const auto body = r.take(n * 4);
  cb.centroids.resize(n);
  for (std::size_t i = 0; i < n; ++i) cb.centroids[i] = load_f32(body.data() + 4 * i);
  return cb;
}

PQCodebook train_pq(std::span<const float> sample, std::size_t dim, std::size_t subspaces, std::uint64_t seed,
                    unsigned iterations) {
  check_dims(dim, subspaces);
  if (sample.empty() || sample.size() % dim != 0) throw UsageError("train_pq: sample is not a whole number of rows");
  const std::size_t n = sample.size() / dim;
  const std::size_t sub = dim / subspaces;
  PQCodebook cb;
  cb.dim = dim;
  cb.subspaces = subspaces;
  cb.centroids.resize(K * dim);
  std::mt19937_64 rng(seed);
  std::vector<float> points(n * sub);
  for (std::size_t m = 0; m < subspaces; ++m) {
    for (std::size_t i = 0; i < n; ++i) std::copy_n(sample.data() + i * dim + m * sub, sub, points.data() + i * sub);
    const auto c = kmeans(points, n, sub, rng, iterations);
    std::copy(c.begin(), c.end(), cb.centroids.begin() + m * K * sub);
  }
  return cb;
}

void pq_encode(std::span<const float> vector, const PQCodebook& cb, std::span<std::uint8_t> code) {
  if (vector.size() != cb.dim) throw UsageError("pq_encode: dimension mismatch");
  if (code.size() != cb.subspaces) throw UsageError("pq_encode: code buffer has wrong size");
  const std::size_t sub = cb.sub_dim();
  for (std::size_t m = 0; m < cb.subspaces; ++m) {
    code[m] = static_cast<std::uint8_t>(nearest(vector.data() + m * sub, cb.centroid(m, 0), sub));
  }
}

std::vector<std::uint8_t> pq_encode(std::span<const float> vector, const PQCodebook& cb) {
  std::vector<std::uint8_t> code(cb.subspaces);
  pq_encode(vector, cb, code);
  return code;
}

std::vector<std::uint8_t> pq_encode_all(std::span<const float> rows, const PQCodebook& cb) {
  if (rows.size() % cb.dim != 0) throw UsageError("pq_encode_all: rows are not a whole number of vectors");
  const std::size_t n = rows.size() / cb.dim;
  std::vector<std::uint8_t> codes(n * cb.subspaces);
  for (std::size_t i = 0; i < n; ++i) {
    pq_encode(rows.subspan(i * cb.dim, cb.dim), cb, std::span<std::uint8_t>(codes).subspan(i * cb.subspaces, cb.subspaces));
  }
  return codes;
}

void pq_reconstruct(std::span<const std::uint8_t> code, const PQCodebook& cb, std::span<float> out) {
  if (code.size() != cb.subspaces || out.size() != cb.dim) throw UsageError("pq_reconstruct: size mismatch");
  const std::size_t sub = cb.sub_dim();
  for (std::size_t m = 0; m < cb.subspaces; ++m) std::copy_n(cb.centroid(m, code[m]), sub, out.data() + m * sub);
}

PQDistanceTable::PQDistanceTable(std::span<const float> query, const PQCodebook& cb)
    : subspaces_(cb.subspaces), table_(cb.subspaces * K) {
  if (query.size() != cb.dim) throw UsageError("pq_distance_table: dimension mismatch");
  const std::size_t sub = cb.sub_dim();
  for (std::size_t m = 0; m < subspaces_; ++m) {
    for (std::size_t j = 0; j < K; ++j) table_[m * K + j] = l2_sq_short(query.data() + m * sub, cb.centroid(m, j), sub);
  }
}

PQDistanceTable pq_distance_table(std::span<const float> query, const PQCodebook& cb) {
  return PQDistanceTable(query, cb);
}

float pq_asym_distance(std::span<const std::uint8_t> code, const PQDistanceTable& table) {
  if (code.size() != table.subspaces()) throw UsageError("pq_asym_distance: code length mismatch");
  return table.distance(code.data());
}

}  // namespace dvs
