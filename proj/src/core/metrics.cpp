#include <algorithm>
#include <array>
#include <cmath>

#include "dvs/codec/entropy.hpp"
#include "dvs/core/characterize.hpp"
#include "dvs/core/distance.hpp"

#if defined(__x86_64__)
#include <immintrin.h>
#endif
#include "dvs/core/knn.hpp"

namespace dvs {

namespace {

float l2_sq_portable(const float* a, const float* b, std::size_t dim) {
  float lane[8] = {};
  std::size_t i = 0;
  for (; i + 8 <= dim; i += 8) {
    for (std::size_t j = 0; j < 8; ++j) {
      const float d = a[i + j] - b[i + j];
      lane[j] += d * d;
    }
  }
  float acc = ((lane[0] + lane[4]) + (lane[1] + lane[5])) + ((lane[2] + lane[6]) + (lane[3] + lane[7]));
  for (; i < dim; ++i) {
    const float d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

#if defined(__x86_64__)
__attribute__((target("avx2,fma"))) float l2_sq_avx2(const float* a, const float* b, std::size_t dim) {
  __m256 s0 = _mm256_setzero_ps(), s1 = _mm256_setzero_ps(), s2 = _mm256_setzero_ps(), s3 = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 32 <= dim; i += 32) {
    const __m256 d0 = _mm256_sub_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i));
    const __m256 d1 = _mm256_sub_ps(_mm256_loadu_ps(a + i + 8), _mm256_loadu_ps(b + i + 8));
    const __m256 d2 = _mm256_sub_ps(_mm256_loadu_ps(a + i + 16), _mm256_loadu_ps(b + i + 16));
    const __m256 d3 = _mm256_sub_ps(_mm256_loadu_ps(a + i + 24), _mm256_loadu_ps(b + i + 24));
    s0 = _mm256_fmadd_ps(d0, d0, s0);
    s1 = _mm256_fmadd_ps(d1, d1, s1);
    s2 = _mm256_fmadd_ps(d2, d2, s2);
    s3 = _mm256_fmadd_ps(d3, d3, s3);
  }
  s0 = _mm256_add_ps(s0, s2);
  s1 = _mm256_add_ps(s1, s3);
  for (; i + 8 <= dim; i += 8) {
    const __m256 d = _mm256_sub_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i));
    s0 = _mm256_fmadd_ps(d, d, s0);
  }
  const __m256 s = _mm256_add_ps(s0, s1);
  __m128 h = _mm_add_ps(_mm256_castps256_ps128(s), _mm256_extractf128_ps(s, 1));
  h = _mm_add_ps(h, _mm_movehl_ps(h, h));
  h = _mm_add_ss(h, _mm_shuffle_ps(h, h, 1));
  float acc = _mm_cvtss_f32(h);
  for (; i < dim; ++i) {
    const float d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}
#endif

using L2Fn = float (*)(const float*, const float*, std::size_t);

L2Fn pick_l2() {
#if defined(__x86_64__)
  if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma")) return l2_sq_avx2;
#endif
  return l2_sq_portable;
}

const L2Fn l2_impl = pick_l2();

}  // namespace

float l2_sq(const float* a, const float* b, std::size_t dim) { return l2_impl(a, b, dim); }

float l2_distance(const VectorView& a, const VectorView& b) {
  if (a.dim != b.dim || a.type != b.type) {
    throw UsageError("l2_distance: dimension or element type mismatch (" + std::to_string(a.dim) + " vs " +
                     std::to_string(b.dim) + ")");
  }
  const auto fa = a.to_floats();
  const auto fb = b.to_floats();
  return l2_sq(fa, fb);
}

GroundTruthRow brute_force_knn(const Dataset& dataset, const VectorView& query, std::size_t k,
                               const std::unordered_set<VectorId>& excluded) {
  if (query.dim != dataset.dim()) throw UsageError("brute_force_knn: query dim mismatch");
  std::size_t live = 0;
  for (std::size_t i = 0; i < dataset.size(); ++i) live += excluded.count(static_cast<VectorId>(i)) ? 0 : 1;
  if (k == 0 || k > live) {
    throw UsageError("brute_force_knn: k=" + std::to_string(k) + " exceeds live count " + std::to_string(live));
  }
  const auto q = query.to_floats();
  std::vector<float> row(dataset.dim());
  GroundTruthRow all;
  all.reserve(live);
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto id = static_cast<VectorId>(i);
    if (excluded.count(id)) continue;
    dataset[i].to_floats(row);
    all.push_back({id, l2_sq(q, row)});
  }
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k), all.end());
  all.resize(k);
  return all;
}

GroundTruthRow brute_force_knn(std::span<const float> rows, std::span<const VectorId> ids, std::size_t dim,
                               std::span<const float> query, std::size_t k) {
  if (rows.size() != ids.size() * dim) throw UsageError("brute_force_knn: row/id count mismatch");
  if (k == 0 || k > ids.size()) {
    throw UsageError("brute_force_knn: k=" + std::to_string(k) + " exceeds live count " +
                     std::to_string(ids.size()));
  }
  GroundTruthRow all(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) all[i] = {ids[i], l2_sq(query.data(), rows.data() + i * dim, dim)};
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k), all.end());
  all.resize(k);
  return all;
}

double recall_at_k(std::span<const VectorId> result, std::span<const VectorId> truth, std::size_t k) {
  if (k == 0 || result.size() < k || truth.size() < k) {
    throw UsageError("recall_at_k: lists shorter than k=" + std::to_string(k));
  }
  std::vector<VectorId> a(result.begin(), result.begin() + static_cast<std::ptrdiff_t>(k));
  std::vector<VectorId> b(truth.begin(), truth.begin() + static_cast<std::ptrdiff_t>(k));
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  a.erase(std::unique(a.begin(), a.end()), a.end());
  std::vector<VectorId> common;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(common));
  return static_cast<double>(common.size()) / static_cast<double>(k);
}

namespace {

double stddev(double sum, double sum_sq, double n) {
  const double mean = sum / n;
  return std::sqrt(std::max(0.0, sum_sq / n - mean * mean));
}

}  // namespace

CharacterizationReport characterize(const Dataset& dataset) {
  if (dataset.empty()) throw UsageError("characterize: empty dataset");
  const std::size_t n = dataset.size();
  const std::size_t dim = dataset.dim();
  const std::size_t v = dataset.vector_bytes();

  CharacterizationReport r;
  std::vector<double> dsum(dim, 0.0), dsq(dim, 0.0);
  std::vector<float> row(dim);
  // Shifted by the first row for numerical stability of the sum-of-squares form.
  const auto shift = dataset[0].to_floats();
  double gsum = 0.0, gsq = 0.0;
  const double gshift = shift[0];
  for (std::size_t i = 0; i < n; ++i) {
    dataset[i].to_floats(row);
    for (std::size_t d = 0; d < dim; ++d) {
      const double x = static_cast<double>(row[d]) - shift[d];
      dsum[d] += x;
      dsq[d] += x * x;
      const double g = static_cast<double>(row[d]) - gshift;
      gsum += g;
      gsq += g * g;
    }
  }
  r.global_dispersion = stddev(gsum, gsq, static_cast<double>(n * dim));
  r.per_dimension_stddev.resize(dim);
  double acc = 0.0;
  for (std::size_t d = 0; d < dim; ++d) {
    r.per_dimension_stddev[d] = stddev(dsum[d], dsq[d], static_cast<double>(n));
    acc += r.per_dimension_stddev[d];
  }
  r.dimensional_dispersion = acc / static_cast<double>(dim);

  r.global_entropy = byte_entropy(dataset.raw());
  std::vector<std::array<std::uint64_t, 256>> columns(v);
  for (auto& c : columns) c.fill(0);
  const auto& raw = dataset.raw();
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint8_t* p = raw.data() + i * v;
    for (std::size_t b = 0; b < v; ++b) ++columns[b][p[b]];
  }
  r.per_byte_entropy.resize(v);
  acc = 0.0;
  for (std::size_t b = 0; b < v; ++b) {
    r.per_byte_entropy[b] = entropy_of_counts(columns[b]);
    acc += r.per_byte_entropy[b];
  }
  r.columnar_entropy = acc / static_cast<double>(v);
  return r;
}

}  // namespace dvs
