#pragma once

#include <span>

#include "dvs/core/dataset.hpp"

namespace dvs {

/// Squared Euclidean distance; ranking-equivalent to L2.
/// Inline scalar form for short subvectors (PQ subspaces), where a call costs
/// more than the arithmetic.
inline float l2_sq_short(const float* a, const float* b, std::size_t dim) {
  float acc = 0.0f;
  for (std::size_t i = 0; i < dim; ++i) {
    const float d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

/// Squared L2 over `dim` floats. Dispatches to an AVX2 build when the CPU has it.
float l2_sq(const float* a, const float* b, std::size_t dim);

inline float l2_sq(std::span<const float> a, std::span<const float> b) { return l2_sq(a.data(), b.data(), a.size()); }

/// Squared L2 between two stored vectors. Both must share dim and element type.
float l2_distance(const VectorView& a, const VectorView& b);

}  // namespace dvs
