#pragma once

#include <functional>
#include <unordered_set>
#include <vector>

#include "dvs/core/dataset.hpp"

namespace dvs {

struct Neighbor {
  VectorId id = kInvalidId;
  float distance = 0.0f;

  friend bool operator<(const Neighbor& a, const Neighbor& b) {
    return a.distance < b.distance || (a.distance == b.distance && a.id < b.id);
  }
  friend bool operator==(const Neighbor& a, const Neighbor& b) = default;
};

using GroundTruthRow = std::vector<Neighbor>;

/// Exact k nearest ids by squared L2, ties by smaller id. Ids in `excluded`
/// are never returned.
GroundTruthRow brute_force_knn(const Dataset& dataset, const VectorView& query, std::size_t k,
                               const std::unordered_set<VectorId>& excluded = {});

/// Same as above over a float matrix, with an arbitrary liveness predicate and
/// an explicit id per row.
GroundTruthRow brute_force_knn(std::span<const float> rows, std::span<const VectorId> ids, std::size_t dim,
                               std::span<const float> query, std::size_t k);

/// |first-k(result) ∩ first-k(truth)| / k
double recall_at_k(std::span<const VectorId> result, std::span<const VectorId> truth, std::size_t k);

}  // namespace dvs
