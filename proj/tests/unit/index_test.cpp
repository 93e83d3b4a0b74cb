#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <deque>
#include <random>
#include <set>

#include "dvs/core/dataset.hpp"
#include "dvs/core/distance.hpp"
#include "dvs/core/knn.hpp"
#include "dvs/index/pq.hpp"
#include "dvs/index/vamana.hpp"

namespace dvs {
namespace {

std::vector<float> random_rows(std::size_t n, std::size_t dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(-10.0f, 10.0f);
  std::vector<float> out(n * dim);
  for (auto& x : out) x = u(rng);
  return out;
}

// ---- PQ -------------------------------------------------------------------

TEST(PQ, DistinctSampleMembersBecomeCentroids) {
  const std::size_t dim = 8;
  const auto sample = random_rows(256, dim, 1);
  const auto cb = train_pq(sample, dim, 2, 7);
  for (std::size_t i = 0; i < 256; ++i) {
    std::span<const float> x(sample.data() + i * dim, dim);
    const auto code = pq_encode(x, cb);
    const auto table = pq_distance_table(x, cb);
    const float self = pq_asym_distance(code, table);
    EXPECT_LE(self, 1e-3f * l2_sq(x, std::vector<float>(dim, 0.0f)) + 1e-6f) << i;
  }
}

TEST(PQ, OneSubspacePerDimensionIsScalarQuantization) {
  const std::size_t dim = 4;
  const auto sample = random_rows(1000, dim, 2);
  const auto cb = train_pq(sample, dim, dim, 3);
  EXPECT_EQ(cb.sub_dim(), 1u);
  EXPECT_EQ(cb.centroids.size(), 256u * dim);
}

TEST(PQ, TrainingIsDeterministic) {
  const auto sample = random_rows(600, 16, 3);
  EXPECT_EQ(train_pq(sample, 16, 4, 9).centroids, train_pq(sample, 16, 4, 9).centroids);
  EXPECT_THROW(train_pq(sample, 16, 3, 9), UsageError);
}

TEST(PQ, EncodeMatchesExhaustiveNearestCentroid) {
  const std::size_t dim = 16, M = 4, sub = dim / M;
  const auto cb = train_pq(random_rows(2000, dim, 4), dim, M, 5);
  const auto queries = random_rows(1000, dim, 6);
  for (std::size_t i = 0; i < 1000; ++i) {
    std::span<const float> x(queries.data() + i * dim, dim);
    const auto code = pq_encode(x, cb);
    for (std::size_t m = 0; m < M; ++m) {
      std::size_t best = 0;
      float best_d = INFINITY;
      for (std::size_t j = 0; j < 256; ++j) {
        float d = 0;
        for (std::size_t t = 0; t < sub; ++t) {
          const float diff = x[m * sub + t] - cb.centroids[(m * 256 + j) * sub + t];
          d += diff * diff;
        }
        if (d < best_d) {
          best_d = d;
          best = j;
        }
      }
      ASSERT_EQ(code[m], best);
    }
  }
}

TEST(PQ, CodeOfConcatenatedCentroidsIsThatIndex) {
  const std::size_t dim = 12, M = 3;
  const auto cb = train_pq(random_rows(1000, dim, 7), dim, M, 1);
  std::vector<std::uint8_t> want(M, 37);
  std::vector<float> x(dim);
  pq_reconstruct(want, cb, x);
  // Duplicate centroids would resolve to the smaller index; k-means++ on
  // continuous data yields distinct ones.
  EXPECT_EQ(pq_encode(x, cb), want);
  EXPECT_FLOAT_EQ(pq_asym_distance(want, pq_distance_table(x, cb)), 0.0f);
}

TEST(PQ, AsymmetricDistanceEqualsReconstructionDistance) {
  const std::size_t dim = 32, M = 8;
  const auto cb = train_pq(random_rows(1500, dim, 8), dim, M, 2);
  const auto data = random_rows(200, dim, 9);
  const auto queries = random_rows(20, dim, 10);
  std::vector<float> rec(dim);
  for (std::size_t q = 0; q < 20; ++q) {
    std::span<const float> qv(queries.data() + q * dim, dim);
    const auto table = pq_distance_table(qv, cb);
    for (std::size_t i = 0; i < 200; ++i) {
      const auto code = pq_encode(std::span<const float>(data.data() + i * dim, dim), cb);
      pq_reconstruct(code, cb, rec);
      const float direct = l2_sq(qv, rec);
      const float asym = pq_asym_distance(code, table);
      EXPECT_GE(asym, 0.0f);
      EXPECT_NEAR(asym, direct, 1e-4f * std::max(1.0f, direct));
    }
  }
}

TEST(PQ, CodebookSerializationRoundTrip) {
  const auto cb = train_pq(random_rows(300, 8, 11), 8, 2, 3);
  const Bytes bytes = cb.serialize();
  EXPECT_EQ(bytes.size(), 8 + 256 * 8 * 4u);
  const auto back = PQCodebook::deserialize(bytes, "cb");
  EXPECT_EQ(back.centroids, cb.centroids);
  EXPECT_THROW(PQCodebook::deserialize(ByteSpan(bytes).first(20), "cb"), FormatError);
}

// ---- prune / greedy -------------------------------------------------------

struct Points {
  std::vector<float> data;
  std::size_t dim;
  VectorTable table() const { return {data.data(), dim, data.size() / dim}; }
};

TEST(RobustPrune, KeepsMutuallyDistantCandidates) {
  // Vertex at origin, candidates along orthogonal axes.
  Points p{{0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0, 1}, 3};
  const auto t = p.table();
  std::vector<Neighbor> c{{1, 1}, {2, 1}, {3, 1}};
  const auto out = robust_prune(0, c, 8, 1.0f, [&](VectorId a, VectorId b) { return t.distance(a, b); });
  EXPECT_EQ(std::set<VectorId>(out.begin(), out.end()), (std::set<VectorId>{1, 2, 3}));
}

TEST(RobustPrune, DuplicatePositionsKeepOnlyFirst) {
  Points p{{0, 0, 1, 1, 1, 1, 1, 1}, 2};
  const auto t = p.table();
  std::vector<Neighbor> c{{3, 2}, {1, 2}, {2, 2}};
  const auto out = robust_prune(0, c, 8, 1.2f, [&](VectorId a, VectorId b) { return t.distance(a, b); });
  EXPECT_EQ(out, (std::vector<VectorId>{1}));
}

TEST(RobustPrune, MatchesDirectSimulation) {
  const std::size_t dim = 4, n = 200;
  Points p{random_rows(n, dim, 12), dim};
  const auto t = p.table();
  auto dist = [&](VectorId a, VectorId b) { return t.distance(a, b); };
  for (std::uint32_t R : {4u, 16u}) {
    std::vector<Neighbor> c;
    for (VectorId i = 1; i < n; ++i) c.push_back({i, t.distance(0, i)});
    const auto out = robust_prune(0, c, R, 1.2f, dist);
    ASSERT_LE(out.size(), R);
    // Dominance: no kept candidate is dominated by an earlier kept one.
    for (std::size_t i = 0; i < out.size(); ++i) {
      for (std::size_t j = 0; j < i; ++j) EXPECT_GT(1.2f * dist(out[j], out[i]), t.distance(0, out[i]));
    }
    // Nearest candidate always kept first.
    EXPECT_EQ(out.front(), std::min_element(c.begin(), c.end())->id);
  }
}

// ---- graph build ----------------------------------------------------------

TEST(BuildGraph, TwoVectorsAreMutualNeighbors) {
  Points p{{0, 0, 1, 1}, 2};
  const auto g = build_graph(p.table(), BuildParams{4, 10, 1.2f, 1});
  EXPECT_EQ(g.adjacency[0], (std::vector<VectorId>{1}));
  EXPECT_EQ(g.adjacency[1], (std::vector<VectorId>{0}));
}

std::size_t reachable(const GraphIndex& g) {
  std::vector<bool> seen(g.adjacency.size(), false);
  std::deque<VectorId> q{g.entry_point};
  seen[g.entry_point] = true;
  std::size_t count = 1;
  while (!q.empty()) {
    const auto v = q.front();
    q.pop_front();
    for (auto u : g.adjacency[v]) {
      if (!seen[u]) {
        seen[u] = true;
        ++count;
        q.push_back(u);
      }
    }
  }
  return count;
}

TEST(BuildGraph, IdenticalVectorsStayConnected) {
  Points p{std::vector<float>(300 * 4, 5.0f), 4};
  const auto g = build_graph(p.table(), BuildParams{8, 20, 1.2f, 3});
  EXPECT_EQ(reachable(g), 300u);
  for (VectorId v = 0; v < 300; ++v) {
    for (auto u : g.adjacency[v]) EXPECT_NE(u, v);
    EXPECT_LE(g.adjacency[v].size(), 8u);
  }
}

class BuiltGraph : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    // Queries come from the same clusters, so draw them together.
    const Dataset all = generate_clustered(10100, 128, ElementType::kFloat32, 21);
    data_ = new std::vector<float>(all.slice(0, 10000).to_float_matrix());
    graph_ = new GraphIndex(build_graph(VectorTable{data_->data(), 128, 10000}, BuildParams{32, 64, 1.2f, 42}));
    queries_ = new std::vector<float>(all.slice(10000, 100).to_float_matrix());
  }
  static void TearDownTestSuite() {
    delete data_;
    delete graph_;
    delete queries_;
  }
  static VectorTable table() { return {data_->data(), 128, 10000}; }
  static GreedyResult search(const float* q, std::size_t L) {
    const auto t = table();
    const VectorId e[] = {graph_->entry_point};
    return greedy_search_mem([](VectorId v) { return std::span<const VectorId>(graph_->adjacency[v]); },
                             [&](VectorId v) { return t.distance(v, q); }, e, L);
  }

  static std::vector<float>* data_;
  static GraphIndex* graph_;
  static std::vector<float>* queries_;
};
std::vector<float>* BuiltGraph::data_ = nullptr;
GraphIndex* BuiltGraph::graph_ = nullptr;
std::vector<float>* BuiltGraph::queries_ = nullptr;

TEST_F(BuiltGraph, DegreeBoundAndNoSelfLoops) {
  for (VectorId v = 0; v < 10000; ++v) {
    ASSERT_LE(graph_->adjacency[v].size(), 32u);
    for (auto u : graph_->adjacency[v]) ASSERT_NE(u, v);
  }
  EXPECT_EQ(reachable(*graph_), 10000u);
}

TEST_F(BuiltGraph, RecallAtTenWithListHundred) {
  std::vector<VectorId> ids(10000);
  std::iota(ids.begin(), ids.end(), 0);
  double total = 0;
  for (std::size_t i = 0; i < 100; ++i) {
    const float* q = queries_->data() + i * 128;
    const auto truth = brute_force_knn(*data_, ids, 128, std::span<const float>(q, 128), 10);
    const auto res = search(q, 100);
    std::vector<VectorId> got, want;
    for (std::size_t k = 0; k < 10; ++k) got.push_back(res.top[k].id);
    for (const auto& t : truth) want.push_back(t.id);
    total += recall_at_k(got, want, 10);
  }
  EXPECT_GE(total / 100, 0.95);
}

TEST_F(BuiltGraph, SelfQueryRanksFirstAndVisitedCoversTop) {
  for (VectorId v : {0u, 777u, 9999u}) {
    const auto res = search(data_->data() + std::size_t{v} * 128, 50);
    EXPECT_EQ(res.top.front().id, v);
    EXPECT_FLOAT_EQ(res.top.front().distance, 0.0f);
    std::set<VectorId> visited;
    for (const auto& n : res.visited) visited.insert(n.id);
    for (const auto& n : res.top) EXPECT_TRUE(visited.count(n.id));
  }
}

TEST(GreedySearch, ExhaustiveListEqualsBruteForce) {
  const std::size_t n = 300, dim = 8;
  Points p{random_rows(n, dim, 30), dim};
  const auto g = build_graph(p.table(), BuildParams{8, 20, 1.2f, 4});
  const auto queries = random_rows(5, dim, 31);
  std::vector<VectorId> ids(n);
  std::iota(ids.begin(), ids.end(), 0);
  const auto t = p.table();
  for (std::size_t i = 0; i < 5; ++i) {
    const float* q = queries.data() + i * dim;
    const VectorId e[] = {g.entry_point};
    const auto res = greedy_search_mem([&](VectorId v) { return std::span<const VectorId>(g.adjacency[v]); },
                                       [&](VectorId v) { return t.distance(v, q); }, e, n);
    const auto truth = brute_force_knn(p.data, ids, dim, std::span<const float>(q, dim), n);
    ASSERT_EQ(res.top.size(), n);
    for (std::size_t k = 0; k < n; ++k) EXPECT_EQ(res.top[k].id, truth[k].id);
  }
}

}  // namespace
}  // namespace dvs
