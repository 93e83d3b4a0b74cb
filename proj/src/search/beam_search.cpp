#include "dvs/search/beam_search.hpp"

#include <algorithm>
#include <unordered_set>

#include "dvs/core/distance.hpp"
#include "dvs/index/vamana.hpp"

namespace dvs {

void SearchParams::validate() const {
  if (K < 1 || K > L_s) throw UsageError("search: need 1 <= K <= L_s");
  if (W < 1) throw UsageError("search: beam width must be >= 1");
  if (B < 1) throw UsageError("search: rerank batch must be >= 1");
  if (!(benefit_threshold >= 0.0f && benefit_threshold <= 1.0f)) {
    throw UsageError("search: benefit threshold must be in [0, 1]");
  }
}

nlohmann::json QueryStats::to_json() const {
  nlohmann::json j{{"cache_hits", cache_hits},
                   {"graph_ios", graph_ios},
                   {"vector_ios", vector_ios},
                   {"prefetch_ios", prefetch_ios},
                   {"traversal_vector_ios", traversal_vector_ios},
                   {"pq_evals", pq_evals},
                   {"hops", hops},
                   {"reranked", reranked},
                   {"rerank_batches", rerank_batches},
                   {"terminated_early", terminated_early},
                   {"read_errors", read_errors}};
  if (!error.empty()) j["error"] = error;
  return j;
}

std::size_t prefetch_budget(std::size_t W, std::size_t inflight) { return inflight >= W ? 0 : W - inflight; }

bool PrefetchHeap::offer(float distance, VectorId id) {
  const Neighbor n{id, distance};
  if (capacity_ == 0) return false;
  if (heap_.size() < capacity_) {
    heap_.push_back(n);
    std::push_heap(heap_.begin(), heap_.end());
    return true;
  }
  if (!(n < heap_.front())) return false;
  std::pop_heap(heap_.begin(), heap_.end());
  heap_.back() = n;
  std::push_heap(heap_.begin(), heap_.end());
  return true;
}

std::vector<Neighbor> PrefetchHeap::sorted() const {
  auto out = heap_;
  std::sort(out.begin(), out.end());
  return out;
}

bool is_stable(const PrefetchHeap& heap, std::size_t consecutive_non_updates, std::size_t B) {
  return heap.full() && consecutive_non_updates >= B;
}

RerankOutcome rerank(std::span<const Neighbor> ranked, const std::unordered_map<VectorId, float>& prefetched,
                     const ExactDistanceFn& exact, std::size_t K, std::size_t B, float threshold) {
  if (K == 0 || B == 0) throw UsageError("rerank: K and B must be positive");
  std::vector<VectorId> order;
  order.reserve(ranked.size());
  for (const auto& c : ranked) {
    if (prefetched.count(c.id)) order.push_back(c.id);
  }
  for (const auto& c : ranked) {
    if (!prefetched.count(c.id)) order.push_back(c.id);
  }

  RerankOutcome out;
  std::vector<Neighbor> top;  // max-heap on exact distance
  std::size_t pos = 0;
  while (pos < order.size()) {
    const std::size_t end = std::min(order.size(), pos + B);
    std::size_t updates = 0;
    for (; pos < end; ++pos) {
      const VectorId id = order[pos];
      float d;
      if (auto it = prefetched.find(id); it != prefetched.end()) {
        d = it->second;
      } else {
        try {
          d = exact(id);
          ++out.fetched;
        } catch (const Error& e) {
          ++out.read_errors;
          if (out.error.empty()) out.error = e.what();
          continue;
        }
      }
      ++out.evaluated;
      const Neighbor n{id, d};
      if (top.size() < K) {
        top.push_back(n);
        std::push_heap(top.begin(), top.end());
        ++updates;
      } else if (n < top.front()) {
        std::pop_heap(top.begin(), top.end());
        top.back() = n;
        std::push_heap(top.begin(), top.end());
        ++updates;
      }
    }
    ++out.batches;
    if (static_cast<float>(updates) / static_cast<float>(B) < threshold) {
      out.terminated_early = pos < order.size();
      break;
    }
  }
  std::sort(top.begin(), top.end());
  out.top = std::move(top);
  return out;
}

namespace {

struct Candidate {
  Neighbor n;
  bool expanded = false;
};

// Keeps the list sorted and capped at `limit`; returns false when `n` fell off.
bool insert_candidate(std::vector<Candidate>& list, const Neighbor& n, std::size_t limit) {
  if (list.size() >= limit && !(n < list.back().n)) return false;
  auto at = std::lower_bound(list.begin(), list.end(), n, [](const Candidate& c, const Neighbor& x) { return c.n < x; });
  list.insert(at, Candidate{n, false});
  if (list.size() > limit) list.pop_back();
  return true;
}

}  // namespace

SearchResult beam_search(const SearchSource& source, std::span<const float> query, const SearchParams& params) {
  params.validate();
  if (!source.graph || !source.codebook || !source.code || !source.read_vector) {
    throw UsageError("beam_search: incomplete search source");
  }
  if (query.size() != source.codebook->dim) throw UsageError("beam_search: query dimension mismatch");

  SearchResult result;
  QueryStats& st = result.stats;
  const GraphStore& graph = *source.graph;
  if (graph.num_vertices() == 0 || graph.entry_point() == kInvalidId) return result;

  const auto deleted = [&](VectorId id) { return source.is_deleted && source.is_deleted(id); };
  const std::size_t dim = source.codebook->dim;
  std::vector<float> buffer(dim);

  // Every full-precision read goes through here, tagged with its path.
  enum class Path { kTraversal, kPrefetch, kRerank };
  Path path = Path::kTraversal;
  const auto exact = [&](VectorId id) {
    source.read_vector(id, buffer);
    ++st.vector_ios;
    if (path == Path::kTraversal) ++st.traversal_vector_ios;
    if (path == Path::kPrefetch) ++st.prefetch_ios;
    return l2_sq(query, buffer);
  };

  const PQDistanceTable table(query, *source.codebook);
  const auto pq = [&](VectorId id) {
    ++st.pq_evals;
    return table.distance(source.code(id));
  };

  thread_local VisitedSet seen;
  seen.reset();
  std::vector<Candidate> list;
  list.reserve(params.L_s + 1);
  PrefetchHeap heap(std::size_t{params.K} + params.B);
  std::size_t non_updates = 0;
  std::unordered_map<VectorId, float> prefetched;

  const auto score = [&](VectorId id) {
    if (!seen.test_and_set(id)) return;
    const Neighbor n{id, pq(id)};
    insert_candidate(list, n, params.L_s);
    // Deleted ids steer the walk but never compete for the result.
    if (!deleted(id) && heap.offer(n.distance, id)) {
      non_updates = 0;
    } else {
      ++non_updates;
    }
  };

  const auto fetch_list = [&](VectorId v, std::size_t& misses) {
    bool hit = false;
    std::vector<VectorId> out;
    if (source.cache) {
      out = source.cache->lookup(graph, v, &hit);
    } else {
      out = graph.read_neighbor_list(v);
    }
    if (hit) {
      ++st.cache_hits;
    } else {
      ++st.graph_ios;
      ++misses;
    }
    return out;
  };

  try {
    score(graph.entry_point());
    std::vector<VectorId> beam;
    while (true) {
      beam.clear();
      for (auto& c : list) {
        if (c.expanded) continue;
        c.expanded = true;
        beam.push_back(c.n.id);
        if (beam.size() == params.W) break;
      }
      if (beam.empty()) break;
      ++st.hops;
      std::size_t misses = 0;
      for (VectorId v : beam) {
        for (VectorId u : fetch_list(v, misses)) score(u);
      }

      if (is_stable(heap, non_updates, params.B)) {
        std::size_t budget = prefetch_budget(params.W, misses);
        path = Path::kPrefetch;
        for (const auto& n : heap.sorted()) {
          if (budget == 0) break;
          if (prefetched.count(n.id)) continue;
          try {
            prefetched.emplace(n.id, exact(n.id));
          } catch (const Error& e) {
            ++st.read_errors;
            if (st.error.empty()) st.error = e.what();
          }
          --budget;
        }
        path = Path::kTraversal;
      }
    }
  } catch (const Error& e) {
    // Storage failure mid-walk: re-rank what was found so far.
    ++st.read_errors;
    if (st.error.empty()) st.error = e.what();
  }

  std::vector<Neighbor> ranked;
  ranked.reserve(list.size());
  for (const auto& c : list) {
    if (!deleted(c.n.id)) ranked.push_back(c.n);
  }
  std::unordered_map<VectorId, float> usable;
  for (const auto& [id, d] : prefetched) {
    if (!deleted(id)) usable.emplace(id, d);
  }
  path = Path::kRerank;
  auto out = rerank(ranked, usable, exact, params.K, params.B, params.benefit_threshold);
  st.reranked = out.evaluated;
  st.rerank_batches = out.batches;
  st.terminated_early = out.terminated_early;
  st.read_errors += out.read_errors;
  if (st.error.empty()) st.error = out.error;
  result.neighbors = std::move(out.top);
  return result;
}

}  // namespace dvs
