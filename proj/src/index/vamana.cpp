#include "dvs/index/vamana.hpp"

#include <algorithm>
#include <deque>
#include <limits>
#include <numeric>
#include <random>
#include <unordered_set>

#include "dvs/core/distance.hpp"

namespace dvs {

float VectorTable::distance(VectorId a, VectorId b) const { return l2_sq(row(a), row(b), dim); }
float VectorTable::distance(VectorId a, const float* q) const { return l2_sq(row(a), q, dim); }

void VisitedSet::reset() {
  if (++epoch_ == 0) {
    std::fill(stamp_.begin(), stamp_.end(), 0);
    epoch_ = 1;
  }
}

bool VisitedSet::test_and_set(VectorId id) {
  if (id >= stamp_.size()) stamp_.resize(std::max<std::size_t>(std::size_t{id} + 1, stamp_.size() * 2), 0);
  if (stamp_[id] == epoch_) return false;
  stamp_[id] = epoch_;
  return true;
}

GreedyResult greedy_search_mem(const NeighborFn& neighbors, const QueryDistanceFn& distance,
                               std::span<const VectorId> entries, std::size_t L, VisitedSet* scratch) {
  if (L == 0) throw UsageError("greedy_search_mem: L must be >= 1");
  VisitedSet local;
  VisitedSet& seen = scratch ? *scratch : local;
  seen.reset();

  struct Slot {
    Neighbor n;
    bool expanded;
  };
  std::vector<Slot> list;
  list.reserve(L + 1);
  auto offer = [&](VectorId id) {
    if (!seen.test_and_set(id)) return;
    const Neighbor n{id, distance(id)};
    if (list.size() >= L && !(n < list.back().n)) return;
    auto pos = std::upper_bound(list.begin(), list.end(), n, [](const Neighbor& a, const Slot& s) { return a < s.n; });
    list.insert(pos, Slot{n, false});
    if (list.size() > L) list.pop_back();
  };
  for (auto e : entries) offer(e);

  GreedyResult out;
  std::size_t cursor = 0;
  while (true) {
    while (cursor < list.size() && list[cursor].expanded) ++cursor;
    if (cursor >= list.size()) break;
    list[cursor].expanded = true;
    const Neighbor current = list[cursor].n;
    out.visited.push_back(current);
    for (auto nb : neighbors(current.id)) offer(nb);
    // Insertions land before or after the cursor; rescan from the front of
    // the unexpanded region.
    cursor = 0;
  }
  out.top.reserve(list.size());
  for (const auto& s : list) out.top.push_back(s.n);
  return out;
}

std::vector<VectorId> robust_prune(VectorId vertex, std::vector<Neighbor> candidates, std::uint32_t max_degree,
                                   float alpha, const PairDistanceFn& distance) {
  std::sort(candidates.begin(), candidates.end());
  std::vector<Neighbor> pool;
  pool.reserve(candidates.size());
  std::unordered_set<VectorId> ids;
  for (const auto& c : candidates) {
    if (c.id != vertex && ids.insert(c.id).second) pool.push_back(c);
  }
  std::vector<VectorId> result;
  std::vector<bool> removed(pool.size(), false);
  for (std::size_t i = 0; i < pool.size() && result.size() < max_degree; ++i) {
    if (removed[i]) continue;
    const VectorId p = pool[i].id;
    result.push_back(p);
    for (std::size_t j = i + 1; j < pool.size(); ++j) {
      if (!removed[j] && alpha * distance(p, pool[j].id) <= pool[j].distance) removed[j] = true;
    }
  }
  return result;
}

VectorId medoid(const VectorTable& vectors, std::span<const VectorId> ids) {
  if (ids.empty()) throw UsageError("medoid: empty set");
  std::vector<double> mean(vectors.dim, 0.0);
  for (auto id : ids) {
    const float* r = vectors.row(id);
    for (std::size_t t = 0; t < vectors.dim; ++t) mean[t] += r[t];
  }
  std::vector<float> m(vectors.dim);
  for (std::size_t t = 0; t < vectors.dim; ++t) m[t] = static_cast<float>(mean[t] / static_cast<double>(ids.size()));
  VectorId best = ids.front();
  float best_d = std::numeric_limits<float>::infinity();
  for (auto id : ids) {
    const float d = vectors.distance(id, m.data());
    if (d < best_d || (d == best_d && id < best)) {
      best_d = d;
      best = id;
    }
  }
  return best;
}

void vamana_insert(Adjacency& adj, const VectorTable& vectors, VectorId p, VectorId entry, const BuildParams& params,
                   float alpha, VisitedSet& scratch, std::vector<VectorId>* touched) {
  const float* q = vectors.row(p);
  const NeighborFn nbrs = [&](VectorId v) { return std::span<const VectorId>(adj[v]); };
  const QueryDistanceFn dq = [&](VectorId v) { return vectors.distance(v, q); };
  const PairDistanceFn dpair = [&](VectorId a, VectorId b) { return vectors.distance(a, b); };
  const VectorId entries[] = {entry};
  GreedyResult res = greedy_search_mem(nbrs, dq, entries, params.build_list, &scratch);

  std::vector<Neighbor> cand = std::move(res.visited);
  for (auto v : adj[p]) cand.push_back({v, dq(v)});
  adj[p] = robust_prune(p, std::move(cand), params.max_degree, alpha, dpair);
  if (touched) touched->push_back(p);

  const auto limit = std::max<std::size_t>(params.max_degree,
                                           static_cast<std::size_t>(params.max_degree * params.slack));
  for (auto j : adj[p]) {
    auto& list = adj[j];
    if (std::find(list.begin(), list.end(), p) != list.end()) continue;
    if (list.size() < limit) {
      list.push_back(p);
    } else {
      std::vector<Neighbor> c;
      c.reserve(list.size() + 1);
      const float* rj = vectors.row(j);
      for (auto v : list) c.push_back({v, vectors.distance(v, rj)});
      c.push_back({p, vectors.distance(p, rj)});
      list = robust_prune(j, std::move(c), params.max_degree, alpha, dpair);
    }
    if (touched) touched->push_back(j);
  }
}

std::vector<VectorId> enforce_degree(Adjacency& adj, const VectorTable& vectors, std::uint32_t max_degree,
                                     float alpha) {
  const PairDistanceFn dpair = [&](VectorId a, VectorId b) { return vectors.distance(a, b); };
  std::vector<VectorId> changed;
  for (VectorId v = 0; v < adj.size(); ++v) {
    if (adj[v].size() <= max_degree) continue;
    std::vector<Neighbor> c;
    c.reserve(adj[v].size());
    for (auto u : adj[v]) c.push_back({u, vectors.distance(u, v)});
    adj[v] = robust_prune(v, std::move(c), max_degree, alpha, dpair);
    changed.push_back(v);
  }
  return changed;
}

std::vector<VectorId> repair_reachability(Adjacency& adj, const VectorTable& vectors, VectorId entry,
                                          std::uint32_t max_degree, const std::vector<bool>& live) {
  const std::size_t n = adj.size();
  std::vector<VectorId> changed;
  if (entry >= n || !live[entry]) return changed;
  VisitedSet scratch(n);
  for (int round = 0; round < 4; ++round) {
    std::vector<bool> reach(n, false);
    std::deque<VectorId> queue;
    auto flood = [&](VectorId from) {
      if (reach[from]) return;
      reach[from] = true;
      queue.push_back(from);
      while (!queue.empty()) {
        const VectorId v = queue.front();
        queue.pop_front();
        for (auto u : adj[v]) {
          if (u < n && !reach[u]) {
            reach[u] = true;
            queue.push_back(u);
          }
        }
      }
    };
    flood(entry);
    bool displaced = false;
    for (VectorId u = 0; u < n; ++u) {
      if (!live[u] || reach[u]) continue;
      const float* q = vectors.row(u);
      const NeighborFn nbrs = [&](VectorId v) { return std::span<const VectorId>(adj[v]); };
      const QueryDistanceFn dq = [&](VectorId v) { return vectors.distance(v, q); };
      const VectorId entries[] = {entry};
      const auto res = greedy_search_mem(nbrs, dq, entries, 32, &scratch);
      VectorId anchor = kInvalidId;
      for (const auto& c : res.top) {
        if (c.id != u && reach[c.id] && adj[c.id].size() < max_degree) {
          anchor = c.id;
          break;
        }
      }
      for (VectorId v = 0; anchor == kInvalidId && v < n; ++v) {
        if (v != u && reach[v] && adj[v].size() < max_degree) anchor = v;
      }
      if (anchor == kInvalidId) {
        for (const auto& c : res.top) {
          if (c.id != u && reach[c.id]) {
            anchor = c.id;
            break;
          }
        }
        if (anchor == kInvalidId) continue;
        adj[anchor].back() = u;
        displaced = true;
      } else {
        adj[anchor].push_back(u);
      }
      changed.push_back(anchor);
      flood(u);
    }
    if (!displaced) break;
  }
  std::sort(changed.begin(), changed.end());
  changed.erase(std::unique(changed.begin(), changed.end()), changed.end());
  return changed;
}

GraphIndex build_graph(const VectorTable& vectors, const BuildParams& params) {
  const std::size_t n = vectors.count;
  if (params.max_degree < 2) throw UsageError("build_graph: R must be >= 2");
  if (n == 0) throw UsageError("build_graph: empty dataset");
  GraphIndex g;
  g.adjacency.assign(n, {});
  std::vector<VectorId> all(n);
  std::iota(all.begin(), all.end(), 0);
  g.entry_point = medoid(vectors, all);
  if (n == 1) return g;

  std::mt19937_64 rng(params.seed);
  const std::size_t init = std::min<std::size_t>(params.max_degree, n - 1);
  for (VectorId v = 0; v < n; ++v) {
    auto& list = g.adjacency[v];
    if (init == n - 1) {
      for (VectorId u = 0; u < n; ++u) {
        if (u != v) list.push_back(u);
      }
      continue;
    }
    std::unordered_set<VectorId> picked;
    while (picked.size() < init) {
      const auto u = static_cast<VectorId>(rng() % n);
      if (u != v && picked.insert(u).second) list.push_back(u);
    }
  }

  std::vector<VectorId> order = all;
  std::shuffle(order.begin(), order.end(), rng);
  VisitedSet scratch(n);
  for (const float alpha : {1.0f, params.prune_alpha}) {
    for (auto p : order) vamana_insert(g.adjacency, vectors, p, g.entry_point, params, alpha, scratch);
  }
  enforce_degree(g.adjacency, vectors, params.max_degree, params.prune_alpha);
  repair_reachability(g.adjacency, vectors, g.entry_point, params.max_degree, std::vector<bool>(n, true));
  return g;
}

}  // namespace dvs
