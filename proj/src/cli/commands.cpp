#include "dvs/cli/commands.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <random>
#include <thread>

#include "dvs/core/characterize.hpp"
#include "dvs/update/engine.hpp"

namespace dvs {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

void emit(std::ostream& out, const json& j) { out << j.dump() << '\n' << std::flush; }

double percentile(std::vector<double> v, double p) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const auto rank = static_cast<std::size_t>(std::ceil(p * static_cast<double>(v.size())));
  return v[std::clamp<std::size_t>(rank, 1, v.size()) - 1];
}

double mean(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

Dataset load(const fs::path& path) {
  if (path.empty()) throw UsageError("missing --data");
  return load_dataset(path, vecs_format_from_path(path));
}

std::vector<float> load_queries(const RunConfig& c, std::size_t dim) {
  if (c.queries.empty()) throw UsageError("missing --queries");
  const Dataset q = load_dataset(c.queries, vecs_format_from_path(c.queries));
  if (q.dim() != dim) throw UsageError("query dimension " + std::to_string(q.dim()) + " does not match store " + std::to_string(dim));
  return q.to_float_matrix();
}

StoreConfig store_config(const RunConfig& c) {
  StoreConfig s;
  s.segment_bytes = c.segment_bytes;
  s.chunk_bytes = c.chunk_bytes;
  s.beta = c.beta;
  s.alpha = c.alpha;
  s.sample_fraction = c.sample_fraction;
  s.max_degree = c.R;
  s.build_list = c.L_b;
  s.prune_alpha = c.prune_alpha;
  s.pq_subspaces = c.pq_subspaces;
  s.seed = c.seed;
  s.gc_threshold = c.gc_threshold;
  s.merge_threshold_fraction = c.merge_fraction;
  return s;
}

EngineOptions engine_options(const RunConfig& c, bool auto_merge = true) {
  EngineOptions o;
  o.cache_entries = c.cache_entries;
  o.auto_merge = auto_merge;
  return o;
}

// Live vectors of an engine as floats, for exact ground truth.
struct LiveSet {
  std::size_t dim = 0;
  std::vector<float> rows;  // indexed by id
  std::vector<bool> alive;

  void put(VectorId id, std::span<const float> v) {
    if (id >= alive.size()) {
      alive.resize(std::size_t{id} + 1, false);
      rows.resize(alive.size() * dim, 0.0f);
    }
    std::copy(v.begin(), v.end(), rows.begin() + std::size_t{id} * dim);
    alive[id] = true;
  }
  void erase(VectorId id) { alive[id] = false; }

  static LiveSet from(const Engine& e) {
    LiveSet s;
    s.dim = e.config().dim;
    for (auto id : e.live_ids()) {
      const Bytes raw = e.read_vector(id);
      s.put(id, VectorView{id, e.config().element_type, s.dim, raw}.to_floats());
    }
    return s;
  }

  std::vector<std::vector<VectorId>> truth(const std::vector<float>& queries, std::size_t k) const {
    std::vector<VectorId> ids;
    std::vector<float> packed;
    for (VectorId id = 0; id < alive.size(); ++id) {
      if (!alive[id]) continue;
      ids.push_back(id);
      packed.insert(packed.end(), rows.begin() + std::size_t{id} * dim, rows.begin() + (std::size_t{id} + 1) * dim);
    }
    std::vector<std::vector<VectorId>> out;
    for (std::size_t q = 0; q * dim < queries.size(); ++q) {
      std::vector<VectorId> row;
      for (const auto& n : brute_force_knn(packed, ids, dim, std::span<const float>(queries.data() + q * dim, dim), k)) {
        row.push_back(n.id);
      }
      out.push_back(std::move(row));
    }
    return out;
  }
};

struct QueryRecord {
  std::vector<Neighbor> neighbors;
  QueryStats stats;
  double latency_us = 0.0;
  double recall = 0.0;
};

// Runs every query once across `threads` workers.
std::vector<QueryRecord> run_queries(const Engine& e, const std::vector<float>& queries, const SearchParams& p,
                                     unsigned threads, double& wall_seconds) {
  const std::size_t dim = e.config().dim;
  const std::size_t n = queries.size() / dim;
  std::vector<QueryRecord> out(n);
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  const auto worker = [&] {
    try {
      for (std::size_t i = next++; i < n; i = next++) {
        const auto t = Clock::now();
        auto res = e.search(std::span<const float>(queries.data() + i * dim, dim), p);
        out[i].latency_us = seconds_since(t) * 1e6;
        out[i].neighbors = std::move(res.neighbors);
        out[i].stats = res.stats;
      }
    } catch (...) {
      std::lock_guard lock(failure_mu);
      if (!failure) failure = std::current_exception();
    }
  };
  const auto t = Clock::now();
  std::vector<std::thread> pool;
  for (unsigned i = 1; i < std::max(1u, threads); ++i) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  wall_seconds = seconds_since(t);
  if (failure) std::rethrow_exception(failure);
  return out;
}

double recall_of(const std::vector<Neighbor>& got, const std::vector<VectorId>& truth, std::size_t k) {
  std::vector<VectorId> ids;
  for (const auto& n : got) ids.push_back(n.id);
  return recall_at_k(ids, truth, std::min(k, truth.size()));
}

json aggregate(const std::vector<QueryRecord>& records, double wall_seconds) {
  std::vector<double> lat, rec;
  std::uint64_t hits = 0, graph = 0, vec = 0, trav = 0, pre = 0, pq = 0, reranked = 0, early = 0, errors = 0;
  for (const auto& r : records) {
    lat.push_back(r.latency_us);
    rec.push_back(r.recall);
    hits += r.stats.cache_hits;
    graph += r.stats.graph_ios;
    vec += r.stats.vector_ios;
    trav += r.stats.traversal_vector_ios;
    pre += r.stats.prefetch_ios;
    pq += r.stats.pq_evals;
    reranked += r.stats.reranked;
    early += r.stats.terminated_early ? 1 : 0;
    errors += r.stats.read_errors;
  }
  const double n = std::max<double>(1.0, static_cast<double>(records.size()));
  return {{"queries", records.size()},
          {"wall_seconds", wall_seconds},
          {"qps", wall_seconds > 0 ? static_cast<double>(records.size()) / wall_seconds : 0.0},
          {"mean_latency_us", mean(lat)},
          {"p50_latency_us", percentile(lat, 0.50)},
          {"p99_latency_us", percentile(lat, 0.99)},
          {"mean_recall", mean(rec)},
          {"cache_hits", hits},
          {"graph_ios", graph},
          {"cache_hit_rate", hits + graph ? static_cast<double>(hits) / static_cast<double>(hits + graph) : 0.0},
          {"vector_ios", vec},
          {"traversal_vector_ios", trav},
          {"prefetch_ios", pre},
          {"mean_pq_evals", static_cast<double>(pq) / n},
          {"mean_reranked", static_cast<double>(reranked) / n},
          {"terminated_early_fraction", static_cast<double>(early) / n},
          {"read_errors", errors}};
}

SearchParams search_params(const RunConfig& c, std::uint32_t L) {
  return SearchParams{c.K, L, c.W, c.B, c.benefit_threshold};
}

json storage_summary(const StorageBreakdown& s) {
  return {{"vector_bytes", s.vector_segment_bytes},
          {"index_bytes", s.graph_data_bytes + s.graph_sparse_bytes},
          {"metadata_bytes", s.chunk_metadata_bytes + s.idmap_bytes + s.pq_codebook_bytes + s.pq_codes_bytes +
                                 s.tombstone_bytes + s.config_bytes + s.other_bytes},
          {"total_bytes", s.total_bytes},
          {"colocated_bytes", s.colocated_bytes}};
}

}  // namespace

void RunConfig::validate() const {
  if (threads == 0) throw UsageError("--threads must be >= 1");
  if (L_s.empty()) throw UsageError("--Ls needs at least one value");
  for (auto L : L_s) search_params(*this, L).validate();
  if (repeat == 0) throw UsageError("--repeat must be >= 1");
  if (!(update_fraction > 0.0 && update_fraction < 1.0)) throw UsageError("--update-fraction must be in (0, 1)");
}

json cmd_build(const RunConfig& c, std::ostream& out, std::ostream& log) {
  c.validate();
  if (c.store.empty()) throw UsageError("missing --store");
  const Dataset data = load(c.data);
  const auto t = Clock::now();
  auto engine = Engine::build(c.store, data, store_config(c), engine_options(c));
  const double seconds = seconds_since(t);
  const auto s = engine->storage();
  json j{{"type", "build"},
         {"vectors", data.size()},
         {"dim", data.dim()},
         {"element_type", element_type_name(data.type())},
         {"build_seconds", seconds},
         {"storage", s.to_json()},
         {"decoupled_to_colocated", s.colocated_bytes ? static_cast<double>(s.total_bytes) / s.colocated_bytes : 0.0}};
  emit(out, j);
  log << "built " << data.size() << " vectors in " << seconds << " s; store " << s.total_bytes << " bytes vs "
      << s.colocated_bytes << " co-located\n";
  return j;
}

json cmd_bench(const RunConfig& c, std::ostream& out, std::ostream& log) {
  c.validate();
  if (c.truth.empty() && !c.oracle) throw UsageError("bench needs --truth or --oracle");
  if (c.store.empty()) throw UsageError("missing --store");
  auto engine = Engine::open(c.store, engine_options(c, false));
  const auto queries = load_queries(c, engine->config().dim);
  const std::size_t nq = queries.size() / engine->config().dim;

  std::vector<std::vector<VectorId>> truth;
  if (!c.truth.empty()) {
    truth = load_id_lists(c.truth);
    if (truth.size() < nq) throw UsageError("ground truth has fewer rows than queries");
  } else {
    truth = LiveSet::from(*engine).truth(queries, c.K);
  }

  json aggregates = json::array();
  for (auto L : c.L_s) {
    const auto p = search_params(c, L);
    for (unsigned pass = 0; pass < c.repeat; ++pass) {
      double wall = 0;
      auto records = run_queries(*engine, queries, p, c.threads, wall);
      for (std::size_t i = 0; i < records.size(); ++i) {
        auto& r = records[i];
        r.recall = recall_of(r.neighbors, truth[i], c.K);
        json ids = json::array();
        for (const auto& n : r.neighbors) ids.push_back(n.id);
        json line{{"type", "query"}, {"L_s", L}, {"pass", pass}, {"query", i}, {"ids", ids},
                  {"recall", r.recall}, {"latency_us", r.latency_us}};
        line.update(r.stats.to_json());
        emit(out, line);
      }
      json agg = aggregate(records, wall);
      agg["type"] = "aggregate";
      agg["L_s"] = L;
      agg["pass"] = pass;
      emit(out, agg);
      log << "L_s=" << L << " pass " << pass << ": recall@" << c.K << " " << agg["mean_recall"].get<double>() << ", "
          << agg["qps"].get<double>() << " QPS, p99 " << agg["p99_latency_us"].get<double>() << " us, hit rate "
          << agg["cache_hit_rate"].get<double>() << "\n";
      aggregates.push_back(agg);
    }
  }
  json storage{{"type", "storage"}};
  storage.update(storage_summary(engine->storage()));
  emit(out, storage);
  return {{"aggregates", aggregates}, {"storage", storage}};
}

json cmd_analyze(const RunConfig& c, std::ostream& out, std::ostream& log) {
  const Dataset data = load(c.data);
  const auto r = characterize(data);
  json j{{"type", "analyze"},
         {"vectors", data.size()},
         {"dim", data.dim()},
         {"global_dispersion", r.global_dispersion},
         {"dimensional_dispersion", r.dimensional_dispersion},
         {"global_entropy", r.global_entropy},
         {"columnar_entropy", r.columnar_entropy},
         {"per_dimension_stddev", r.per_dimension_stddev},
         {"per_byte_entropy", r.per_byte_entropy}};
  emit(out, j);
  log << "dispersion global " << r.global_dispersion << " / dimensional " << r.dimensional_dispersion
      << "; entropy global " << r.global_entropy << " / columnar " << r.columnar_entropy << " bits\n";
  return j;
}

json cmd_stats(const RunConfig& c, std::ostream& out, std::ostream& log) {
  if (c.store.empty()) throw UsageError("missing --store");
  auto engine = Engine::open(c.store, engine_options(c, false));
  const auto s = engine->storage();
  json j{{"type", "stats"}, {"storage", s.to_json()}, {"config", engine->config().to_json()}};
  j["graph_vertices"] = engine->graph()->num_vertices();
  j["pending_inserts"] = engine->pending_inserts();
  j["tombstones"] = engine->pending_deletes();
  json segs = json::array();
  for (const auto& g : engine->segments()) {
    segs.push_back({{"segment_id", g.segment_id},
                    {"sealed", g.state == SegmentState::kSealed},
                    {"stored", g.stored_count},
                    {"stale", g.stale_count},
                    {"data_bytes", g.data_bytes},
                    {"chunk_metadata_bytes", g.chunk_metadata_bytes},
                    {"garbage_ratio", g.garbage_ratio}});
  }
  j["segments"] = segs;
  emit(out, j);
  log << "total " << s.total_bytes << " bytes (vectors " << s.vector_segment_bytes << ", graph "
      << s.graph_data_bytes + s.graph_sparse_bytes << ", metadata " << s.chunk_metadata_bytes << "); co-located "
      << s.colocated_bytes << "\n";
  return j;
}

json cmd_update_bench(const RunConfig& c, std::ostream& out, std::ostream& log) {
  c.validate();
  if (c.iterations == 0) return cmd_bench(c, out, log);
  if (c.store.empty()) throw UsageError("missing --store");
  auto engine = Engine::open(c.store, engine_options(c, false));
  const std::size_t dim = engine->config().dim;
  const auto queries = load_queries(c, dim);
  const Dataset pool = load(c.data);
  if (pool.dim() != dim || pool.type() != engine->config().element_type) {
    throw UsageError("--data must match the store's dimension and element type");
  }

  LiveSet live = LiveSet::from(*engine);
  const std::size_t base = engine->live_count();
  const auto per_iter = static_cast<std::size_t>(std::llround(c.update_fraction * static_cast<double>(base)));
  if (per_iter == 0) throw UsageError("update fraction selects no vectors");
  if (pool.size() < per_iter * c.iterations) {
    throw UsageError("--data holds " + std::to_string(pool.size()) + " vectors; the schedule inserts " +
                     std::to_string(per_iter * c.iterations));
  }
  const std::uint64_t index_bytes = engine->storage().graph_data_bytes + engine->storage().graph_sparse_bytes;
  const auto L = c.L_s.front();
  const auto p = search_params(c, L);

  // deleted_at[id] = 1-based order of deletion; a query that starts after
  // deletion k must not return any id with deleted_at <= k.
  const std::size_t max_id = engine->graph()->num_vertices() + engine->pending_inserts() + per_iter * c.iterations + 1;
  std::vector<std::atomic<std::uint32_t>> deleted_at(max_id);
  std::atomic<std::uint32_t> deleted_seq{0};

  std::mt19937_64 rng(c.seed);
  std::size_t pool_next = 0;
  std::uint64_t graph_bytes_total = 0, violations_total = 0;
  json iterations = json::array();

  for (unsigned it = 0; it < c.iterations; ++it) {
    std::atomic<bool> stop{false};
    std::atomic<std::uint64_t> violations{0};
    std::vector<double> latencies;
    std::mutex lat_mu;
    std::vector<std::thread> workers;
    for (unsigned w = 0; w < c.threads; ++w) {
      workers.emplace_back([&, w] {
        std::size_t q = w;
        const std::size_t nq = queries.size() / dim;
        while (!stop) {
          const std::uint32_t floor = deleted_seq.load();
          const auto t = Clock::now();
          const auto res = engine->search(std::span<const float>(queries.data() + (q % nq) * dim, dim), p);
          const double us = seconds_since(t) * 1e6;
          for (const auto& n : res.neighbors) {
            const auto d = n.id < deleted_at.size() ? deleted_at[n.id].load() : 0u;
            if (d != 0 && d <= floor) ++violations;
          }
          std::lock_guard lock(lat_mu);
          latencies.push_back(us);
          ++q;
        }
      });
    }

    std::vector<VectorId> ids = engine->live_ids();
    std::shuffle(ids.begin(), ids.end(), rng);
    ids.resize(std::min(per_iter, ids.size()));
    std::sort(ids.begin(), ids.end());
    for (auto id : ids) {
      engine->remove(id);
      deleted_at[id] = deleted_seq.load() + 1;
      ++deleted_seq;
      live.erase(id);
    }
    for (std::size_t i = 0; i < per_iter; ++i, ++pool_next) {
      const auto id = engine->insert_raw(pool[pool_next].bytes);
      live.put(id, pool[pool_next].to_floats());
    }
    const auto merge = engine->merge();
    stop = true;
    for (auto& th : workers) th.join();

    // Post-merge recall against the live set, sequential and quiescent.
    const auto truth = live.truth(queries, c.K);
    double wall = 0;
    auto records = run_queries(*engine, queries, p, 1, wall);
    std::uint64_t stale_hits = 0;
    for (std::size_t i = 0; i < records.size(); ++i) {
      records[i].recall = recall_of(records[i].neighbors, truth[i], c.K);
      for (const auto& n : records[i].neighbors) {
        if (!engine->is_live(n.id)) ++stale_hits;
      }
    }
    const auto agg = aggregate(records, wall);
    graph_bytes_total += merge.graph_bytes_written;
    violations_total += violations + stale_hits;
    const auto storage = engine->storage();
    json line{{"type", "iteration"},
              {"iteration", it + 1},
              {"deleted", ids.size()},
              {"inserted", per_iter},
              {"merge", merge.to_json()},
              {"storage_bytes", storage.total_bytes},
              {"vector_bytes", storage.vector_segment_bytes},
              {"graph_bytes", storage.graph_data_bytes + storage.graph_sparse_bytes},
              {"recall", agg["mean_recall"]},
              {"post_merge", agg},
              {"concurrent_queries", latencies.size()},
              {"concurrent_mean_latency_us", mean(latencies)},
              {"concurrent_p99_latency_us", percentile(latencies, 0.99)},
              {"tombstone_violations", violations.load() + stale_hits},
              {"cumulative_graph_bytes_written", graph_bytes_total}};
    emit(out, line);
    log << "iteration " << it + 1 << ": recall " << agg["mean_recall"].get<double>() << ", graph bytes written "
        << merge.graph_bytes_written << ", store " << storage.total_bytes << " bytes, violations "
        << violations.load() + stale_hits << "\n";
    iterations.push_back(line);
  }

  const auto final_storage = engine->storage();
  json summary{{"type", "update_summary"},
               {"iterations", c.iterations},
               {"full_index_bytes", index_bytes},
               {"cumulative_graph_bytes_written", graph_bytes_total},
               {"rewrite_to_index_ratio", index_bytes ? static_cast<double>(graph_bytes_total) / index_bytes : 0.0},
               {"monolithic_rewrite_bytes", index_bytes * c.iterations},
               {"tombstone_violations", violations_total},
               {"final_storage", final_storage.to_json()}};
  if (c.compare_rebuild) {
    Dataset rest(dim, engine->config().element_type);
    for (auto id : engine->live_ids()) rest.append(engine->read_vector(id));
    const fs::path tmp = c.store.parent_path() / (c.store.filename().string() + ".rebuild");
    fs::remove_all(tmp);
    StoreConfig cfg = engine->config();
    cfg.segment_capacity = 0;
    cfg.chunk_vectors = 0;
    {
      auto fresh = Engine::build(tmp, rest, cfg, engine_options(c, false));
      const auto s = fresh->storage();
      summary["rebuild_storage"] = s.to_json();
      summary["final_to_rebuild_ratio"] = static_cast<double>(final_storage.total_bytes) / s.total_bytes;
      summary["final_to_rebuild_vector_ratio"] =
          static_cast<double>(final_storage.vector_segment_bytes) / s.vector_segment_bytes;
    }
    fs::remove_all(tmp);
  }
  emit(out, summary);
  log << "graph bytes rewritten " << graph_bytes_total << " = " << summary["rewrite_to_index_ratio"].get<double>()
      << "x index size; violations " << violations_total << "\n";
  return {{"iterations", iterations}, {"summary", summary}};
}

json cmd_generate(const RunConfig& c, std::ostream& out, std::ostream& log) {
  if (c.data.empty()) throw UsageError("missing --data output path");
  const ElementType type = parse_element_type(c.element_type);
  const std::size_t total = c.count + (c.queries.empty() ? 0 : c.query_count);
  Dataset all;
  if (c.kind == "structured") {
    all = generate_structured(total, c.dim, type, c.seed);
  } else if (c.kind == "clustered") {
    all = generate_clustered(total, c.dim, type, c.seed);
  } else if (c.kind == "uniform") {
    all = generate_uniform(total, c.dim, type, c.seed);
  } else {
    throw UsageError("unknown generator '" + c.kind + "' (structured, clustered, uniform)");
  }
  save_dataset(c.data, all.slice(0, c.count), vecs_format_from_path(c.data));
  if (!c.queries.empty()) save_dataset(c.queries, all.slice(c.count, c.query_count), vecs_format_from_path(c.queries));
  json j{{"type", "generate"}, {"kind", c.kind}, {"count", c.count}, {"queries", c.queries.empty() ? 0 : c.query_count},
         {"dim", c.dim}, {"element_type", element_type_name(type)}, {"seed", c.seed}};
  emit(out, j);
  log << "wrote " << c.count << " " << c.kind << " vectors to " << c.data.string() << "\n";
  return j;
}

}  // namespace dvs
