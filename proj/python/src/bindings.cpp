#include <limits>
#include <optional>

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "dvs/core/characterize.hpp"
#include "dvs/core/dataset.hpp"
#include "dvs/core/knn.hpp"
#include "dvs/update/engine.hpp"

namespace py = pybind11;
using namespace dvs;

namespace {

py::object to_python(const nlohmann::json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

ElementType element_type_of(const py::dtype& dt) {
  if (dt.is(py::dtype::of<float>())) return ElementType::kFloat32;
  if (dt.is(py::dtype::of<std::uint8_t>())) return ElementType::kUint8;
  if (dt.is(py::dtype::of<std::int8_t>())) return ElementType::kInt8;
  throw UsageError("unsupported dtype " + py::str(dt).cast<std::string>() + "; use float32, uint8 or int8");
}

py::dtype dtype_of(ElementType t) {
  switch (t) {
    case ElementType::kFloat32:
      return py::dtype::of<float>();
    case ElementType::kUint8:
      return py::dtype::of<std::uint8_t>();
    case ElementType::kInt8:
      return py::dtype::of<std::int8_t>();
  }
  throw UsageError("unknown element type");
}

Dataset dataset_from(const py::array& a) {
  if (a.ndim() != 2) throw UsageError("expected a 2-D array (rows x dim)");
  const auto arr = py::array::ensure(a, py::array::c_style);
  Dataset d(static_cast<std::size_t>(arr.shape(1)), element_type_of(arr.dtype()));
  const auto* p = static_cast<const std::uint8_t*>(arr.data());
  const std::size_t v = d.vector_bytes();
  d.reserve(static_cast<std::size_t>(arr.shape(0)));
  for (py::ssize_t i = 0; i < arr.shape(0); ++i) d.append(ByteSpan(p + i * v, v));
  return d;
}

py::array array_from(const Dataset& d) {
  py::array out(dtype_of(d.type()), {static_cast<py::ssize_t>(d.size()), static_cast<py::ssize_t>(d.dim())});
  std::copy(d.raw().begin(), d.raw().end(), static_cast<std::uint8_t*>(out.mutable_data()));
  return out;
}

std::vector<float> floats_of(const py::array& a, std::size_t dim) {
  const auto f = py::array_t<float, py::array::c_style | py::array::forcecast>::ensure(a);
  if (!f) throw UsageError("query must be numeric");
  if (f.size() % static_cast<py::ssize_t>(dim) != 0 || f.size() == 0) {
    throw UsageError("query length must be a positive multiple of dim " + std::to_string(dim));
  }
  return {f.data(), f.data() + f.size()};
}

SearchParams params(std::uint32_t k, std::uint32_t L, std::uint32_t W, std::uint32_t B, float threshold) {
  SearchParams p{k, L, W, B, threshold};
  p.validate();
  return p;
}

class PyEngine {
 public:
  explicit PyEngine(std::unique_ptr<Engine> e) : e_(std::move(e)) {}

  Engine& get() {
    if (!e_) throw UsageError("engine is closed");
    return *e_;
  }
  void close() { e_.reset(); }

 private:
  std::unique_ptr<Engine> e_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Disk-based approximate nearest neighbor search engine";

  static py::exception<Error> base(m, "Error");
  static py::exception<UsageError> usage(m, "UsageError", base.ptr());
  static py::exception<FormatError> format(m, "FormatError", base.ptr());
  static py::exception<CorruptionError> corruption(m, "CorruptionError", base.ptr());
  static py::exception<NotFoundError> not_found(m, "NotFoundError", base.ptr());
  static py::exception<IoError> io(m, "IoError", base.ptr());
  static py::exception<InfeasibleError> infeasible(m, "InfeasibleError", base.ptr());
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const UsageError& e) {
      py::set_error(usage, e.what());
    } catch (const FormatError& e) {
      py::set_error(format, e.what());
    } catch (const CorruptionError& e) {
      py::set_error(corruption, e.what());
    } catch (const NotFoundError& e) {
      py::set_error(not_found, e.what());
    } catch (const IoError& e) {
      py::set_error(io, e.what());
    } catch (const InfeasibleError& e) {
      py::set_error(infeasible, e.what());
    } catch (const Error& e) {
      py::set_error(base, e.what());
    }
  });

  m.def(
      "generate",
      [](const std::string& kind, std::size_t count, std::size_t dim, const py::object& dtype, std::uint64_t seed) {
        const ElementType t = element_type_of(py::dtype::from_args(dtype));
        Dataset d;
        if (kind == "structured") {
          d = generate_structured(count, dim, t, seed);
        } else if (kind == "clustered") {
          d = generate_clustered(count, dim, t, seed);
        } else if (kind == "uniform") {
          d = generate_uniform(count, dim, t, seed);
        } else {
          throw UsageError("unknown kind '" + kind + "'; use structured, clustered or uniform");
        }
        return array_from(d);
      },
      py::arg("kind"), py::arg("count"), py::arg("dim"), py::arg("dtype") = py::dtype::of<float>(),
      py::arg("seed") = 42, "Synthetic dataset as a (count, dim) array.");

  m.def(
      "characterize",
      [](const py::array& data) {
        const auto r = characterize(dataset_from(data));
        py::dict d;
        d["global_dispersion"] = r.global_dispersion;
        d["dimensional_dispersion"] = r.dimensional_dispersion;
        d["global_entropy"] = r.global_entropy;
        d["columnar_entropy"] = r.columnar_entropy;
        return d;
      },
      py::arg("data"), "Dispersion and byte-entropy statistics of a dataset.");

  m.def(
      "brute_force_knn",
      [](const py::array& data, const py::array& queries, std::size_t k) {
        const Dataset d = dataset_from(data);
        const auto q = floats_of(queries, d.dim());
        const std::size_t nq = q.size() / d.dim();
        const auto rows = d.to_float_matrix();
        std::vector<VectorId> ids(d.size());
        for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<VectorId>(i);
        py::array_t<std::int64_t> out({static_cast<py::ssize_t>(nq), static_cast<py::ssize_t>(k)});
        auto w = out.mutable_unchecked<2>();
        {
          py::gil_scoped_release release;
          for (std::size_t i = 0; i < nq; ++i) {
            const auto row = brute_force_knn(rows, ids, d.dim(), std::span<const float>(q.data() + i * d.dim(), d.dim()), k);
            for (std::size_t j = 0; j < k; ++j) w(i, j) = j < row.size() ? row[j].id : -1;
          }
        }
        return out;
      },
      py::arg("data"), py::arg("queries"), py::arg("k") = 10, "Exact k nearest row indices by squared L2.");

  py::class_<PyEngine>(m, "Engine")
      .def_static(
          "build",
          [](const std::string& path, const py::array& data, std::uint32_t R, std::uint32_t L_b, float prune_alpha,
             std::uint64_t segment_bytes, std::uint64_t chunk_bytes, std::optional<double> beta,
             std::uint32_t pq_subspaces, std::uint64_t seed, std::size_t cache_entries, bool auto_merge) {
            const Dataset d = dataset_from(data);
            StoreConfig c;
            c.dim = d.dim();
            c.element_type = d.type();
            c.max_degree = R;
            c.build_list = L_b;
            c.prune_alpha = prune_alpha;
            c.segment_bytes = segment_bytes;
            c.chunk_bytes = chunk_bytes;
            c.beta = beta;
            c.pq_subspaces = pq_subspaces;
            c.seed = seed;
            EngineOptions o;
            o.cache_entries = cache_entries;
            o.auto_merge = auto_merge;
            py::gil_scoped_release release;
            return PyEngine(Engine::build(path, d, c, o));
          },
          py::arg("path"), py::arg("data"), py::arg("R") = 96, py::arg("L_b") = 100, py::arg("prune_alpha") = 1.2f,
          py::arg("segment_bytes") = 512ull << 20, py::arg("chunk_bytes") = 4ull << 20, py::arg("beta") = py::none(),
          py::arg("pq_subspaces") = 0, py::arg("seed") = 42, py::arg("cache_entries") = 0,
          py::arg("auto_merge") = true, "Builds a store from a (rows, dim) array into an empty directory.")
      .def_static(
          "open",
          [](const std::string& path, std::size_t cache_entries, bool auto_merge) {
            EngineOptions o;
            o.cache_entries = cache_entries;
            o.auto_merge = auto_merge;
            py::gil_scoped_release release;
            return PyEngine(Engine::open(path, o));
          },
          py::arg("path"), py::arg("cache_entries") = 0, py::arg("auto_merge") = true)
      .def(
          "search",
          [](PyEngine& self, const py::array& query, std::uint32_t k, std::uint32_t L_s, std::uint32_t W,
             std::uint32_t B, float threshold, bool with_stats) -> py::object {
            Engine& e = self.get();
            const auto q = floats_of(query, e.config().dim);
            if (q.size() != e.config().dim) throw UsageError("search takes one query; use batch_search");
            const auto p = params(k, L_s, W, B, threshold);
            SearchResult r;
            {
              py::gil_scoped_release release;
              r = e.search(q, p);
            }
            py::array_t<std::int64_t> ids(static_cast<py::ssize_t>(r.neighbors.size()));
            py::array_t<float> dist(static_cast<py::ssize_t>(r.neighbors.size()));
            for (std::size_t i = 0; i < r.neighbors.size(); ++i) {
              ids.mutable_at(i) = r.neighbors[i].id;
              dist.mutable_at(i) = r.neighbors[i].distance;
            }
            if (with_stats) return py::make_tuple(ids, dist, to_python(r.stats.to_json()));
            return py::make_tuple(ids, dist);
          },
          py::arg("query"), py::arg("k") = 10, py::arg("L_s") = 100, py::arg("W") = 4, py::arg("B") = 10,
          py::arg("threshold") = 0.01f, py::arg("with_stats") = false,
          "Returns (ids, squared distances), plus a stats dict when with_stats is set.")
      .def(
          "batch_search",
          [](PyEngine& self, const py::array& queries, std::uint32_t k, std::uint32_t L_s, std::uint32_t W,
             std::uint32_t B, float threshold) {
            Engine& e = self.get();
            const std::size_t dim = e.config().dim;
            const auto q = floats_of(queries, dim);
            const std::size_t nq = q.size() / dim;
            const auto p = params(k, L_s, W, B, threshold);
            py::array_t<std::int64_t> ids({static_cast<py::ssize_t>(nq), static_cast<py::ssize_t>(k)});
            py::array_t<float> dist({static_cast<py::ssize_t>(nq), static_cast<py::ssize_t>(k)});
            auto wi = ids.mutable_unchecked<2>();
            auto wd = dist.mutable_unchecked<2>();
            {
              py::gil_scoped_release release;
              for (std::size_t i = 0; i < nq; ++i) {
                const auto r = e.search(std::span<const float>(q.data() + i * dim, dim), p);
                for (std::size_t j = 0; j < k; ++j) {
                  const bool have = j < r.neighbors.size();
                  wi(i, j) = have ? static_cast<std::int64_t>(r.neighbors[j].id) : -1;
                  wd(i, j) = have ? r.neighbors[j].distance : std::numeric_limits<float>::infinity();
                }
              }
            }
            return py::make_tuple(ids, dist);
          },
          py::arg("queries"), py::arg("k") = 10, py::arg("L_s") = 100, py::arg("W") = 4, py::arg("B") = 10,
          py::arg("threshold") = 0.01f, "Searches each row; missing results are -1 / inf.")
      .def(
          "insert",
          [](PyEngine& self, py::array vector) {
            Engine& e = self.get();
            if (vector.ndim() == 1) vector = vector.reshape({py::ssize_t{1}, vector.shape(0)});
            const Dataset d = dataset_from(vector);
            if (d.dim() != e.config().dim || d.type() != e.config().element_type || d.size() != 1) {
              throw UsageError("insert takes one vector matching the store's dim and dtype");
            }
            py::gil_scoped_release release;
            return e.insert_raw(d.raw());
          },
          py::arg("vector"), "Buffers one vector; returns its id.")
      .def(
          "remove", [](PyEngine& self, VectorId id) { self.get().remove(id); }, py::arg("id"))
      .def("merge",
           [](PyEngine& self) {
             MergeStats s;
             {
               py::gil_scoped_release release;
               s = self.get().merge();
             }
             return to_python(s.to_json());
           })
      .def(
          "run_gc",
          [](PyEngine& self, double threshold) {
            py::gil_scoped_release release;
            return self.get().run_gc(threshold);
          },
          py::arg("threshold") = 0.3, "Compacts segments at or above the garbage ratio; returns bytes reclaimed.")
      .def(
          "read_vector",
          [](PyEngine& self, VectorId id) {
            Engine& e = self.get();
            const Bytes b = e.read_vector(id);
            py::array out(dtype_of(e.config().element_type), std::vector<py::ssize_t>{static_cast<py::ssize_t>(e.config().dim)});
            std::copy(b.begin(), b.end(), static_cast<std::uint8_t*>(out.mutable_data()));
            return out;
          },
          py::arg("id"))
      .def("is_live", [](PyEngine& self, VectorId id) { return self.get().is_live(id); }, py::arg("id"))
      .def("live_ids", [](PyEngine& self) { return self.get().live_ids(); })
      .def("__len__", [](PyEngine& self) { return self.get().live_count(); })
      .def_property_readonly("dim", [](PyEngine& self) { return self.get().config().dim; })
      .def_property_readonly("dtype", [](PyEngine& self) { return dtype_of(self.get().config().element_type); })
      .def_property_readonly("pending_inserts", [](PyEngine& self) { return self.get().pending_inserts(); })
      .def_property_readonly("pending_deletes", [](PyEngine& self) { return self.get().pending_deletes(); })
      .def("config", [](PyEngine& self) { return to_python(self.get().config().to_json()); })
      .def("storage", [](PyEngine& self) { return to_python(self.get().storage().to_json()); })
      .def("close", &PyEngine::close, "Releases the store lock; later calls raise UsageError.")
      .def("__enter__", [](PyEngine& self) -> PyEngine& { return self; })
      .def("__exit__", [](PyEngine& self, const py::args&) { self.close(); });
}
