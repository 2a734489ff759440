#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <fstream>

#include "lshmf/experiment.hpp"
#include "lshmf/lsh.hpp"
#include "lshmf/similarity.hpp"
#include "lshmf/synthetic.hpp"

namespace py = pybind11;
using namespace lshmf;

namespace {

using IndexArray = py::array_t<Index, py::array::c_style | py::array::forcecast>;
using ValueArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

std::vector<RatingTriplet> to_triplets(const IndexArray& rows, const IndexArray& cols, const ValueArray& values) {
    if (rows.ndim() != 1 || cols.ndim() != 1 || values.ndim() != 1 || rows.size() != cols.size() ||
        rows.size() != values.size()) {
        throw std::invalid_argument("rows, cols and values must be 1-D arrays of equal length");
    }
    std::vector<RatingTriplet> out(static_cast<std::size_t>(rows.size()));
    const auto r = rows.unchecked<1>();
    const auto c = cols.unchecked<1>();
    const auto v = values.unchecked<1>();
    for (py::ssize_t x = 0; x < rows.size(); ++x) out[x] = {r(x), c(x), v(x)};
    return out;
}

py::tuple from_triplets(std::span<const RatingTriplet> t) {
    const auto n = static_cast<py::ssize_t>(t.size());
    IndexArray rows(std::vector<py::ssize_t>{n}, std::vector<py::ssize_t>{sizeof(Index)});
    IndexArray cols(std::vector<py::ssize_t>{n}, std::vector<py::ssize_t>{sizeof(Index)});
    ValueArray values(std::vector<py::ssize_t>{n}, std::vector<py::ssize_t>{sizeof(double)});
    Index* r = rows.mutable_data();
    Index* c = cols.mutable_data();
    double* v = values.mutable_data();
    for (std::size_t x = 0; x < t.size(); ++x) {
        r[x] = t[x].row;
        c[x] = t[x].col;
        v[x] = t[x].value;
    }
    return py::make_tuple(rows, cols, values);
}

IndexArray table_array(const NeighborTable& t) {
    IndexArray out({static_cast<py::ssize_t>(t.columns()), static_cast<py::ssize_t>(t.k())});
    std::copy(t.entries().begin(), t.entries().end(), out.mutable_data());
    return out;
}

NeighborTable array_table(const IndexArray& a) {
    if (a.ndim() != 2) throw std::invalid_argument("neighbor table must be 2-D (N, K)");
    return NeighborTable(static_cast<Index>(a.shape(0)), static_cast<Index>(a.shape(1)),
                         std::vector<Index>(a.data(), a.data() + a.size()));
}

ValueArray vector_array(const std::vector<double>& v, py::ssize_t rows, py::ssize_t cols) {
    ValueArray out({rows, cols});
    std::copy(v.begin(), v.end(), out.mutable_data());
    return out;
}

RunConfig make_config(const std::map<std::string, std::string>& settings) {
    RunConfig c;
    // presets first so explicit rates override them
    if (const auto p = settings.find("preset"); p != settings.end()) apply_setting(c, p->first, p->second);
    for (const auto& [key, value] : settings) {
        if (key != "preset") apply_setting(c, key, value);
    }
    c.propagate_seed();
    c.validate();
    return c;
}

// Parameters together with the training matrix their neighbor terms read from.
struct Model {
    ModelParams params;
    SparseRatings train;

    double predict(Index i, Index j) const {
        if (i >= params.rows() || j >= params.cols()) throw py::index_error("row or column out of range");
        return lshmf::predict(i, j, params, train);
    }

    double rmse(const IndexArray& rows, const IndexArray& cols, const ValueArray& values) const {
        const auto t = to_triplets(rows, cols, values);
        return lshmf::rmse(params, t, train);
    }
};

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Matrix factorization with neighborhood terms and simLSH Top-K";

    py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
    py::register_exception<DivergenceError>(m, "DivergenceError", PyExc_RuntimeError);

    py::class_<SparseRatings>(m, "Ratings")
        .def_static(
            "from_arrays",
            [](const IndexArray& rows, const IndexArray& cols, const ValueArray& values, Index n_rows,
               Index n_cols) { return build_indices(to_triplets(rows, cols, values), n_rows, n_cols); },
            py::arg("rows"), py::arg("cols"), py::arg("values"), py::arg("n_rows"), py::arg("n_cols"))
        .def_static(
            "load",
            [](const std::string& path, const std::string& delimiter, std::optional<double> scale,
               std::optional<double> zero_floor) {
                return load_ratings(path, parse_delimiter(delimiter), TransformOptions{zero_floor, scale});
            },
            py::arg("path"), py::arg("delimiter") = "auto", py::arg("scale") = py::none(),
            py::arg("zero_floor") = py::none())
        .def("save", [](const SparseRatings& r, const std::string& path) { save_matrix_file(path, r); })
        .def_property_readonly("rows", &SparseRatings::rows)
        .def_property_readonly("cols", &SparseRatings::cols)
        .def_property_readonly("nnz", &SparseRatings::nnz)
        .def("triplets", [](const SparseRatings& r) { return from_triplets(r.triplets()); })
        .def("get", &SparseRatings::find, py::arg("i"), py::arg("j"));

    m.def(
        "split_holdout",
        [](const SparseRatings& r, double fraction, std::uint64_t seed) {
            auto s = split_holdout(r, fraction, seed);
            return py::make_tuple(std::move(s.train), from_triplets(s.test));
        },
        py::arg("ratings"), py::arg("test_fraction"), py::arg("seed"));

    m.def(
        "planted_clusters",
        [](Index rows, Index cols, Index clusters, Index rows_per_cluster, double keep, double noise,
           std::uint64_t seed) {
            auto p = planted_clusters({rows, cols, clusters, rows_per_cluster, keep, noise, seed});
            return py::make_tuple(std::move(p.ratings), p.cluster_of);
        },
        py::arg("rows") = 1000, py::arg("cols") = 500, py::arg("clusters") = 10, py::arg("rows_per_cluster") = 100,
        py::arg("keep") = 0.8, py::arg("noise") = 0.5, py::arg("seed") = 0);
    m.def("random_sparse", &random_sparse, py::arg("rows"), py::arg("cols"), py::arg("density"), py::arg("seed"));

    m.def("pearson", &pearson, py::arg("ratings"), py::arg("j1"), py::arg("j2"));
    m.def("shrunk_similarity", &shrunk_similarity, py::arg("ratings"), py::arg("j1"), py::arg("j2"),
          py::arg("lambda_rho") = 100.0);
    m.def(
        "gsm_topk",
        [](const SparseRatings& r, Index k, double lambda_rho, unsigned workers) {
            NeighborTable t;
            {
                py::gil_scoped_release nogil;
                t = gsm_topk(r, {lambda_rho, k, workers});
            }
            return table_array(t);
        },
        py::arg("ratings"), py::arg("k"), py::arg("lambda_rho") = 100.0, py::arg("workers") = 1);
    m.def(
        "simlsh_topk",
        [](const SparseRatings& r, Index k, unsigned bits, unsigned p, unsigned q, unsigned psi_exponent,
           std::uint64_t seed) {
            LshConfig cfg;
            cfg.bits = bits;
            cfg.maps_per_group = p;
            cfg.groups = q;
            cfg.psi_exponent = psi_exponent;
            cfg.seed = seed;
            return table_array(simlsh_topk(r, cfg, k, false).neighbors);
        },
        py::arg("ratings"), py::arg("k"), py::arg("bits") = 8, py::arg("p") = 3, py::arg("q") = 100,
        py::arg("psi_exponent") = 2, py::arg("seed") = 0);
    m.def(
        "minhash_topk",
        [](const SparseRatings& r, Index k, unsigned hashes, unsigned bands, std::uint64_t seed) {
            return table_array(minhash_topk(r, hashes, bands, k, seed));
        },
        py::arg("ratings"), py::arg("k"), py::arg("hashes") = 120, py::arg("bands") = 40, py::arg("seed") = 0);
    m.def(
        "rpcos_topk",
        [](const SparseRatings& r, Index k, unsigned planes, unsigned p, unsigned q, std::uint64_t seed) {
            return table_array(rpcos_topk(r, planes, p, q, k, seed));
        },
        py::arg("ratings"), py::arg("k"), py::arg("planes") = 8, py::arg("p") = 3, py::arg("q") = 100,
        py::arg("seed") = 0);
    m.def(
        "random_topk", [](Index n, Index k, std::uint64_t seed) { return table_array(random_topk(n, k, seed)); },
        py::arg("columns"), py::arg("k"), py::arg("seed") = 0);
    m.def(
        "mean_overlap",
        [](const IndexArray& a, const IndexArray& b) { return mean_overlap(array_table(a), array_table(b)); },
        py::arg("a"), py::arg("b"));

    m.def("learning_rate", &learning_rate, py::arg("alpha"), py::arg("beta"), py::arg("t"));

    py::class_<Model>(m, "Model")
        .def_static(
            "load",
            [](const std::string& path, const SparseRatings& train) { return Model{load_model_file(path), train}; },
            py::arg("path"), py::arg("train"))
        .def("save", [](const Model& s, const std::string& path) { save_model_file(path, s.params); })
        .def("predict", &Model::predict, py::arg("i"), py::arg("j"))
        .def("rmse", &Model::rmse, py::arg("rows"), py::arg("cols"), py::arg("values"))
        .def_property_readonly("mu", [](const Model& s) { return s.params.mu; })
        .def_property_readonly("factors", [](const Model& s) { return s.params.factors; })
        .def_property_readonly("b", [](const Model& s) { return vector_array(s.params.b, s.params.rows(), 1); })
        .def_property_readonly("b_hat",
                               [](const Model& s) { return vector_array(s.params.b_hat, s.params.cols(), 1); })
        .def_property_readonly(
            "U", [](const Model& s) { return vector_array(s.params.U, s.params.rows(), s.params.factors); })
        .def_property_readonly(
            "V", [](const Model& s) { return vector_array(s.params.V, s.params.cols(), s.params.factors); })
        .def_property_readonly("W",
                               [](const Model& s) { return vector_array(s.params.W, s.params.cols(), s.params.k()); })
        .def_property_readonly("C",
                               [](const Model& s) { return vector_array(s.params.C, s.params.cols(), s.params.k()); })
        .def_property_readonly("neighbors", [](const Model& s) { return table_array(s.params.neighbors); });

    m.def(
        "run",
        [](const SparseRatings& train, const py::tuple& test, const std::map<std::string, std::string>& settings) {
            const auto config = make_config(settings);
            LoadedSplit data{train, {}};
            if (!test.empty()) {
                data.test = to_triplets(test[0].cast<IndexArray>(), test[1].cast<IndexArray>(),
                                        test[2].cast<ValueArray>());
            }
            ExperimentResult r;
            {
                py::gil_scoped_release nogil;
                r = run_experiment(config, data);
            }
            py::list epochs;
            for (const auto& e : r.epochs) {
                epochs.append(py::dict(py::arg("epoch") = e.epoch, py::arg("wall_seconds") = e.wall_seconds,
                                       py::arg("train_rmse") = e.train_rmse, py::arg("test_rmse") = e.test_rmse));
            }
            py::dict out;
            out["epochs"] = epochs;
            out["final_train_rmse"] = r.final_train_rmse;
            out["final_test_rmse"] = r.has_test ? py::object(py::float_(r.final_test_rmse)) : py::none();
            out["seconds"] = r.total_seconds;
            out["model"] = Model{std::move(r.params), train};
            return out;
        },
        py::arg("train"), py::arg("test") = py::tuple(), py::arg("settings") = std::map<std::string, std::string>{},
        "Builds the Top-K table and trains. `settings` takes the same keys as the CLI config file.");
}
