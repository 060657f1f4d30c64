#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "clidmu/correlation.hpp"
#include "clidmu/pseudo_clean.hpp"

namespace py = pybind11;
using namespace clidmu;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Matrix to_matrix(const Array& a) {
    if (a.ndim() != 2) throw py::value_error("expected a 2-D array");
    const auto rows = static_cast<std::size_t>(a.shape(0)), cols = static_cast<std::size_t>(a.shape(1));
    return Matrix(rows, cols, std::vector<double>(a.data(), a.data() + rows * cols));
}

Array to_array(const Matrix& m) {
    Array out({m.rows(), m.cols()});
    std::copy(m.values().begin(), m.values().end(), out.mutable_data());
    return out;
}

Array to_array(std::span<const double> v, std::size_t rows, std::size_t cols) {
    Array out({rows, cols});
    std::copy(v.begin(), v.end(), out.mutable_data());
    return out;
}

py::dict blocks_to_dict(const ParamVector& p) {
    py::dict out;
    for (const auto& b : p.blocks()) out[py::str(b.name)] = to_array(p.block_values(b.name), b.rows, b.cols);
    return out;
}

template <class E>
E parse_or_throw(std::optional<E> v, const std::string& what, const std::string& text) {
    if (!v) throw py::value_error("unknown " + what + " '" + text + "'");
    return *v;
}

struct PyTrainingResult {
    TrainingResult result;

    Array ensemble_predict(const Array& x) const { return to_array(clidmu::ensemble_predict(result.snapshots, to_matrix(x))); }
    std::string metrics_csv() const {
        std::ostringstream out;
        result.metrics.write_csv(out);
        return out.str();
    }
    std::vector<int> snapshot_epochs() const {
        std::vector<int> out;
        for (const auto& s : result.snapshots.entries()) out.push_back(s.epoch);
        return out;
    }
};

}  // namespace

PYBIND11_MODULE(_clidmu, m) {
    m.doc() = "Cross-layer information divergence and bilevel sample reweighting for noisy labels";
#ifdef CLIDMU_VERSION
    m.attr("__version__") = CLIDMU_VERSION;
#endif
    py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
    py::register_exception<DataError>(m, "DataError", PyExc_ValueError);

    py::class_<LabeledDataset>(m, "Dataset")
        .def(py::init([](const Array& x, std::vector<std::size_t> y_clean, std::vector<std::size_t> y_noisy,
                         std::size_t classes) {
                 LabeledDataset ds{to_matrix(x), std::move(y_clean), std::move(y_noisy), classes};
                 ds.validate();
                 return ds;
             }),
             py::arg("x"), py::arg("y_clean"), py::arg("y_noisy"), py::arg("classes"))
        .def_property_readonly("x", [](const LabeledDataset& d) { return to_array(d.x); })
        .def_readonly("y_clean", &LabeledDataset::y_clean)
        .def_readonly("y_noisy", &LabeledDataset::y_noisy)
        .def_readonly("classes", &LabeledDataset::classes)
        .def("__len__", &LabeledDataset::size)
        .def("noise_rate", &LabeledDataset::noise_rate)
        .def("subset", [](const LabeledDataset& d, const std::vector<std::size_t>& idx) { return d.subset(idx); });

    m.def("generate_blobs",
          [](std::uint64_t seed, std::size_t n, std::size_t dim, std::size_t classes, double class_sep) {
              return generate_blobs(seed, BlobSpec{n, dim, classes, class_sep});
          },
          py::arg("seed"), py::arg("n") = 1000, py::arg("dim") = 8, py::arg("classes") = 4, py::arg("class_sep") = 3.0);
    m.def("inject_noise",
          [](const LabeledDataset& d, const std::string& kind, double rate, std::uint64_t seed, double idn_std) {
              return inject_noise(d, NoiseSpec{parse_or_throw(parse_noise_kind(kind), "noise kind", kind), rate, seed,
                                               idn_std});
          },
          py::arg("dataset"), py::arg("kind"), py::arg("rate"), py::arg("seed"), py::arg("idn_std") = kDefaultIdnStd);
    m.def("truncated_normal_mean", &truncated_normal_mean, py::arg("mean"), py::arg("stddev"));
    m.def("read_csv", [](const std::string& path) { return read_csv(path); }, py::arg("path"));
    m.def("write_csv", [](const std::string& path, const LabeledDataset& d) { write_csv(path, d); }, py::arg("path"),
          py::arg("dataset"));
    m.def("select_meta_set",
          [](const LabeledDataset& d, std::size_t size, const std::string& strategy, std::uint64_t seed,
             std::optional<std::vector<double>> losses) {
              Prng rng(seed);
              std::optional<std::span<const double>> view;
              if (losses) view = *losses;
              return select_meta_set(d, size, parse_or_throw(parse_meta_strategy(strategy), "meta-set strategy", strategy),
                                     rng, view)
                  .indices;
          },
          py::arg("dataset"), py::arg("size"), py::arg("strategy") = "random", py::arg("seed") = 0,
          py::arg("losses") = py::none());
    m.def("select_pseudo_clean_gmm",
          [](const std::vector<double>& losses, const std::vector<std::size_t>& labels, std::size_t classes,
             std::size_t size) { return select_pseudo_clean_gmm(losses, labels, classes, size); },
          py::arg("losses"), py::arg("labels"), py::arg("classes"), py::arg("size"));

    m.def("embedding_graph", [](const Array& z, double tau) { return to_array(embedding_graph(to_matrix(z), tau)); },
          py::arg("z"), py::arg("tau") = kDefaultTau);
    m.def("class_prob_graph", [](const Array& q) { return to_array(class_prob_graph(to_matrix(q))); }, py::arg("q"));
    m.def("row_normalize", [](const Array& g) { return to_array(row_normalize(to_matrix(g))); }, py::arg("g"));
    m.def("clid_loss",
          [](const Array& gq_hat, const Array& ge_hat) { return clid_loss(to_matrix(gq_hat), to_matrix(ge_hat)).value; },
          py::arg("gq_hat"), py::arg("ge_hat"));

    py::class_<MlpClassifier>(m, "Classifier")
        .def_static(
            "init",
            [](std::size_t input_dim, const std::vector<std::size_t>& hidden, std::size_t classes, std::uint64_t seed) {
                Prng rng(seed);
                return MlpClassifier::init(input_dim, hidden, classes, rng);
            },
            py::arg("input_dim"), py::arg("hidden"), py::arg("classes"), py::arg("seed") = 0)
        .def_property_readonly("input_dim", &MlpClassifier::input_dim)
        .def_property_readonly("classes", &MlpClassifier::classes)
        .def("predict_proba", [](const MlpClassifier& c, const Array& x) { return to_array(classifier_forward(c, to_matrix(x)).probs); })
        .def("embed", [](const MlpClassifier& c, const Array& x) { return to_array(classifier_forward(c, to_matrix(x)).embeddings()); })
        .def("clid", [](const MlpClassifier& c, const Array& x, double tau) { return clid_of_model(c, to_matrix(x), tau).value; },
             py::arg("x"), py::arg("tau") = kDefaultTau)
        .def(
            "clid_grad",
            [](const MlpClassifier& c, const Array& x, double tau, const std::string& sg) {
                return blocks_to_dict(clid_grad(c, to_matrix(x), tau, parse_or_throw(parse_stop_gradient(sg), "stop-gradient", sg)));
            },
            py::arg("x"), py::arg("tau") = kDefaultTau, py::arg("sg") = "target-q")
        .def("parameters", [](const MlpClassifier& c) { return blocks_to_dict(c.to_params()); });

    py::class_<TrainConfig>(m, "TrainConfig")
        .def(py::init<>())
        .def_readwrite("alpha", &TrainConfig::alpha)
        .def_readwrite("gamma", &TrainConfig::gamma)
        .def_readwrite("tau", &TrainConfig::tau)
        .def_readwrite("batch_size", &TrainConfig::batch_size)
        .def_readwrite("meta_batch_size", &TrainConfig::meta_batch_size)
        .def_readwrite("max_iterations", &TrainConfig::max_iterations)
        .def_readwrite("snapshots", &TrainConfig::snapshots)
        .def_readwrite("epochs", &TrainConfig::epochs)
        .def_readwrite("meta_set_size", &TrainConfig::meta_set_size)
        .def_readwrite("warmup_epochs", &TrainConfig::warmup_epochs)
        .def_readwrite("seed", &TrainConfig::seed)
        .def_readwrite("hidden", &TrainConfig::hidden)
        .def_readwrite("meta_width", &TrainConfig::meta_width)
        .def_readwrite("setting", &TrainConfig::setting)
        .def_property(
            "meta_objective", [](const TrainConfig& c) { return std::string(to_string(c.meta_objective)); },
            [](TrainConfig& c, const std::string& v) {
                c.meta_objective = parse_or_throw(parse_meta_objective(v), "meta objective", v);
            })
        .def_property(
            "meta_set", [](const TrainConfig& c) { return std::string(to_string(c.meta_strategy)); },
            [](TrainConfig& c, const std::string& v) {
                c.meta_strategy = parse_or_throw(parse_meta_strategy(v), "meta-set strategy", v);
            })
        .def_property(
            "sg", [](const TrainConfig& c) { return std::string(to_string(c.sg)); },
            [](TrainConfig& c, const std::string& v) { c.sg = parse_or_throw(parse_stop_gradient(v), "stop-gradient", v); });

    py::class_<PyTrainingResult>(m, "TrainingResult")
        .def_property_readonly("best_test_accuracy", [](const PyTrainingResult& r) { return r.result.best_test_accuracy; })
        .def_property_readonly("iterations", [](const PyTrainingResult& r) { return r.result.iterations; })
        .def_property_readonly("snapshot_epochs", &PyTrainingResult::snapshot_epochs)
        .def("ensemble_predict", &PyTrainingResult::ensemble_predict, py::arg("x"))
        .def("metrics_csv", &PyTrainingResult::metrics_csv);

    m.def(
        "run_training",
        [](const TrainConfig& cfg, const LabeledDataset& train, const std::vector<std::size_t>& meta_indices,
           const LabeledDataset& test) {
            py::gil_scoped_release release;
            return PyTrainingResult{run_training(cfg, train, MetaSet{meta_indices, cfg.meta_strategy}, test)};
        },
        py::arg("config"), py::arg("train"), py::arg("meta_indices"), py::arg("test"));

    m.def(
        "exponential_bound",
        [](const Array& scores) {
            const auto r = exponential_bound(to_matrix(scores));
            return py::make_tuple(r.lhs, r.rhs, r.holds);
        },
        py::arg("true_class_scores"));
    m.def("accuracy", [](const Array& probs, const std::vector<std::size_t>& labels) { return accuracy(to_matrix(probs), labels); },
          py::arg("probs"), py::arg("labels"));
    m.def("pearson", [](const std::vector<double>& a, const std::vector<double>& b) { return pearson(a, b); }, py::arg("a"),
          py::arg("b"));
}
