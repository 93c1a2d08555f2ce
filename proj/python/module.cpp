#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "atx/errors.hpp"
#include "atx/pipeline.hpp"

namespace py = pybind11;
using namespace atx;

namespace {

using F64 = py::array_t<double, py::array::c_style | py::array::forcecast>;
using U8 = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

template <typename T>
py::array_t<T> to_array(const std::vector<T>& v) {
    return py::array_t<T>(static_cast<py::ssize_t>(v.size()), v.data());
}

py::array_t<double> to_array(const TimeSeries& s) {
    return py::array_t<double>({s.length, s.dims}, s.values.data());
}

template <typename T>
std::vector<T> to_vector(const py::array_t<T, py::array::c_style | py::array::forcecast>& a) {
    if (a.ndim() != 1) throw ConfigError("expected a 1-d array");
    return {a.data(), a.data() + a.size()};
}

TimeSeries to_series(const F64& a) {
    if (a.ndim() == 1) return TimeSeries(a.shape(0), 1, to_vector<double>(a));
    if (a.ndim() != 2) throw ConfigError("expected a 1-d or (length, dims) array");
    return TimeSeries(a.shape(0), a.shape(1), std::vector<double>(a.data(), a.data() + a.size()));
}

RunConfig parse_run(const std::string& text) {
    auto run = text.empty() ? RunConfig::desk_default() : nlohmann::json::parse(text).get<RunConfig>();
    run.validate();
    return run;
}

py::dict scores_dict(const ScoreSeries& s) {
    py::dict d;
    d["score"] = to_array(s.score);
    d["recon"] = to_array(s.recon);
    d["assdis"] = to_array(s.assdis);
    d["assdis_weight"] = to_array(s.assdis_weight);
    d["adjacent_weight"] = to_array(s.adjacent_weight);
    d["sigma_mean"] = to_array(s.sigma_mean);
    return d;
}

// model plus the run config it was trained with
struct PyModel {
    TrainedModel model;
    RunConfig run;

    py::dict score(const F64& series, const std::optional<std::string>& criterion) const {
        auto opts = run.score_options();
        if (criterion) opts.criterion = parse_criterion(*criterion);
        return scores_dict(score_with(model, to_series(series), opts));
    }

    std::string checkpoint() const { return checkpoint_to_json(model.checkpoint(run)).dump(); }

    py::list log() const {
        py::list out;
        for (const auto& e : model.log.epochs)
            out.append(py::dict(py::arg("epoch") = e.epoch, py::arg("recon_loss") = e.recon_loss,
                                py::arg("assdis") = e.assdis, py::arg("val_loss") = e.val_loss));
        return out;
    }
};

PyModel train(const F64& train_series, const F64& val_series, const std::string& config) {
    PyModel m;
    m.run = parse_run(config);
    auto tr = to_series(train_series), va = to_series(val_series);
    m.run.model.input_dim = tr.dims;
    m.run.validate();
    {
        py::gil_scoped_release release;
        m.model = train_model(tr, va, m.run);
    }
    return m;
}

PyModel load(const std::string& text) {
    PyModel m;
    auto ck = checkpoint_from_json(nlohmann::json::parse(text));
    m.model = TrainedModel::from_checkpoint(ck);
    m.run = RunConfig::desk_default();
    m.run.model = m.model.config;
    if (ck.meta.contains("train")) m.run.train = ck.meta.at("train").get<TrainConfig>();
    return m;
}

}  // namespace

PYBIND11_MODULE(_atx, m) {
    m.doc() = "anomaly transformer core";

    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<CompatibilityError>(m, "CompatibilityError", PyExc_ValueError);
    py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
    py::register_exception<IoError>(m, "IoError", PyExc_OSError);

    m.def("desk_spec", [](std::uint64_t seed) { return nlohmann::json(SynthSpec::desk_default(seed)).dump(); },
          py::arg("seed") = 0);
    m.def("desk_config", [] { return nlohmann::json(RunConfig::desk_default()).dump(); });

    m.def(
        "generate",
        [](const std::string& spec) {
            auto s = nlohmann::json::parse(spec).get<SynthSpec>();
            auto data = generate(s);
            py::dict d;
            d["train"] = to_array(data.train);
            d["val"] = to_array(data.val);
            d["test"] = to_array(data.test);
            d["labels"] = to_array(*data.test.labels);
            return d;
        },
        py::arg("spec"));

    py::class_<PyModel>(m, "Model")
        .def("score", &PyModel::score, py::arg("series"), py::arg("criterion") = std::nullopt)
        .def("checkpoint", &PyModel::checkpoint)
        .def_property_readonly("log", &PyModel::log)
        .def_property_readonly("best_epoch", [](const PyModel& p) { return p.model.log.best_epoch; })
        .def_property_readonly("config", [](const PyModel& p) { return nlohmann::json(p.run).dump(); });

    m.def("train", &train, py::arg("train"), py::arg("val"), py::arg("config") = "");
    m.def("load", &load, py::arg("checkpoint"));

    m.def(
        "select_threshold",
        [](const F64& val, std::optional<double> r, std::optional<double> delta) {
            if (r.has_value() == delta.has_value()) throw ConfigError("give exactly one of r or delta");
            auto spec = r ? ThresholdSpec::ratio(*r) : ThresholdSpec::fixed(*delta);
            spec.validate();
            return select_threshold(to_vector<double>(val), spec);
        },
        py::arg("val_scores"), py::kw_only(), py::arg("r") = std::nullopt, py::arg("delta") = std::nullopt);
    m.def(
        "point_adjust",
        [](const U8& pred, const U8& truth) { return to_array(point_adjust(to_vector<std::uint8_t>(pred), to_vector<std::uint8_t>(truth))); },
        py::arg("pred"), py::arg("truth"));
    m.def(
        "prf",
        [](const U8& pred, const U8& truth) {
            auto p = prf(to_vector<std::uint8_t>(pred), to_vector<std::uint8_t>(truth));
            return py::make_tuple(p.precision, p.recall, p.f1);
        },
        py::arg("pred"), py::arg("truth"));
    m.def(
        "roc_auc",
        [](const F64& test, const U8& truth, const F64& val, std::optional<std::vector<double>> grid) {
            auto roc = roc_auc(to_vector<double>(test), to_vector<std::uint8_t>(truth), to_vector<double>(val),
                               grid.value_or(kDefaultRatioGrid));
            py::list pts;
            for (const auto& p : roc.points) pts.append(py::make_tuple(p.r, p.delta, p.fpr, p.tpr));
            return py::make_tuple(roc.auc, pts);
        },
        py::arg("test_scores"), py::arg("truth"), py::arg("val_scores"), py::arg("grid") = std::nullopt);
    m.def(
        "evaluate",
        [](const F64& test, const U8& truth, const F64& val, const std::string& config, std::optional<F64> adjacent) {
            auto run = parse_run(config);
            std::vector<double> adj = adjacent ? to_vector<double>(*adjacent) : std::vector<double>{};
            return evaluate_scores(to_vector<double>(test), to_vector<std::uint8_t>(truth), to_vector<double>(val),
                                   run.threshold, run.r_grid, adj)
                .to_json()
                .dump();
        },
        py::arg("test_scores"), py::arg("truth"), py::arg("val_scores"), py::arg("config") = "",
        py::arg("adjacent_weight") = std::nullopt);
}
