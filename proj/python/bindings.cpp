#include <pybind11/pybind11.h>
#include <pybind11/numpy.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "tamperlab/campaign.hpp"
#include "tamperlab/errors.hpp"
#include "tamperlab/forensics.hpp"
#include "tamperlab/model.hpp"
#include "tamperlab/synthetic.hpp"

namespace py = pybind11;
using namespace tamperlab;

namespace {

py::object to_python(const nlohmann::json &j) { return py::module_::import("json").attr("loads")(j.dump()); }

nlohmann::json from_python(const py::object &o)
{
    return nlohmann::json::parse(py::module_::import("json").attr("dumps")(o).cast<std::string>());
}

// (N, C, H, W) float array in [0,1] -> batch
ImageBatch to_batch(const py::array_t<float, py::array::c_style | py::array::forcecast> &images)
{
    if (images.ndim() != 4) throw InputShapeError("images must be a 4-d array (N, C, H, W)");
    const ImageShape shape{static_cast<int>(images.shape(1)), static_cast<int>(images.shape(2)),
                           static_cast<int>(images.shape(3))};
    return ImageBatch(shape, std::vector<float>(images.data(), images.data() + images.size()));
}

py::array_t<float> to_array(const ImageBatch &batch)
{
    const auto &s = batch.shape();
    py::array_t<float> out({static_cast<py::ssize_t>(batch.size()), static_cast<py::ssize_t>(s.channels),
                            static_cast<py::ssize_t>(s.height), static_cast<py::ssize_t>(s.width)});
    const auto data = batch.data();
    std::copy(data.begin(), data.end(), out.mutable_data());
    return out;
}

py::array_t<float> to_array(const Matrix &m)
{
    py::array_t<float> out({static_cast<py::ssize_t>(m.rows()), static_cast<py::ssize_t>(m.cols())});
    auto v = out.mutable_unchecked<2>();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) v(r, c) = m(r, c);
    }
    return out;
}

} // namespace

PYBIND11_MODULE(_core, m)
{
    m.doc() = "Forensic analysis of tampered image classifiers";

    static py::exception<Error> base(m, "TamperlabError");
    static py::exception<ConfigError> config(m, "ConfigError", base.ptr());
    static py::exception<LoadError> load(m, "LoadError", base.ptr());
    static py::exception<TrainingFailedError> training(m, "TrainingFailedError", base.ptr());
    static py::exception<UndefinedStatisticError> undefined(m, "UndefinedStatisticError", base.ptr());
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const ConfigError &e) {
            PyErr_SetString(config.ptr(), e.what());
        } catch (const LoadError &e) {
            PyErr_SetString(load.ptr(), e.what());
        } catch (const TrainingFailedError &e) {
            PyErr_SetString(training.ptr(), e.what());
        } catch (const UndefinedStatisticError &e) {
            PyErr_SetString(undefined.ptr(), e.what());
        } catch (const Error &e) {
            PyErr_SetString(base.ptr(), e.what());
        }
    });

    py::class_<Corpus>(m, "Corpus")
        .def_property_readonly("num_classes", &Corpus::num_classes)
        .def_property_readonly("num_categories", &Corpus::num_categories)
        .def_property_readonly("num_images", &Corpus::num_images)
        .def_property_readonly("class_names", [](const Corpus &c) { return c.class_names; })
        .def("category_of", &Corpus::category_of)
        .def("images_of", [](const Corpus &c, int fine) { return to_array(c.gather(c.indices_of(fine))); });

    m.def(
        "synthetic_corpus",
        [](const py::dict &options) { return generate_synthetic_corpus(SyntheticCorpusConfig::from_json(from_python(options))); },
        py::arg("options") = py::dict());
    m.def(
        "load_corpus", [](const std::filesystem::path &manifest) { return load_corpus(CorpusManifest::from_file(manifest)); },
        py::arg("manifest"));

    m.def(
        "build_scenario",
        [](const Corpus &c, const std::string &mode, std::uint64_t seed) {
            return to_python(build_scenario(c, parse_mode(mode), seed).to_json());
        },
        py::arg("corpus"), py::arg("mode"), py::arg("seed"));
    m.def(
        "evidence_manifest",
        [](const Corpus &c, const py::dict &scenario) {
            return to_python(evidence_manifest(c, Scenario::from_json(from_python(scenario))).to_json());
        },
        py::arg("corpus"), py::arg("scenario"));

    py::class_<SuspectModel>(m, "SuspectModel")
        .def_property_readonly("architecture", [](const SuspectModel &s) { return to_python(s.architecture().to_json()); })
        .def_property_readonly("num_layers", &SuspectModel::num_layers)
        .def_property_readonly("class_index_map", [](const SuspectModel &s) { return s.class_index_map(); })
        .def("predict", [](const SuspectModel &s, const py::array_t<float> &images) { return s.predict(to_batch(images)); })
        .def("logits", [](const SuspectModel &s, const py::array_t<float> &images) {
            return to_array(s.logits(to_batch(images)));
        });
    m.def("load_model", &load_model, py::arg("path"));
    m.def("save_model", &save_model, py::arg("model"), py::arg("path"));

    m.def(
        "train",
        [](const Corpus &c, const py::dict &scenario, const py::dict &config, const py::object &architecture) {
            const Scenario s = Scenario::from_json(from_python(scenario));
            const TrainConfig cfg = TrainConfig::from_json(from_python(config));
            const int outputs = static_cast<int>(s.retained_classes.size());
            const ArchitectureSpec arch = architecture.is_none()
                                              ? ArchitectureSpec::vgg10_narrow(outputs, c.shape)
                                              : ArchitectureSpec::from_json(from_python(architecture));
            SuspectModel model = [&] {
                py::gil_scoped_release release;
                return train_suspect(c, build_training_set(c, s), arch, cfg);
            }();
            model.set_class_index_map(s.retained_classes);
            return model;
        },
        py::arg("corpus"), py::arg("scenario"), py::arg("config") = py::dict(), py::arg("architecture") = py::none());

    m.def(
        "grey_probe",
        [](const SuspectModel &s, const py::array_t<float> &images, int layer, std::uint64_t seed) {
            return to_array(GreyBoxHandle(s, seed).probe(to_batch(images), layer).values);
        },
        py::arg("model"), py::arg("images"), py::arg("layer"), py::arg("permutation_seed") = 0x5EED);
    m.def(
        "white_read",
        [](const SuspectModel &s, const py::array_t<float> &images, int layer) {
            return to_array(WhiteBoxHandle(s).read_layer(to_batch(images), layer).values);
        },
        py::arg("model"), py::arg("images"), py::arg("layer"));

    m.def(
        "analyze",
        [](const SuspectModel &s, const Corpus &c, const py::dict &evidence, const std::string &access,
           const py::object &config) {
            BatteryConfig b = config.is_none() ? BatteryConfig{} : BatteryConfig::from_json(from_python(config));
            b.access = parse_access(access);
            const EvidenceManifest e = EvidenceManifest::from_json(from_python(evidence));
            const PublicSets sets = materialize(c, e);
            py::gil_scoped_release release;
            const ForensicReport r = run_battery(s, sets, e.action_class, b);
            py::gil_scoped_acquire acquire;
            return to_python(r.to_json());
        },
        py::arg("model"), py::arg("corpus"), py::arg("evidence"), py::arg("access") = "grey",
        py::arg("config") = py::none());

    m.def(
        "rank_from_predictions",
        [](const std::vector<int> &preds, int action, int num_classes) {
            return rank_from_predictions(preds, action, num_classes);
        },
        py::arg("predictions"), py::arg("action_class"), py::arg("num_classes"));
    m.def(
        "welch_t_test",
        [](const std::vector<double> &a, const std::vector<double> &b) {
            const auto r = welch_t_test(a, b);
            py::dict d;
            d["t"] = r.t;
            d["df"] = r.df;
            d["p"] = r.p;
            d["degenerate"] = r.degenerate;
            return d;
        },
        py::arg("a"), py::arg("b"));

    m.def(
        "load_campaign", [](const std::filesystem::path &dir) { return to_python(load_campaign(dir).to_json()); },
        py::arg("directory"));
    m.def(
        "campaign_tables",
        [](const std::filesystem::path &dir) {
            const auto r = load_campaign(dir);
            py::dict d;
            d["table2"] = table2_csv(r);
            d["table3"] = table3_csv(r);
            d["table4"] = table4_csv(r);
            return d;
        },
        py::arg("directory"));
}
