#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "neurovid/container.hpp"
#include "neurovid/eval.hpp"
#include "neurovid/pipeline.hpp"
#include "neurovid/synthdata.hpp"

namespace py = pybind11;
using namespace neurovid;

namespace {

py::array_t<double> entry_array(const ContainerEntry& e) {
    std::vector<py::ssize_t> shape(e.shape.begin(), e.shape.end());
    py::array_t<double> out(shape);
    std::copy(e.f64.begin(), e.f64.end(), out.mutable_data());
    return out;
}

std::vector<double> flat(const py::array_t<double, py::array::c_style |
                                                       py::array::forcecast>& a) {
    return {a.data(), a.data() + a.size()};
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "fMRI-to-video reconstruction pipeline";

    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<PrereqError>(m, "PrereqError", PyExc_RuntimeError);

    py::class_<RunConfig>(m, "RunConfig")
        .def(py::init<>())
        .def_static("from_file", &RunConfig::from_file, py::arg("path"))
        .def("apply",
             [](RunConfig& c, const std::map<std::string, std::string>& kv) {
                 std::vector<std::pair<std::string, std::string>> pairs(
                     kv.begin(), kv.end());
                 c.apply(pairs);
             },
             py::arg("kv"))
        .def("to_dict",
             [](const RunConfig& c) {
                 std::map<std::string, std::string> out;
                 for (const auto& [k, v] : c.to_kv()) out[k] = v;
                 return out;
             })
        .def("hash", &RunConfig::hash)
        .def("validate", &RunConfig::validate)
        .def_readwrite("seed", &RunConfig::seed);

    py::class_<Pipeline>(m, "Pipeline")
        .def(py::init<const RunConfig&, std::string>(), py::arg("config"),
             py::arg("run_dir"))
        .def("run_stage", &Pipeline::run_stage, py::arg("stage"))
        .def("run_all", &Pipeline::run_all)
        .def("ablate", &Pipeline::ablate)
        .def("report", &Pipeline::report)
        .def("stage_done", &Pipeline::stage_done, py::arg("stage"))
        .def_property_readonly("run_dir", &Pipeline::run_dir)
        .def_static("stage_names",
                    [] { return Pipeline::stage_names(); });

    py::class_<Container>(m, "Container")
        .def(py::init<>())
        .def_static("load", &Container::load, py::arg("path"))
        .def("save", &Container::save, py::arg("path"))
        .def("names",
             [](const Container& c) {
                 std::vector<std::string> out;
                 for (const auto& e : c.entries()) out.push_back(e.name);
                 return out;
             })
        .def("has", &Container::has, py::arg("name"))
        .def("array",
             [](const Container& c, const std::string& name) {
                 return entry_array(c.get(name));
             },
             py::arg("name"))
        .def("string", &Container::get_string, py::arg("name"))
        .def("put",
             [](Container& c, const std::string& name,
                const py::array_t<double, py::array::c_style |
                                              py::array::forcecast>& a) {
                 Shape shape(a.shape(), a.shape() + a.ndim());
                 c.put_f64(name, shape, flat(a));
             },
             py::arg("name"), py::arg("array"))
        .def("put_string", &Container::put_string, py::arg("name"),
             py::arg("value"));

    m.def("ssim",
          [](const py::array_t<double, py::array::c_style |
                                           py::array::forcecast>& a,
             const py::array_t<double, py::array::c_style |
                                           py::array::forcecast>& b) {
              if (a.ndim() != 2 || b.ndim() != 2)
                  throw py::value_error("ssim expects 2-D images");
              return ssim(flat(a), flat(b), a.shape(0), a.shape(1));
          },
          py::arg("a"), py::arg("b"));

    m.def("nway_topk", &nway_topk, py::arg("gt_probs"), py::arg("pred_probs"),
          py::arg("n"), py::arg("k"), py::arg("trials"), py::arg("seed"),
          py::arg("k_gt") = -1);

    m.def("ablation_stats", &ablation_stats, py::arg("a"), py::arg("b"));
    m.def("p_band", &p_band, py::arg("p"));
}
