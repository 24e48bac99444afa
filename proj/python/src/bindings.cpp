#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "tempodet/cli.hpp"
#include "tempodet/eval.hpp"
#include "tempodet/geometry.hpp"

namespace py = pybind11;
using namespace tempodet;

namespace {

using Labelled = std::vector<std::tuple<std::string, geometry::PixelBox>>;

py::dict metrics_dict(const eval::Metrics& m) {
  py::list classes;
  for (const auto& c : m.classes) {
    py::dict d;
    d["class_id"] = c.class_id;
    d["instances"] = c.instances;
    d["precision"] = c.precision;
    d["recall"] = c.recall;
    d["map50"] = c.map50;
    d["map50_95"] = c.map50_95;
    d["ap"] = c.ap;
    classes.append(d);
  }
  py::dict out;
  out["precision"] = m.precision;
  out["recall"] = m.recall;
  out["map50"] = m.map50;
  out["map50_95"] = m.map50_95;
  out["thresholds"] = m.thresholds;
  out["classes"] = classes;
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "tempodet native core";

  py::class_<geometry::PixelBox>(m, "PixelBox")
      .def(py::init([](double x1, double y1, double x2, double y2, int class_id, double confidence) {
             return geometry::PixelBox{x1, y1, x2, y2, class_id, confidence};
           }),
           py::arg("x1"), py::arg("y1"), py::arg("x2"), py::arg("y2"), py::arg("class_id") = 0,
           py::arg("confidence") = 1.0)
      .def_readwrite("x1", &geometry::PixelBox::x1)
      .def_readwrite("y1", &geometry::PixelBox::y1)
      .def_readwrite("x2", &geometry::PixelBox::x2)
      .def_readwrite("y2", &geometry::PixelBox::y2)
      .def_readwrite("class_id", &geometry::PixelBox::class_id)
      .def_readwrite("confidence", &geometry::PixelBox::confidence)
      .def("area", &geometry::PixelBox::area)
      .def("__repr__", [](const geometry::PixelBox& b) {
        std::ostringstream s;
        s << "PixelBox(" << b.x1 << ", " << b.y1 << ", " << b.x2 << ", " << b.y2 << ", class_id=" << b.class_id
          << ", confidence=" << b.confidence << ")";
        return s.str();
      });

  m.def("iou", &geometry::iou, py::arg("a"), py::arg("b"));
  m.def(
      "nms",
      [](const std::vector<geometry::PixelBox>& dets, double iou_threshold, double conf_threshold) {
        return geometry::nms(dets, {iou_threshold, conf_threshold});
      },
      py::arg("boxes"), py::arg("iou_threshold") = 0.45, py::arg("conf_threshold") = 0.25);

  m.def("coco_thresholds", &eval::coco_thresholds);
  m.def(
      "map_range",
      [](const Labelled& dets, const Labelled& gts) {
        std::vector<eval::Detection> d;
        std::vector<eval::GroundTruth> g;
        for (const auto& [id, box] : dets) d.push_back({id, box});
        for (const auto& [id, box] : gts) g.push_back({id, box});
        return metrics_dict(eval::map_range(d, g));
      },
      py::arg("detections"), py::arg("ground_truths"),
      "Detections and ground truths are (image_id, PixelBox) pairs.");

  m.def(
      "run",
      [](const std::vector<std::string>& args) {
        std::vector<const char*> argv{"tempodet"};
        for (const auto& a : args) argv.push_back(a.c_str());
        std::ostringstream out, err;
        int code;
        {
          py::gil_scoped_release release;
          code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
        }
        return std::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Run a CLI command; returns (exit_code, stdout, stderr).");
}
