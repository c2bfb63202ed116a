#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "tbscreen/aggregation.hpp"
#include "tbscreen/autograd.hpp"
#include "tbscreen/capsnet.hpp"
#include "tbscreen/checkpoint.hpp"
#include "tbscreen/cli.hpp"
#include "tbscreen/error.hpp"
#include "tbscreen/gradcheck_suite.hpp"
#include "tbscreen/pipeline.hpp"
#include "tbscreen/synth.hpp"
#include "tbscreen/tiling.hpp"

namespace py = pybind11;
using namespace tbscreen;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  if (shape.empty()) shape = {1};
  return Tensor(shape, std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_array(const Tensor& t) {
  Array out(std::vector<py::ssize_t>(t.shape().begin(), t.shape().end()));
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

py::dict config_dict(const ConfigMap& m) {
  py::dict d;
  for (const auto& [k, v] : m) d[py::str(k)] = v;
  return d;
}

ConfigMap config_map(const py::dict& d) {
  ConfigMap m;
  for (const auto& [k, v] : d) m[py::str(k)] = py::str(v);
  return m;
}

CapsNetConfig caps_config(const py::dict& overrides) {
  ConfigMap m = CapsNetConfig{}.to_map();
  for (const auto& [k, v] : config_map(overrides)) m[k] = v;
  return CapsNetConfig::from_map(m);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Capsule-network screening of lens-free micrographs";

  static py::exception<Error> base(m, "Error", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::set_error(base, e.what());
    }
  });

  m.def("squash", [](const Array& s) { return to_array(squash(constant(to_tensor(s))).value()); },
        py::arg("s"), "Row-wise squash of a [N, D] (or [D]) array.");
  m.def("conv2d",
        [](const Array& x, const Array& k, std::size_t stride) {
          return to_array(conv2d(constant(to_tensor(x)), constant(to_tensor(k)), stride).value());
        },
        py::arg("input"), py::arg("kernels"), py::arg("stride") = 1);
  m.def("margin_loss",
        [](const Array& lengths, int label) {
          Tensor target({2}, 0.0);
          target[static_cast<std::size_t>(label)] = 1.0;
          return margin_loss(constant(to_tensor(lengths)), target).value().item();
        },
        py::arg("lengths"), py::arg("label"));

  m.def("dynamic_routing",
        [](const Array& u_hat, std::size_t iters) {
          const auto st = dynamic_routing(to_tensor(u_hat), iters);
          py::list history;
          for (const auto& c : st.coefficient_history) history.append(to_array(c));
          py::dict d;
          d["b"] = to_array(st.logits_b);
          d["c"] = to_array(st.coefficients_c);
          d["v"] = to_array(st.class_caps_v);
          d["history"] = history;
          return d;
        },
        py::arg("u_hat"), py::arg("iters") = 3);

  m.def("capsnet_lengths",
        [](const Array& patch, std::uint64_t seed, const py::dict& config) {
          const auto cfg = caps_config(config);
          return to_array(forward(cfg, init_params(cfg, seed), to_tensor(patch)).class_lengths);
        },
        py::arg("patch"), py::arg("seed") = 0, py::arg("config") = py::dict(),
        "Class capsule lengths of a freshly initialized network.");

  m.def("plan_grid",
        [](std::size_t w, std::size_t h, std::size_t side, std::size_t overlap) {
          std::vector<std::pair<std::size_t, std::size_t>> out;
          for (const auto& a : plan_grid(w, h, side, overlap).anchors) out.emplace_back(a.x, a.y);
          return out;
        },
        py::arg("width"), py::arg("height"), py::arg("patch_side") = 256, py::arg("overlap") = 20);
  m.def("coverage_map",
        [](std::size_t w, std::size_t h, std::size_t side, std::size_t overlap) {
          return to_array(coverage_map(plan_grid(w, h, side, overlap)));
        },
        py::arg("width"), py::arg("height"), py::arg("patch_side") = 256, py::arg("overlap") = 20);

  m.def("build_histogram",
        [](const std::vector<double>& scores, std::size_t bins) {
          const auto h = build_histogram(scores, bins);
          return py::make_tuple(h.bins, h.total_patches, h.normalized);
        },
        py::arg("scores"), py::arg("bins") = 2);
  m.def("prepare_patch", [](const Array& patch, std::size_t factor) {
    return to_array(prepare_patch(to_tensor(patch), factor));
  }, py::arg("patch"), py::arg("factor") = 4);

  m.def("synthetic_image",
        [](std::size_t width, std::size_t height, std::int64_t cords, std::uint64_t seed) {
          SyntheticSceneConfig cfg;
          cfg.image_w = width;
          cfg.image_h = height;
          cfg.cord_count = {cords, cords};
          cfg.seed = seed;
          const auto img = generate_synthetic_image(cfg);
          std::vector<std::tuple<std::size_t, std::size_t, std::size_t, std::size_t>> boxes;
          for (const auto& b : img.boxes) boxes.emplace_back(b.x0, b.y0, b.x1, b.y1);
          return py::make_tuple(to_array(img.image), boxes, std::string(label_name(img.label)));
        },
        py::arg("width") = 512, py::arg("height") = 512, py::arg("cords") = 3, py::arg("seed") = 0);

  m.def("load_checkpoint",
        [](const std::string& path) {
          const auto ck = load_checkpoint(path);
          py::dict tensors;
          for (const auto& t : ck.tensors) tensors[py::str(t.name)] = to_array(t.value);
          py::dict d;
          d["family"] = ck.family;
          d["config"] = config_dict(ck.config);
          d["seed"] = ck.metadata.seed;
          d["epochs"] = ck.metadata.epochs;
          d["final_loss"] = ck.metadata.final_loss;
          d["tensors"] = tensors;
          return d;
        },
        py::arg("path"));

  m.def("grad_check_suite",
        [](std::uint64_t seed, std::size_t points) {
          std::vector<std::tuple<std::string, double, double, bool>> out;
          for (const auto& c : run_gradcheck_suite(seed, points))
            out.emplace_back(c.name, c.max_error, c.tolerance, c.passed());
          return out;
        },
        py::arg("seed") = 7, py::arg("points") = 10);

  m.def("run_cli", [](const std::vector<std::string>& args) { return run_cli(args); }, py::arg("args"),
        "Runs the command-line tool in-process and returns its exit code.");
}
