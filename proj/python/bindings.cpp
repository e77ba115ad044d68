#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <span>

#include "shapeseg/errors.hpp"
#include "shapeseg/losses.hpp"
#include "shapeseg/mesh.hpp"
#include "shapeseg/metrics.hpp"
#include "shapeseg/model.hpp"
#include "shapeseg/phantom.hpp"
#include "shapeseg/pipeline.hpp"
#include "shapeseg/sdf.hpp"

namespace py = pybind11;
using namespace shapeseg;

namespace {

using DArray = py::array_t<double, py::array::c_style | py::array::forcecast>;
using FArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

// Arrays are indexed [z, y, x] (or [y, x] for slices), matching the x-fastest storage.

SliceField to_slice(const DArray& a, SliceKind kind) {
  if (a.ndim() != 2) throw ShapeError("expected a 2-D array");
  const auto h = static_cast<std::size_t>(a.shape(0));
  const auto w = static_cast<std::size_t>(a.shape(1));
  return SliceField(w, h, kind, std::vector<double>(a.data(), a.data() + a.size()));
}

DArray from_values(std::span<const double> v, std::size_t w, std::size_t h) {
  DArray out({h, w});
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

VolumeGrid to_volume(const FArray& a, ElementKind kind, Vec3 spacing, Vec3 origin) {
  if (a.ndim() != 3) throw ShapeError("expected a 3-D array indexed [z, y, x]");
  const Dims3 dims{static_cast<std::size_t>(a.shape(2)), static_cast<std::size_t>(a.shape(1)),
                   static_cast<std::size_t>(a.shape(0))};
  return VolumeGrid(dims, spacing, origin, kind, std::vector<float>(a.data(), a.data() + a.size()));
}

FArray from_volume(const VolumeGrid& g) {
  FArray out({g.nz(), g.ny(), g.nx()});
  std::copy(g.data().begin(), g.data().end(), out.mutable_data());
  return out;
}

py::tuple loss_tuple(const LossTerm& t, std::size_t n) {
  DArray grad(static_cast<py::ssize_t>(n));
  std::copy(t.gradient.begin(), t.gradient.end(), grad.mutable_data());
  return py::make_tuple(t.value, grad);
}

std::vector<double> flat(const DArray& a) { return {a.data(), a.data() + a.size()}; }

py::dict record_dict(const MetricsRecord& r) {
  py::dict d;
  d["case"] = r.case_id;
  d["vol_dice"] = r.vol_dice;
  d["surf_dice"] = r.surf_dice;
  d["hd"] = r.hd;
  d["hd95"] = r.hd95;
  d["assd"] = r.assd;
  return d;
}

}  // namespace

PYBIND11_MODULE(_shapeseg, m) {
  m.doc() = "Signed distance segmentation targets, losses, U-Net training, marching cubes and surface metrics";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<InputError>(m, "InputError", base);

  // volumes
  m.def(
      "load_volume",
      [](const std::filesystem::path& path) {
        const auto g = load_volume(path);
        return py::make_tuple(from_volume(g), g.spacing(), g.origin(), g.is_mask());
      },
      py::arg("path"), "Returns (array[z, y, x], spacing, origin, is_mask).");
  m.def(
      "save_volume",
      [](const std::filesystem::path& path, const FArray& data, Vec3 spacing, Vec3 origin, bool mask) {
        save_volume(to_volume(data, mask ? ElementKind::BinaryMask : ElementKind::ScalarF32, spacing, origin), path);
      },
      py::arg("path"), py::arg("data"), py::arg("spacing") = Vec3{1, 1, 1}, py::arg("origin") = Vec3{0, 0, 0},
      py::arg("mask") = false);

  // sdf
  m.def(
      "edt_squared",
      [](const DArray& mask, int label) {
        const auto out = edt_squared(to_slice(mask, SliceKind::Binary), label);
        return from_values(out.values(), out.width(), out.height());
      },
      py::arg("mask"), py::arg("label") = 1);
  m.def(
      "sdf_slice",
      [](const DArray& mask, bool normalize, bool boundary_offset) {
        auto s = sdf_from_mask(to_slice(mask, SliceKind::Binary), SdfOptions{boundary_offset});
        if (normalize) s = normalize_sdf(s);
        return py::make_tuple(from_values(s.values, s.width, s.height), s.scale);
      },
      py::arg("mask"), py::arg("normalize") = true, py::arg("boundary_offset") = true,
      "Returns (sdf, scale); negative inside.");
  m.def(
      "sdf_volume",
      [](const FArray& mask, bool normalize) {
        const auto g = to_volume(mask, ElementKind::BinaryMask, {1, 1, 1}, {0, 0, 0});
        return from_volume(normalize ? sdf_volume(g) : sdf_volume_raw(g));
      },
      py::arg("mask"), py::arg("normalize") = true);

  // losses
  m.def(
      "bce_loss", [](const DArray& p, const DArray& y) { return loss_tuple(bce_loss(flat(p), flat(y), {}), p.size()); },
      py::arg("pred"), py::arg("truth"), "Returns (value, gradient).");
  m.def(
      "dice_loss", [](const DArray& p, const DArray& y) { return loss_tuple(dice_loss(flat(p), flat(y), {}), p.size()); },
      py::arg("pred"), py::arg("truth"));
  m.def(
      "l1_loss", [](const DArray& p, const DArray& y) { return loss_tuple(l1_loss(flat(p), flat(y)), p.size()); },
      py::arg("pred"), py::arg("truth"));
  m.def(
      "laplacian_loss",
      [](const DArray& p, const DArray& y) {
        if (p.ndim() != 2) throw ShapeError("laplacian_loss expects 2-D arrays");
        const auto h = static_cast<std::size_t>(p.shape(0)), w = static_cast<std::size_t>(p.shape(1));
        return loss_tuple(laplacian_loss(flat(p), flat(y), w, h), p.size());
      },
      py::arg("pred"), py::arg("truth"));

  // mesh
  m.def(
      "marching_cubes",
      [](const FArray& field, double iso, Vec3 spacing, Vec3 origin) {
        const auto mesh = marching_cubes(to_volume(field, ElementKind::ScalarF32, spacing, origin), iso);
        DArray verts({mesh.vertices.size(), std::size_t{3}});
        py::array_t<std::uint32_t> faces({mesh.triangles.size(), std::size_t{3}});
        for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
          for (std::size_t k = 0; k < 3; ++k) verts.mutable_at(i, k) = mesh.vertices[i][k];
        }
        for (std::size_t i = 0; i < mesh.triangles.size(); ++i) {
          for (std::size_t k = 0; k < 3; ++k) faces.mutable_at(i, k) = mesh.triangles[i][k];
        }
        return py::make_tuple(verts, faces);
      },
      py::arg("field"), py::arg("iso"), py::arg("spacing") = Vec3{1, 1, 1}, py::arg("origin") = Vec3{0, 0, 0},
      "Returns (vertices[N, 3] as (x, y, z), triangles[M, 3]); normals face increasing field values.");

  // metrics
  m.def(
      "evaluate",
      [](const FArray& pred, const FArray& truth, Vec3 spacing, double tolerance) {
        return record_dict(evaluate_pair(to_volume(pred, ElementKind::BinaryMask, spacing, {0, 0, 0}),
                                         to_volume(truth, ElementKind::BinaryMask, spacing, {0, 0, 0}), tolerance));
      },
      py::arg("pred"), py::arg("truth"), py::arg("spacing") = Vec3{1, 1, 1}, py::arg("tolerance") = 1.0);

  // phantom
  m.def(
      "phantom_case",
      [](std::size_t size, std::size_t slices, std::uint64_t seed, std::size_t index, const std::string& family,
         double noise) {
        PhantomSpec spec;
        spec.size = size;
        spec.slices = slices;
        spec.seed = seed;
        spec.family = parse_shape_family(family);
        spec.noise_sigma = noise;
        const auto c = gen_case(spec, index);
        return py::make_tuple(from_volume(c.image), from_volume(c.mask));
      },
      py::arg("size") = 64, py::arg("slices") = 32, py::arg("seed") = 0, py::arg("index") = 0,
      py::arg("family") = "ellipsoid", py::arg("noise") = 0.1, "Returns (image, mask) arrays indexed [z, y, x].");

  // model
  py::class_<ModelParams>(m, "Model")
      .def_static(
          "init",
          [](int depth, int base_channels, std::uint64_t seed) {
            return init_params(NetConfig{depth, base_channels, 64, 64, seed});
          },
          py::arg("depth") = 2, py::arg("base_channels") = 8, py::arg("seed") = 0)
      .def_static("load", [](const std::filesystem::path& p) { return load_model(p); }, py::arg("path"))
      .def("save", [](const ModelParams& self, const std::filesystem::path& p) { save_model(self, p); }, py::arg("path"))
      .def_property_readonly("depth", [](const ModelParams& self) { return self.config.depth; })
      .def_property_readonly("base_channels", [](const ModelParams& self) { return self.config.base_channels; })
      .def_property_readonly("parameter_count", &ModelParams::parameter_count)
      .def(
          "predict",
          [](const ModelParams& self, const FArray& image) {
            const auto pred = predict_volume_padded(self, to_volume(image, ElementKind::ScalarF32, {1, 1, 1}, {0, 0, 0}));
            return py::make_tuple(from_volume(pred.mask), from_volume(pred.sdf));
          },
          py::arg("image"), "Returns (mask, sdf) arrays for an image indexed [z, y, x].");

  m.def(
      "train_dataset",
      [](const std::filesystem::path& data_dir, const std::string& ablation, int epochs, int depth, int base_channels,
         double learning_rate, std::uint64_t seed) {
        NetConfig net{depth, base_channels, 64, 64, seed};
        TrainConfig cfg;
        cfg.epochs = epochs;
        cfg.learning_rate = learning_rate;
        cfg.seed = seed;
        cfg.loss.weights = ablation_weights(ablation);
        std::vector<TrainSample> train_set, val_set;
        {
          py::gil_scoped_release release;
          train_set = load_split_samples(data_dir, "train", net.divisor());
          val_set = load_split_samples(data_dir, "val", net.divisor());
        }
        if (train_set.empty()) throw ConfigError("training split is empty");
        if (val_set.empty()) val_set = train_set;
        net.width = train_set.front().image.width();
        net.height = train_set.front().image.height();
        TrainResult result;
        {
          py::gil_scoped_release release;
          result = train(train_set, val_set, net, cfg);
        }
        py::list history;
        for (const auto& e : result.report.epochs) history.append(py::make_tuple(e.train_loss.total, e.val_dice));
        return py::make_tuple(result.best, history);
      },
      py::arg("data_dir"), py::arg("ablation") = "d", py::arg("epochs") = 10, py::arg("depth") = 2,
      py::arg("base_channels") = 8, py::arg("learning_rate") = 1e-3, py::arg("seed") = 0,
      "Trains on a generated dataset. Returns (model, [(train_loss, val_dice), ...]).");
}
