#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <json.hpp>

#include "flowssm/common/error.hpp"
#include "flowssm/eval/evaluation.hpp"
#include "flowssm/eval/svm.hpp"
#include "flowssm/geometry/distance.hpp"
#include "flowssm/geometry/mesh.hpp"
#include "flowssm/geometry/registration.hpp"
#include "flowssm/geometry/sampling.hpp"
#include "flowssm/geometry/self_intersection.hpp"
#include "flowssm/ssm/model.hpp"
#include "flowssm/synth/synth.hpp"

namespace py = pybind11;
using namespace flowssm;

namespace {

using MeshTuple = std::pair<Points, Faces>;

geometry::TriMesh to_mesh(const Points& v, const Faces& f) {
  geometry::TriMesh m{v, f};
  m.validate();
  return m;
}

MeshTuple from_mesh(const geometry::TriMesh& m) { return {m.vertices, m.faces}; }

std::vector<geometry::TriMesh> to_meshes(const std::vector<MeshTuple>& meshes) {
  std::vector<geometry::TriMesh> out;
  for (const auto& [v, f] : meshes) out.push_back(to_mesh(v, f));
  return out;
}

py::dict latent_dict(const latent::LatentState& z) {
  py::dict d;
  d["z_global"] = z.z_global;
  d["z_local"] = z.z_local;
  return d;
}

latent::LatentState latent_from(const Vector& z_global, const Matrix& z_local) {
  latent::LatentState z;
  z.z_global = z_global;
  z.z_local = z_local;
  return z;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "FlowSSM: flow-based statistical shape models";

  auto base = py::register_exception<Error>(m, "Error");
  py::register_exception<ParseError>(m, "ParseError", base);
  py::register_exception<TopologyError>(m, "TopologyError", base);
  py::register_exception<IoError>(m, "IoError", base);
  py::register_exception<ShapeMismatch>(m, "ShapeMismatch", base);
  py::register_exception<NonFiniteValue>(m, "NonFiniteValue", base);
  py::register_exception<NonFiniteGradient>(m, "NonFiniteGradient", base);
  py::register_exception<NonFiniteLoss>(m, "NonFiniteLoss", base);
  py::register_exception<DataError>(m, "DataError", base);
  py::register_exception<DegenerateLabels>(m, "DegenerateLabels", base);
  py::register_exception<ConnectivityMismatch>(m, "ConnectivityMismatch", base);
  py::register_exception<InvalidArgument>(m, "InvalidArgument", base);
  py::register_exception<ConfigError>(m, "ConfigError", base);

  m.attr("__version__") = ssm::kSoftwareVersion;

  m.def(
      "load_mesh", [](const std::filesystem::path& p) { return from_mesh(geometry::load_mesh(p)); }, py::arg("path"),
      "Returns (vertices N x 3, faces F x 3) from an OBJ or PLY file.");
  m.def(
      "save_mesh",
      [](const Points& v, const Faces& f, const std::filesystem::path& p) { geometry::save_mesh(to_mesh(v, f), p); },
      py::arg("vertices"), py::arg("faces"), py::arg("path"));

  m.def(
      "sample_surface",
      [](const Points& v, const Faces& f, Eigen::Index n, std::uint64_t seed) {
        return geometry::sample_surface(to_mesh(v, f), n, seed).points;
      },
      py::arg("vertices"), py::arg("faces"), py::arg("n"), py::arg("seed") = 0);

  m.def(
      "chamfer_distance",
      [](const Points& a, const Points& b, bool one_sided) {
        return geometry::chamfer_distance(geometry::PointSet(a), geometry::PointSet(b),
                                          one_sided ? geometry::ChamferMode::OneSidedAToB
                                                    : geometry::ChamferMode::Symmetric);
      },
      py::arg("a"), py::arg("b"), py::arg("one_sided") = false,
      "Unsquared Chamfer distance; symmetric halves are averaged.");

  m.def(
      "assd",
      [](const MeshTuple& a, const MeshTuple& b, Eigen::Index n, std::uint64_t seed) {
        return geometry::average_symmetric_surface_distance(to_mesh(a.first, a.second), to_mesh(b.first, b.second),
                                                            n, seed);
      },
      py::arg("a"), py::arg("b"), py::arg("n_samples") = 15000, py::arg("seed") = 0);

  m.def(
      "self_intersections",
      [](const Points& v, const Faces& f) {
        return geometry::count_self_intersections(to_mesh(v, f)).intersecting_face_pairs;
      },
      py::arg("vertices"), py::arg("faces"), "Number of intersecting non-adjacent face pairs.");

  m.def(
      "icp_align",
      [](const MeshTuple& source, const MeshTuple& target, int max_iters, double tol) {
        const auto r = geometry::icp_align(to_mesh(source.first, source.second), to_mesh(target.first, target.second),
                                           max_iters, tol);
        py::dict d;
        d["rotation"] = Mat3(r.transform.rotation);
        d["translation"] = Vec3(r.transform.translation);
        d["aligned"] = r.aligned.vertices;
        d["iterations"] = r.iterations;
        d["rms"] = r.rms;
        d["converged"] = r.converged;
        return d;
      },
      py::arg("source"), py::arg("target"), py::arg("max_iters") = 300, py::arg("tol") = 1e-10);

  m.def(
      "normalize_to_unit_box",
      [](const std::vector<MeshTuple>& meshes, std::optional<double> reference_half_extent) {
        const auto n = geometry::normalize_to_unit_box(to_meshes(meshes), reference_half_extent);
        std::vector<MeshTuple> out;
        for (const auto& mesh : n.meshes) out.push_back(from_mesh(mesh));
        std::vector<Vec3> centers = n.centers;
        return py::make_tuple(out, n.scale, centers);
      },
      py::arg("meshes"), py::arg("reference_half_extent") = py::none(),
      "Returns (meshes, scale, centers) with normalized = (x - center) * scale.");

  m.def(
      "generate_family",
      [](const std::string& spec_json, int n) {
        const auto spec = nlohmann::json::parse(spec_json).get<synth::FamilySpec>();
        std::vector<MeshTuple> meshes;
        std::vector<Vector> params;
        for (const auto& member : synth::generate_family(spec, n)) {
          meshes.push_back(from_mesh(member.mesh));
          params.push_back(member.params);
        }
        return py::make_tuple(meshes, params, from_mesh(synth::family_template(spec)));
      },
      py::arg("spec_json"), py::arg("n"), "Returns (members, parameters, template).");

  m.def(
      "classify_monte_carlo",
      [](const Matrix& features, const std::vector<int>& labels, std::vector<double> fractions, int n_splits,
         double lambda, std::uint64_t seed) {
        eval::MonteCarloConfig cfg;
        if (!fractions.empty()) cfg.train_fractions = std::move(fractions);
        cfg.n_splits = n_splits;
        cfg.svm.lambda = lambda;
        cfg.seed = seed;
        std::vector<std::tuple<double, double, double>> out;
        for (const auto& r : eval::classify_monte_carlo(features, labels, cfg)) out.emplace_back(r.fraction, r.mean, r.stddev);
        return out;
      },
      py::arg("features"), py::arg("labels"), py::arg("train_fractions") = std::vector<double>{},
      py::arg("n_splits") = 1000, py::arg("lam") = 1e-2, py::arg("seed") = 0,
      "Returns [(fraction, mean accuracy, std)] from stratified Monte-Carlo splits.");

  m.def(
      "paired_t_test",
      [](const std::vector<double>& a, const std::vector<double>& b) {
        const auto t = eval::paired_t_test(a, b);
        return py::make_tuple(t.t, t.p_two_sided);
      },
      py::arg("a"), py::arg("b"), "Returns (t, two-sided p) for a - b.");

  py::class_<ssm::FlowSsmModel>(m, "Model")
      .def_static("load", &ssm::load_checkpoint, py::arg("path"))
      .def("save", [](const ssm::FlowSsmModel& self, const std::filesystem::path& p) { ssm::save_checkpoint(self, p); },
           py::arg("path"))
      .def_property_readonly("latent_dim", &ssm::FlowSsmModel::latent_dim)
      .def_property_readonly("control_point_count", &ssm::FlowSsmModel::control_point_count)
      .def_property_readonly("template", [](const ssm::FlowSsmModel& self) { return from_mesh(self.template_mesh); })
      .def_property_readonly("global_modes", [](const ssm::FlowSsmModel& self) { return self.pca_global.modes(); })
      .def_property_readonly("local_modes", [](const ssm::FlowSsmModel& self) { return self.pca_local.modes(); })
      .def_property_readonly("training_latents",
                             [](const ssm::FlowSsmModel& self) {
                               py::list out;
                               for (const auto& z : self.training_latents) out.append(latent_dict(z));
                               return out;
                             })
      .def(
          "deform",
          [](const ssm::FlowSsmModel& self, const Points& points, const Vector& z_global, const Matrix& z_local,
             bool use_local) { return self.deform(points, latent_from(z_global, z_local), use_local); },
          py::arg("points"), py::arg("z_global"), py::arg("z_local"), py::arg("use_local") = true)
      .def(
          "decode",
          [](const ssm::FlowSsmModel& self, const Vector& global_weights, const Vector& local_weights) {
            return latent_dict(self.decode(global_weights, local_weights));
          },
          py::arg("global_weights"), py::arg("local_weights"))
      .def(
          "sample",
          [](const ssm::FlowSsmModel& self, std::uint64_t seed) { return from_mesh(ssm::sample_shape(self, seed).mesh); },
          py::arg("seed"))
      .def(
          "fit",
          [](const ssm::FlowSsmModel& self, const Points& target, int iters, double lr, int n_points,
             const std::string& loss_mode, bool use_local, std::uint64_t seed) {
            ssm::FitConfig cfg;
            cfg.iters = iters;
            cfg.lr = lr;
            cfg.n_sample_points = n_points;
            cfg.loss_mode = ssm::parse_loss_mode(loss_mode);
            cfg.use_local = use_local;
            cfg.seed = seed;
            ssm::FitResult r;
            {
              py::gil_scoped_release release;
              r = ssm::fit_latent(self, geometry::PointSet(target), cfg);
            }
            py::dict d = latent_dict(r.latents);
            d["global_weights"] = r.global_weights;
            d["local_weights"] = r.local_weights;
            d["mesh"] = from_mesh(r.mesh);
            d["global_mesh"] = from_mesh(r.global_mesh);
            d["global_loss"] = r.global_loss;
            d["final_loss"] = r.final_loss;
            return d;
          },
          py::arg("target"), py::arg("iters") = 600, py::arg("lr") = 0.01, py::arg("n_points") = 15000,
          py::arg("loss_mode") = "symmetric", py::arg("use_local") = true, py::arg("seed") = 0);

  m.def(
      "train",
      [](const std::vector<MeshTuple>& shapes, const MeshTuple& template_mesh, const std::string& config_json,
         const std::function<void(int, int, double)>& progress) {
        const auto cfg = nlohmann::json::parse(config_json).get<ssm::TrainingConfig>();
        const auto meshes = to_meshes(shapes);
        const auto tmpl = to_mesh(template_mesh.first, template_mesh.second);
        ssm::ProgressFn fn;
        if (progress) {
          fn = [&](const ssm::LossRecord& r) {
            py::gil_scoped_acquire acquire;
            progress(r.stage, r.epoch, r.loss);
          };
        }
        ssm::TrainResult result;
        {
          py::gil_scoped_release release;
          result = ssm::train(meshes, tmpl, cfg, fn);
        }
        std::vector<std::tuple<int, int, double>> curve;
        for (const auto& r : result.loss_curve) curve.emplace_back(r.stage, r.epoch, r.loss);
        return py::make_tuple(std::move(result.model), curve);
      },
      py::arg("shapes"), py::arg("template"), py::arg("config_json") = "{}", py::arg("progress") = nullptr,
      "Trains on normalized meshes; returns (Model, [(stage, epoch, loss)]).");
}
