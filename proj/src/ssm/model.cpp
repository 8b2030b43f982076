#include "flowssm/ssm/model.hpp"

#include <set>

#include "flowssm/autodiff/archive.hpp"
#include "flowssm/common/error.hpp"

namespace flowssm::ssm {

namespace {

const std::set<std::string>& training_keys() {
  static const std::set<std::string> keys{"epochs",          "lr",           "batch_size",       "n_sample_points",
                                          "latent_init_std", "latent_dim",   "global_hidden",    "local_hidden",
                                          "negative_slope",  "n_control_points", "initial_eps", "train_local",
                                          "flow",            "seed"};
  return keys;
}

template <typename T>
void get_optional(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) j.at(key).get_to(out);
}

}  // namespace

void TrainingConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError("invalid training config: " + what);
  };
  require(epochs >= 0, "epochs must be >= 0");
  require(lr > 0.0, "lr must be positive");
  require(batch_size >= 1, "batch_size must be >= 1");
  require(n_sample_points >= 1, "n_sample_points must be >= 1");
  require(latent_init_std > 0.0, "latent_init_std must be positive");
  require(latent_dim >= 1, "latent_dim must be >= 1");
  require(global_hidden.size() == 4 && local_hidden.size() == 4, "hidden widths need four entries");
  for (int w : global_hidden) require(w >= 1, "hidden widths must be positive");
  for (int w : local_hidden) require(w >= 1, "hidden widths must be positive");
  require(negative_slope >= 0.0, "negative_slope must be >= 0");
  require(n_control_points >= 1, "n_control_points must be >= 1");
  require(initial_eps >= latent::kMinInitialEps && initial_eps <= latent::kMaxInitialEps,
          "initial_eps must lie in [0.01, 30]");
  require(flow.n_steps >= 1, "flow.n_steps must be >= 1");
  require(flow.divergence_bound > 0.0, "flow.divergence_bound must be positive");
}

void to_json(nlohmann::json& j, const TrainingConfig& c) {
  j = nlohmann::json{{"epochs", c.epochs},
                     {"lr", c.lr},
                     {"batch_size", c.batch_size},
                     {"n_sample_points", c.n_sample_points},
                     {"latent_init_std", c.latent_init_std},
                     {"latent_dim", c.latent_dim},
                     {"global_hidden", c.global_hidden},
                     {"local_hidden", c.local_hidden},
                     {"negative_slope", c.negative_slope},
                     {"n_control_points", c.n_control_points},
                     {"initial_eps", c.initial_eps},
                     {"train_local", c.train_local},
                     {"flow", c.flow},
                     {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, TrainingConfig& c) {
  if (!j.is_object()) throw ConfigError("training config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!training_keys().count(key)) throw ConfigError("unknown training config key '" + key + "'");
  }
  get_optional(j, "epochs", c.epochs);
  get_optional(j, "lr", c.lr);
  get_optional(j, "batch_size", c.batch_size);
  get_optional(j, "n_sample_points", c.n_sample_points);
  get_optional(j, "latent_init_std", c.latent_init_std);
  get_optional(j, "latent_dim", c.latent_dim);
  get_optional(j, "global_hidden", c.global_hidden);
  get_optional(j, "local_hidden", c.local_hidden);
  get_optional(j, "negative_slope", c.negative_slope);
  get_optional(j, "n_control_points", c.n_control_points);
  get_optional(j, "initial_eps", c.initial_eps);
  get_optional(j, "train_local", c.train_local);
  if (j.contains("flow")) {
    const auto& f = j.at("flow");
    for (const auto& [key, value] : f.items()) {
      if (key != "n_steps" && key != "integrator" && key != "divergence_bound") {
        throw ConfigError("unknown flow config key '" + key + "'");
      }
    }
    nlohmann::json merged = c.flow;
    merged.update(f);
    c.flow = merged.get<flow::FlowConfig>();
  }
  get_optional(j, "seed", c.seed);
}

Points FlowSsmModel::deform(const Points& points, const latent::LatentState& z, bool use_local) const {
  ad::NoGradGuard guard;
  latent::GlobalStage global{&mlp_global, ad::Tensor::constant(Matrix(z.z_global.transpose()))};
  std::optional<latent::LocalStage> local;
  if (use_local) local = latent::LocalStage{&mlp_local, &cps, ad::Tensor::constant(z.z_local)};
  return latent::compose_deformers(ad::Tensor::constant(points), global, local, flow).value();
}

geometry::TriMesh FlowSsmModel::deform_template(const latent::LatentState& z, bool use_local) const {
  geometry::TriMesh out;
  out.vertices = deform(template_mesh.vertices, z, use_local);
  out.faces = template_mesh.faces;
  return out;
}

latent::LatentState FlowSsmModel::decode(const Vector& global_weights, const Vector& local_weights) const {
  latent::LatentState z;
  z.z_global = pca_global.reconstruct(global_weights);
  const Vector flat = pca_local.reconstruct(local_weights);
  z.z_local = Eigen::Map<const Matrix>(flat.data(), control_point_count(), latent_dim());
  return z;
}

Vector FlowSsmModel::pca_features(const latent::LatentState& z) const {
  const Vector flat = Eigen::Map<const Vector>(z.z_local.data(), z.z_local.size());
  const Vector g = pca_global.project(z.z_global);
  const Vector l = pca_local.project(flat);
  Vector out(g.size() + l.size());
  out << g, l;
  return out;
}

namespace {

void put_pca(ad::TensorArchive& a, const std::string& prefix, const PcaBasis& p) {
  a.put(prefix + ".mean", Matrix(p.mean.transpose()), {p.mean.size()});
  a.put(prefix + ".components", p.components, {p.components.rows(), p.components.cols()});
  a.put(prefix + ".stddevs", Matrix(p.stddevs.transpose()), {p.stddevs.size()});
}

PcaBasis get_pca(const ad::TensorArchive& a, const std::string& prefix) {
  PcaBasis p;
  p.mean = a.get(prefix + ".mean").row(0).transpose();
  const auto& shape = a.tensors.at(prefix + ".components").first;
  p.components = a.get(prefix + ".components");
  p.components.resize(shape.at(0), shape.at(1));
  const Matrix& s = a.get(prefix + ".stddevs");
  p.stddevs = s.size() == 0 ? Vector(0) : Vector(s.row(0).transpose());
  p.degenerate = p.components.rows() == 0;
  if (p.components.rows() != 0 && p.components.cols() != p.mean.size()) throw IoError(prefix + " has inconsistent shapes");
  return p;
}

}  // namespace

void save_checkpoint(const FlowSsmModel& model, const std::filesystem::path& path) {
  ad::TensorArchive a;
  const auto d = model.latent_dim();
  const auto m = model.control_point_count();
  const auto n = static_cast<Eigen::Index>(model.training_latents.size());
  a.manifest = {{"format", "flowssm-checkpoint"},
                {"software_version", kSoftwareVersion},
                {"latent_dim", d},
                {"n_control_points", m},
                {"n_training_shapes", n},
                {"mlp_global", model.mlp_global.config()},
                {"mlp_local", model.mlp_local.config()},
                {"flow", model.flow},
                {"normalization_scale", model.normalization_scale},
                {"training_config", model.training_config}};
  a.put("template.vertices", model.template_mesh.vertices);
  a.put("template.faces", model.template_mesh.faces.cast<double>());
  model.mlp_global.save(a, "mlp_global");
  model.mlp_local.save(a, "mlp_local");
  a.put("control_points.positions", model.cps.positions);
  a.put("control_points.inverse_widths", model.cps.inverse_widths.value(), {m});
  Matrix zg(n, d);
  Matrix zl(n, m * d);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& z = model.training_latents[static_cast<std::size_t>(i)];
    zg.row(i) = z.z_global.transpose();
    zl.row(i) = Eigen::Map<const Eigen::RowVectorXd>(z.z_local.data(), m * d);
  }
  a.put("latents.global", zg, {n, d});
  a.put("latents.local", zl, {n, m, d});
  put_pca(a, "pca_global", model.pca_global);
  put_pca(a, "pca_local", model.pca_local);
  ad::write_archive(path, a);
}

FlowSsmModel load_checkpoint(const std::filesystem::path& path) {
  const auto a = ad::read_archive(path);
  try {
    if (a.manifest.value("format", "") != "flowssm-checkpoint") throw IoError("not a FlowSSM checkpoint");
    FlowSsmModel model;
    const int d = a.manifest.at("latent_dim").get<int>();
    const auto m = a.manifest.at("n_control_points").get<Eigen::Index>();
    const auto n = a.manifest.at("n_training_shapes").get<Eigen::Index>();
    model.template_mesh.vertices = a.get("template.vertices");
    model.template_mesh.faces = a.get("template.faces").cast<std::int32_t>();
    model.template_mesh.validate();
    model.mlp_global = flow::ImNetMlp::load(a, "mlp_global", a.manifest.at("mlp_global").get<flow::MlpConfig>());
    model.mlp_local = flow::ImNetMlp::load(a, "mlp_local", a.manifest.at("mlp_local").get<flow::MlpConfig>());
    model.cps.positions = a.get("control_points.positions");
    model.cps.inverse_widths = ad::Tensor::parameter(a.get("control_points.inverse_widths"), {m});
    model.flow = a.manifest.at("flow").get<flow::FlowConfig>();
    model.normalization_scale = a.manifest.at("normalization_scale").get<double>();
    model.training_config = a.manifest.at("training_config");
    const Matrix& zg = a.get("latents.global");
    const Matrix& zl = a.get("latents.local");
    if (model.cps.positions.rows() != m || zg.rows() != n || zg.cols() != d || zl.rows() != n || zl.cols() != m * d ||
        model.mlp_global.latent_dim() != d || model.mlp_local.latent_dim() != d) {
      throw IoError("checkpoint tensors are inconsistent with its manifest");
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      latent::LatentState z;
      z.z_global = zg.row(i).transpose();
      z.z_local = Eigen::Map<const Matrix>(zl.row(i).data(), m, d);
      model.training_latents.push_back(std::move(z));
    }
    model.pca_global = get_pca(a, "pca_global");
    model.pca_local = get_pca(a, "pca_local");
    if (model.pca_global.dim() != d || model.pca_local.dim() != m * d) throw IoError("checkpoint PCA has wrong size");
    model.mlp_global.set_trainable(false);
    model.mlp_local.set_trainable(false);
    model.cps.inverse_widths.set_requires_grad(false);
    return model;
  } catch (const IoError&) {
    throw;
  } catch (const std::exception& e) {
    throw IoError("corrupt checkpoint " + path.string() + ": " + e.what());
  }
}

}  // namespace flowssm::ssm
