#include "flowssm/cli/commands.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <cstdio>
#include <iostream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "flowssm/autodiff/archive.hpp"
#include "flowssm/cli/run_config.hpp"
#include "flowssm/common/atomic_file.hpp"
#include "flowssm/common/error.hpp"
#include "flowssm/common/hash.hpp"
#include "flowssm/eval/evaluation.hpp"
#include "flowssm/eval/svm.hpp"
#include "flowssm/geometry/registration.hpp"
#include "flowssm/geometry/sampling.hpp"
#include "flowssm/ssm/model.hpp"
#include "flowssm/synth/synth.hpp"

namespace flowssm::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kPreprocessManifest = "preprocess.json";

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string indexed_name(const char* stem, std::size_t i, const std::string& ext) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%03zu.%s", stem, i, ext.c_str());
  return buf;
}

geometry::MeshFormat parse_format(const std::string& name) {
  if (name == "obj") return geometry::MeshFormat::Obj;
  if (name == "ply") return geometry::MeshFormat::Ply;
  if (name == "ply_ascii") return geometry::MeshFormat::PlyAscii;
  throw ConfigError("unknown mesh format '" + name + "' (obj, ply, ply_ascii)");
}

std::string extension_for(const std::string& format) { return format == "obj" ? "obj" : "ply"; }

/// Exclusive advisory lock on a directory, held for the object's lifetime.
class DirectoryLock {
 public:
  explicit DirectoryLock(const fs::path& dir) {
    fd_ = ::open(dir.c_str(), O_RDONLY | O_DIRECTORY);
    if (fd_ < 0) throw IoError("cannot open output directory " + dir.string());
    if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
      ::close(fd_);
      throw IoError("output directory " + dir.string() + " is locked by another process");
    }
  }
  ~DirectoryLock() {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
  DirectoryLock(const DirectoryLock&) = delete;
  DirectoryLock& operator=(const DirectoryLock&) = delete;

 private:
  int fd_ = -1;
};

fs::path prepare_output_dir(const fs::path& dir) {
  if (dir.empty()) throw ConfigError("no output directory given");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  return dir;
}

/// Output directory session: lock, atomic writes, input hashes and run.json.
class RunRecord {
 public:
  RunRecord(std::string command, const fs::path& out_dir)
      : command_(std::move(command)), dir_(prepare_output_dir(out_dir)), lock_(dir_) {}

  void add_input(const fs::path& path) { inputs_[path.string()] = git_blob_hash_file(path); }
  void set_config(json config) { config_ = std::move(config); }
  void set_seed(std::uint64_t seed) { seed_ = seed; }

  [[nodiscard]] const fs::path& dir() const { return dir_; }

  void write(const std::string& name, std::string_view contents) {
    write_file_atomic(dir_ / name, contents);
    outputs_.push_back(name);
  }
  void write_mesh(const std::string& name, const geometry::TriMesh& mesh, geometry::MeshFormat format) {
    geometry::save_mesh(mesh, dir_ / name, format);
    outputs_.push_back(name);
  }
  void note_output(const std::string& name) { outputs_.push_back(name); }

  void finish() {
    json inputs = json::array();
    std::string listing;
    for (const auto& [path, hash] : inputs_) {
      inputs.push_back({{"path", path}, {"sha1", hash}});
      listing += hash + "  " + path + "\n";
    }
    json run{{"command", command_},
             {"software_version", ssm::kSoftwareVersion},
             {"seed", seed_},
             {"config", config_},
             {"inputs", inputs},
             {"inputs_hash", git_blob_hash(listing)},
             {"outputs", outputs_}};
    write_file_atomic(dir_ / "run.json", run.dump(2) + "\n");
  }

 private:
  std::string command_;
  fs::path dir_;
  DirectoryLock lock_;
  std::map<std::string, std::string> inputs_;
  std::vector<std::string> outputs_;
  json config_ = json::object();
  std::uint64_t seed_ = 0;
};

std::vector<geometry::TriMesh> load_meshes(const std::vector<fs::path>& files) {
  std::vector<geometry::TriMesh> out;
  for (const auto& f : files) out.push_back(geometry::load_mesh(f));
  return out;
}

std::vector<std::string> stems(const std::vector<fs::path>& files) {
  std::vector<std::string> out;
  for (const auto& f : files) out.push_back(f.stem().string());
  return out;
}

bool is_point_file(const fs::path& p) {
  auto ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".xyz" || ext == ".pts" || ext == ".txt" || ext == ".csv";
}

/// One point per line, three numbers separated by whitespace or commas; '#' starts a comment.
geometry::PointSet load_points(const fs::path& path) {
  std::istringstream in(read_file(path));
  std::string line;
  std::vector<Vec3> pts;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ls(line);
    double x, y, z;
    if (!(ls >> x)) continue;
    if (!(ls >> y >> z)) throw ParseError(path.string() + ":" + std::to_string(line_no) + ": expected three coordinates");
    pts.emplace_back(x, y, z);
  }
  Points p(static_cast<Eigen::Index>(pts.size()), 3);
  for (std::size_t i = 0; i < pts.size(); ++i) p.row(static_cast<Eigen::Index>(i)) = pts[i].transpose();
  geometry::PointSet set(std::move(p), geometry::PointSource::External);
  set.validate();
  return set;
}

struct ResolvedLossMode {
  ssm::LossMode mode;
  std::string requested;
};

/// "one_sided", "partial" and "sparse" name the input kind; all resolve to the
/// target->deformed direction, which leaves unobserved model regions unpenalized.
ResolvedLossMode resolve_loss_mode(const std::string& name) {
  if (name == "one_sided" || name == "partial" || name == "sparse") {
    return {ssm::LossMode::OneSidedTargetToDeformed, name};
  }
  return {ssm::parse_loss_mode(name), name};
}

double preprocess_scale(const fs::path& manifest) {
  const auto j = json::parse(read_file(manifest));
  return j.at("scale").get<double>();
}

std::string latents_csv(const ssm::FlowSsmModel& model, const std::vector<std::string>& names) {
  std::ostringstream out;
  out << "name";
  for (Eigen::Index k = 0; k < model.pca_global.modes(); ++k) out << ",g" << k;
  for (Eigen::Index k = 0; k < model.pca_local.modes(); ++k) out << ",l" << k;
  out << '\n';
  for (std::size_t i = 0; i < model.training_latents.size(); ++i) {
    out << names[i];
    const Vector f = model.pca_features(model.training_latents[i]);
    for (Eigen::Index k = 0; k < f.size(); ++k) out << ',' << format_double(f(k));
    out << '\n';
  }
  return std::move(out).str();
}

std::vector<std::vector<std::string>> read_csv(const fs::path& path) {
  std::istringstream in(read_file(path));
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    rows.push_back(std::move(cells));
  }
  return rows;
}

double parse_number(const std::string& s, const fs::path& file) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ParseError(file.string() + ": '" + s + "' is not a number");
  }
}

json vector_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

json matrix_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) rows.push_back(vector_json(m.row(r).transpose()));
  return rows;
}

}  // namespace

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const InvalidArgument*>(&e) ||
      dynamic_cast<const DataError*>(&e) || dynamic_cast<const DegenerateLabels*>(&e)) {
    return kExitUsage;
  }
  if (dynamic_cast<const IoError*>(&e) || dynamic_cast<const ParseError*>(&e) ||
      dynamic_cast<const TopologyError*>(&e) || dynamic_cast<const ConnectivityMismatch*>(&e) ||
      dynamic_cast<const fs::filesystem_error*>(&e)) {
    return kExitIo;
  }
  return kExitNumeric;
}

std::vector<fs::path> list_meshes(const fs::path& dir) {
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw IoError("not a directory: " + dir.string());
  std::vector<fs::path> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && geometry::format_from_extension(entry.path())) out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  if (out.empty()) throw IoError("no .obj or .ply meshes in " + dir.string());
  return out;
}

void run_preprocess(const PreprocessOptions& o) {
  if (fs::exists(o.in_dir / kPreprocessManifest)) {
    std::cerr << "flowssm preprocess: " << o.in_dir.string() << " is already preprocessed; nothing to do\n";
    return;
  }
  if (o.icp_iters < 0) throw ConfigError("--icp-iters must be >= 0");
  const auto files = list_meshes(o.in_dir);
  const auto template_mesh = geometry::load_mesh(o.template_path);
  template_mesh.validate();
  const auto meshes = load_meshes(files);

  std::vector<geometry::TriMesh> aligned;
  json records = json::array();
  for (std::size_t i = 0; i < meshes.size(); ++i) {
    auto icp = geometry::icp_align(meshes[i], template_mesh, o.icp_iters, o.icp_tol);
    if (!icp.converged) {
      std::cerr << "warning: ICP for " << files[i].filename().string() << " stopped at max_iters=" << o.icp_iters << '\n';
    }
    records.push_back({{"name", files[i].stem().string()},
                       {"source", files[i].filename().string()},
                       {"rotation", matrix_json(icp.transform.rotation)},
                       {"translation", vector_json(icp.transform.translation)},
                       {"icp_iterations", icp.iterations},
                       {"icp_rms", icp.rms},
                       {"icp_converged", icp.converged}});
    aligned.push_back(std::move(icp.aligned));
  }
  const auto norm = geometry::normalize_to_unit_box(aligned, o.reference_half_extent);
  const auto tmpl_norm = geometry::normalize_to_unit_box({template_mesh}, 1.0 / norm.scale);

  RunRecord run("preprocess", o.out_dir);
  for (const auto& f : files) run.add_input(f);
  run.add_input(o.template_path);
  std::error_code ec;
  fs::create_directories(run.dir() / "shapes", ec);
  if (ec) throw IoError("cannot create " + (run.dir() / "shapes").string());
  for (std::size_t i = 0; i < norm.meshes.size(); ++i) {
    records[i]["center"] = vector_json(norm.centers[i]);
    run.write_mesh("shapes/" + files[i].stem().string() + ".obj", norm.meshes[i], geometry::MeshFormat::Obj);
  }
  run.write_mesh("template.obj", tmpl_norm.meshes[0], geometry::MeshFormat::Obj);
  json manifest{{"format", "flowssm-preprocess"},
                {"scale", norm.scale},
                {"template_center", vector_json(tmpl_norm.centers[0])},
                {"shapes", records}};
  run.write(kPreprocessManifest, manifest.dump(2) + "\n");
  run.set_config({{"in_dir", o.in_dir.string()},
                  {"template", o.template_path.string()},
                  {"icp_iters", o.icp_iters},
                  {"icp_tol", o.icp_tol},
                  {"reference_half_extent", o.reference_half_extent ? json(*o.reference_half_extent) : json(nullptr)}});
  run.finish();
}

void run_train(const TrainOptions& o) {
  const RunConfig cfg = load_run_config(o.config);
  const fs::path out_dir = o.out_dir.empty() ? cfg.output_dir : o.out_dir;
  if (cfg.shapes_dir.empty() || cfg.template_path.empty()) throw ConfigError("data.shapes_dir and data.template are required");
  const auto files = list_meshes(cfg.shapes_dir);
  const auto shapes = load_meshes(files);
  const auto template_mesh = geometry::load_mesh(cfg.template_path);
  fs::path manifest = cfg.preprocess_manifest;
  if (manifest.empty() && fs::exists(cfg.shapes_dir.parent_path() / kPreprocessManifest)) {
    manifest = cfg.shapes_dir.parent_path() / kPreprocessManifest;
  }
  const double scale = manifest.empty() ? 1.0 : preprocess_scale(manifest);

  RunRecord run("train", out_dir);
  run.add_input(o.config);
  for (const auto& f : files) run.add_input(f);
  run.add_input(cfg.template_path);
  if (!manifest.empty()) run.add_input(manifest);

  auto result = ssm::train(shapes, template_mesh, cfg.training, [](const ssm::LossRecord& r) {
    std::cerr << "stage " << r.stage << " epoch " << r.epoch << " loss " << r.loss << '\n';
  });
  result.model.normalization_scale = scale;

  std::ostringstream loss;
  loss << "stage,epoch,loss\n";
  for (const auto& r : result.loss_curve) loss << r.stage << ',' << r.epoch << ',' << format_double(r.loss) << '\n';
  ssm::save_checkpoint(result.model, run.dir() / "model.fssm");
  run.note_output("model.fssm");
  run.write("loss.csv", loss.str());
  run.write("latents.csv", latents_csv(result.model, stems(files)));
  run.set_config(cfg.to_json());
  run.set_seed(cfg.seed);
  run.finish();
  std::cerr << "final loss " << format_double(result.final_loss) << '\n';
}

void run_fit(const FitOptions& o) {
  const auto model = ssm::load_checkpoint(o.checkpoint);
  ssm::FitConfig fit = o.config.empty() ? ssm::FitConfig{} : load_run_config(o.config).fit;
  const auto mode = resolve_loss_mode(o.loss_mode);
  fit.loss_mode = mode.mode;
  if (o.iters) fit.iters = *o.iters;
  if (o.lr) fit.lr = *o.lr;
  if (o.n_points) fit.n_sample_points = *o.n_points;
  if (o.seed) fit.seed = *o.seed;
  if (o.global_only) fit.use_local = false;
  if (fit.iters < 0 || fit.lr <= 0.0 || fit.n_sample_points < 1) throw ConfigError("invalid fit settings");
  const auto format = parse_format(o.format);

  geometry::PointSet target;
  if (is_point_file(o.target)) {
    target = load_points(o.target);
  } else {
    const auto mesh = geometry::load_mesh(o.target);
    target = geometry::sample_surface(mesh, fit.n_sample_points, fit.seed);
  }

  RunRecord run("fit", o.out_dir);
  run.add_input(o.checkpoint);
  run.add_input(o.target);
  if (!o.config.empty()) run.add_input(o.config);

  const auto result = ssm::fit_latent(model, target, fit);
  const std::string mesh_name = "fitted." + extension_for(o.format);
  run.write_mesh(mesh_name, result.mesh, format);
  const Vector local_flat = Eigen::Map<const Vector>(result.latents.z_local.data(), result.latents.z_local.size());
  json latent{{"loss_mode", ssm::loss_mode_name(fit.loss_mode)},
              {"loss_mode_requested", mode.requested},
              {"use_local", fit.use_local},
              {"global_loss", result.global_loss},
              {"final_loss", result.final_loss},
              {"global_weights", vector_json(result.global_weights)},
              {"local_weights", vector_json(result.local_weights)},
              {"z_global", vector_json(result.latents.z_global)},
              {"z_local", matrix_json(result.latents.z_local)},
              {"span_residual_global", model.pca_global.span_residual(result.latents.z_global)},
              {"span_residual_local", model.pca_local.span_residual(local_flat)}};
  run.write("latent.json", latent.dump(2) + "\n");
  run.set_config({{"checkpoint", o.checkpoint.string()},
                  {"target", o.target.string()},
                  {"loss_mode", ssm::loss_mode_name(fit.loss_mode)},
                  {"loss_mode_requested", mode.requested},
                  {"iters", fit.iters},
                  {"lr", fit.lr},
                  {"init_std", fit.init_std},
                  {"n_sample_points", fit.n_sample_points},
                  {"use_local", fit.use_local},
                  {"format", o.format}});
  run.set_seed(fit.seed);
  run.finish();
}

void run_sample(const SampleOptions& o) {
  if (o.n < 0) throw ConfigError("--n must be >= 0");
  const auto format = parse_format(o.format);
  const auto model = ssm::load_checkpoint(o.checkpoint);
  RunRecord run("sample", o.out_dir);
  run.add_input(o.checkpoint);
  json samples = json::array();
  for (int i = 0; i < o.n; ++i) {
    const auto s = ssm::sample_shape(model, o.seed + static_cast<std::uint64_t>(i));
    const auto name = indexed_name("sample", static_cast<std::size_t>(i), extension_for(o.format));
    run.write_mesh(name, s.mesh, format);
    samples.push_back({{"file", name},
                       {"global_weights", vector_json(s.global_weights)},
                       {"local_weights", vector_json(s.local_weights)}});
  }
  run.write("samples.json", samples.dump(2) + "\n");
  run.set_config({{"checkpoint", o.checkpoint.string()}, {"n", o.n}, {"format", o.format}});
  run.set_seed(o.seed);
  run.finish();
}

void run_evaluate(const EvaluateOptions& o) {
  const auto model = ssm::load_checkpoint(o.checkpoint);
  RunConfig cfg;
  if (!o.config.empty()) cfg = load_run_config(o.config);
  eval::EvalConfig ec = cfg.evaluation;
  ec.fit = cfg.fit;
  if (o.seed) {
    ec.seed = *o.seed;
    ec.fit.seed = *o.seed;
  }
  if (o.n_samples) ec.n_specificity_samples = *o.n_samples;
  if (ec.n_specificity_samples < 0) throw ConfigError("--n-samples must be >= 0");
  const fs::path test_dir = o.test_dir.empty() ? cfg.test_dir : o.test_dir;
  if (test_dir.empty()) throw ConfigError("no test directory given");
  const auto test_files = list_meshes(test_dir);
  const auto test_shapes = load_meshes(test_files);
  fs::path train_dir = o.train_dir.empty() ? cfg.shapes_dir : o.train_dir;
  std::vector<fs::path> train_files;
  if (!train_dir.empty()) train_files = list_meshes(train_dir);
  const auto train_shapes = load_meshes(train_files);

  RunRecord run("evaluate", o.out_dir);
  run.add_input(o.checkpoint);
  for (const auto& f : test_files) run.add_input(f);
  for (const auto& f : train_files) run.add_input(f);
  if (!o.config.empty()) run.add_input(o.config);

  eval::EvalReport report;
  report.normalization_scale = model.normalization_scale;
  report.generality = eval::evaluate_generality(model, test_shapes, ec, stems(test_files));
  if (!train_shapes.empty() && ec.n_specificity_samples > 0) {
    report.specificity = eval::evaluate_specificity(model, train_shapes, ec);
  }
  report.config = {{"fit",
                    {{"iters", ec.fit.iters},
                     {"lr", ec.fit.lr},
                     {"init_std", ec.fit.init_std},
                     {"n_sample_points", ec.fit.n_sample_points},
                     {"use_local", ec.fit.use_local},
                     {"loss_mode", ssm::loss_mode_name(ec.fit.loss_mode)}}},
                   {"assd_samples", ec.assd_samples},
                   {"chamfer_points", ec.chamfer_points},
                   {"n_specificity_samples", report.specificity.size()},
                   {"seed", ec.seed}};
  report.finalize();
  run.write("report.json", report.to_json().dump(2) + "\n");
  run.write("generality.csv", report.generality_csv());
  if (!report.specificity.empty()) run.write("specificity.csv", report.specificity_csv());
  run.set_config(report.config);
  run.set_seed(ec.seed);
  run.finish();
}

void run_classify(const ClassifyOptions& o) {
  RunConfig cfg;
  if (!o.config.empty()) cfg = load_run_config(o.config);
  eval::MonteCarloConfig mc = cfg.classification;
  if (o.n_splits) mc.n_splits = *o.n_splits;
  if (o.lambda) mc.svm.lambda = *o.lambda;
  if (o.seed) mc.seed = *o.seed;
  if (mc.n_splits < 1 || mc.svm.lambda <= 0.0) throw ConfigError("invalid classification settings");

  const auto feature_rows = read_csv(o.latents_csv);
  const auto label_rows = read_csv(o.labels_csv);
  if (feature_rows.size() < 2) throw ParseError(o.latents_csv.string() + ": no feature rows");
  std::map<std::string, int> label_of;
  for (std::size_t r = 0; r < label_rows.size(); ++r) {
    if (label_rows[r].size() != 2) throw ParseError(o.labels_csv.string() + ": expected name,label rows");
    if (r == 0 && label_rows[r][1] == "label") continue;
    const double v = parse_number(label_rows[r][1], o.labels_csv);
    if (v != 1.0 && v != -1.0) throw ConfigError("labels must be +1 or -1");
    label_of[label_rows[r][0]] = static_cast<int>(v);
  }
  const auto dim = static_cast<Eigen::Index>(feature_rows[0].size()) - 1;
  Matrix features(static_cast<Eigen::Index>(feature_rows.size()) - 1, dim);
  std::vector<int> labels;
  for (std::size_t r = 1; r < feature_rows.size(); ++r) {
    const auto& row = feature_rows[r];
    if (static_cast<Eigen::Index>(row.size()) != dim + 1) throw ParseError(o.latents_csv.string() + ": ragged row");
    const auto it = label_of.find(row[0]);
    if (it == label_of.end()) throw ConfigError("no label for '" + row[0] + "'");
    for (Eigen::Index c = 0; c < dim; ++c) {
      features(static_cast<Eigen::Index>(r) - 1, c) = parse_number(row[static_cast<std::size_t>(c) + 1], o.latents_csv);
    }
    labels.push_back(it->second);
  }

  RunRecord run("classify", o.out_dir);
  run.add_input(o.latents_csv);
  run.add_input(o.labels_csv);
  if (!o.config.empty()) run.add_input(o.config);
  const auto curve = eval::classify_monte_carlo(features, labels, mc);
  std::ostringstream out;
  out << "fraction,mean,std,n_splits\n";
  for (const auto& r : curve) {
    out << format_double(r.fraction) << ',' << format_double(r.mean) << ',' << format_double(r.stddev) << ','
        << r.n_splits << '\n';
  }
  run.write("accuracy.csv", out.str());
  run.set_config({{"lambda", mc.svm.lambda},
                  {"svm_iters", mc.svm.iters},
                  {"n_splits", mc.n_splits},
                  {"train_fractions", mc.train_fractions}});
  run.set_seed(mc.seed);
  run.finish();
}

void run_synth(const SynthOptions& o) {
  if (o.n < 1) throw ConfigError("--n must be >= 1");
  synth::FamilySpec spec;
  try {
    spec = json::parse(read_file(o.spec)).get<synth::FamilySpec>();
  } catch (const json::exception& e) {
    throw ConfigError("cannot parse family spec " + o.spec.string() + ": " + e.what());
  }
  spec.validate();
  const auto members = synth::generate_family(spec, o.n);
  RunRecord run("synth", o.out_dir);
  run.add_input(o.spec);
  synth::write_family(run.dir() / "shapes", spec, members);
  for (std::size_t i = 0; i < members.size(); ++i) run.note_output(indexed_name("shapes/member", i, "obj"));
  run.note_output("shapes/manifest.json");
  run.write_mesh("template.obj", synth::family_template(spec), geometry::MeshFormat::Obj);
  run.set_config({{"spec", spec}, {"n", o.n}});
  run.set_seed(spec.seed);
  run.finish();
}

}  // namespace flowssm::cli
