#include <doctest.h>

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <string>

#include <Eigen/Geometry>
#include <json.hpp>

#include "flowssm/common/atomic_file.hpp"
#include "flowssm/common/hash.hpp"
#include "flowssm/geometry/mesh.hpp"
#include "flowssm/synth/synth.hpp"

namespace fs = std::filesystem;
using namespace flowssm;
using nlohmann::json;

namespace {

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("flowssm_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

struct Run {
  int code;
  std::string err;
};

Run run_cli(const std::string& args, const fs::path& cwd) {
  const auto err_file = cwd / "stderr.txt";
  const std::string cmd = "cd '" + cwd.string() + "' && '" FLOWSSM_BIN "' " + args + " > /dev/null 2> '" +
                          err_file.string() + "'";
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, read_file(err_file)};
}

void write_json(const fs::path& p, const json& j) { write_file_atomic(p, j.dump(2)); }

json desk_config(int epochs) {
  return {{"seed", 3},
          {"output_dir", "run"},
          {"data", {{"shapes_dir", "pre/shapes"}, {"template", "pre/template.obj"}}},
          {"training",
           {{"epochs", epochs},
            {"batch_size", 4},
            {"n_sample_points", 500},
            {"latent_dim", 8},
            {"global_hidden", {24, 24, 24, 24}},
            {"local_hidden", {24, 24, 24, 24}},
            {"n_control_points", 27}}},
          {"fit", {{"iters", 20}, {"n_sample_points", 500}}},
          {"evaluation", {{"assd_samples", 2000}, {"chamfer_points", 500}, {"n_specificity_samples", 5}}}};
}

/// synth -> preprocess into `dir`, returns the template used for preprocessing.
void make_dataset(const fs::path& dir, int n) {
  write_json(dir / "spec.json", {{"family", "ellipsoid"}, {"subdivisions", 3}, {"seed", 11}});
  REQUIRE(run_cli("synth spec.json -o syn --n " + std::to_string(n), dir).code == 0);
  REQUIRE(run_cli("preprocess syn/shapes --template syn/template.obj -o pre", dir).code == 0);
}

std::map<std::string, std::string> tree_hashes(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), dir).string()] = git_blob_hash_file(e.path());
  }
  return out;
}

bool watertight(const geometry::TriMesh& m) {
  std::map<std::pair<int, int>, int> edges;
  for (Eigen::Index f = 0; f < m.face_count(); ++f) {
    for (int k = 0; k < 3; ++k) {
      const int a = m.faces(f, k), b = m.faces(f, (k + 1) % 3);
      edges[{std::min(a, b), std::max(a, b)}]++;
    }
  }
  for (const auto& [e, count] : edges) {
    if (count != 2) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("usage errors exit with code 2") {
  const auto dir = scratch("usage");
  const auto r = run_cli("preprocess in -o out", dir);
  CHECK(r.code == 2);
  CHECK(r.err.find("--template") != std::string::npos);
  CHECK(run_cli("preprocess in --template missing.obj -o out", dir).code == 2);
  CHECK(run_cli("", dir).code == 2);
  CHECK(run_cli("--help", dir).code == 0);
  write_json(dir / "cfg.json", {{"trainig", json::object()}});
  CHECK(run_cli("train cfg.json", dir).code == 2);
  CHECK(run_cli("synth nothing.json -o x", dir).code == 2);
}

TEST_CASE("preprocess undoes rigid perturbations and is idempotent") {
  const auto dir = scratch("preprocess");
  const auto tmpl = synth::family_template(synth::FamilySpec{});
  fs::create_directories(dir / "in");
  geometry::save_mesh(tmpl, dir / "template.obj");
  for (int i = 0; i < 3; ++i) {
    geometry::TriMesh m = tmpl;
    const Mat3 r = Eigen::AngleAxisd(0.1 * (i + 1), Vec3(1, i, 2).normalized()).toRotationMatrix();
    for (Eigen::Index v = 0; v < m.vertex_count(); ++v) {
      m.vertices.row(v) = (r * m.vertex(v) + Vec3(0.2 * i, -0.1, 0.05)).transpose();
    }
    geometry::save_mesh(m, dir / "in" / ("s" + std::to_string(i) + ".obj"));
  }
  const auto before = tree_hashes(dir / "in");
  REQUIRE(run_cli("preprocess in --template template.obj -o out", dir).code == 0);
  CHECK(tree_hashes(dir / "in") == before);
  const auto t = geometry::load_mesh(dir / "out" / "template.obj");
  for (int i = 0; i < 3; ++i) {
    const auto m = geometry::load_mesh(dir / "out" / "shapes" / ("s" + std::to_string(i) + ".obj"));
    CHECK((m.vertices - t.vertices).cwiseAbs().maxCoeff() < 1e-3);
  }
  const auto manifest = json::parse(read_file(dir / "out" / "preprocess.json"));
  CHECK(manifest["shapes"].size() == 3);
  const auto run = json::parse(read_file(dir / "out" / "run.json"));
  CHECK(run["inputs"].size() == 4);
  CHECK(run["inputs_hash"].get<std::string>().size() == 40);

  const auto out_before = tree_hashes(dir / "out");
  CHECK(run_cli("preprocess out --template template.obj -o out2", dir).code == 0);
  CHECK_FALSE(fs::exists(dir / "out2"));
  CHECK(tree_hashes(dir / "out") == out_before);
}

TEST_CASE("smoke pipeline on ten ellipsoids") {
  const auto start = std::chrono::steady_clock::now();
  const auto dir = scratch("pipeline");
  make_dataset(dir, 10);
  write_json(dir / "cfg.json", desk_config(5));
  REQUIRE(run_cli("train cfg.json", dir).code == 0);
  for (const char* f : {"model.fssm", "loss.csv", "latents.csv", "run.json"}) CHECK(fs::exists(dir / "run" / f));
  REQUIRE(run_cli("evaluate run/model.fssm pre/shapes --config cfg.json --train-dir pre/shapes -o eval", dir).code == 0);
  const auto report = json::parse(read_file(dir / "eval" / "report.json"));
  CHECK(report["generality_records"].size() == 10);
  CHECK(report["specificity_records"].size() == 5);
  CHECK(report["generality"]["mean"].get<double>() >= 0.0);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  CHECK(seconds < 300.0);

  SUBCASE("sample, fit and classify") {
    REQUIRE(run_cli("sample run/model.fssm -o samples --n 3 --seed 4", dir).code == 0);
    CHECK(fs::exists(dir / "samples" / "sample_002.obj"));

    const auto target = geometry::load_mesh(dir / "pre" / "shapes" / "member_004.obj");
    geometry::TriMesh half = target;
    std::vector<Eigen::Index> keep;
    for (Eigen::Index f = 0; f < target.face_count(); ++f) {
      bool upper = true;
      for (int k = 0; k < 3; ++k) upper &= target.vertices(target.faces(f, k), 2) > 0.0;
      if (upper) keep.push_back(f);
    }
    half.faces.resize(static_cast<Eigen::Index>(keep.size()), 3);
    for (std::size_t i = 0; i < keep.size(); ++i) half.faces.row(static_cast<Eigen::Index>(i)) = target.faces.row(keep[i]);
    geometry::save_mesh(half, dir / "half.obj");
    REQUIRE(run_cli("fit run/model.fssm half.obj -o fit --loss-mode one_sided --iters 10", dir).code == 0);
    const auto fitted = geometry::load_mesh(dir / "fit" / "fitted.obj");
    const auto tmpl = geometry::load_mesh(dir / "pre" / "template.obj");
    CHECK(fitted.faces == tmpl.faces);
    CHECK(watertight(fitted));
    const auto latent = json::parse(read_file(dir / "fit" / "latent.json"));
    CHECK(latent["loss_mode"] == "one_sided_target_to_deformed");
    CHECK(latent["loss_mode_requested"] == "one_sided");
    CHECK(latent["span_residual_global"].get<double>() < 1e-9);

    std::ofstream(dir / "points.xyz") << "# x y z\n0.1 0.2 0.3\n0.5, -0.4, 0.2\n-0.3 0.1 -0.2\n";
    CHECK(run_cli("fit run/model.fssm points.xyz -o fitpts --loss-mode sparse --iters 3", dir).code == 0);
    std::ofstream(dir / "broken.xyz") << "0.1 0.2\n";
    CHECK(run_cli("fit run/model.fssm broken.xyz -o fitbroken --iters 3", dir).code == 3);
    CHECK(run_cli("fit run/model.fssm half.obj -o fitbad --loss-mode sideways", dir).code == 2);

    std::ofstream labels(dir / "labels.csv");
    labels << "name,label\n";
    for (int i = 0; i < 10; ++i) labels << "member_00" << i << ',' << (i % 2 ? 1 : -1) << '\n';
    labels.close();
    REQUIRE(run_cli("classify run/latents.csv labels.csv -o cls --n-splits 10", dir).code == 0);
    const auto acc = read_file(dir / "cls" / "accuracy.csv");
    CHECK(acc.rfind("fraction,mean,std,n_splits\n", 0) == 0);
  }

  SUBCASE("corrupted checkpoints fail with I/O status and no outputs") {
    std::string bytes = read_file(dir / "run" / "model.fssm");
    bytes[0] = 'X';
    write_file_atomic(dir / "bad.fssm", bytes);
    CHECK(run_cli("fit bad.fssm pre/shapes/member_000.obj -o badfit", dir).code == 3);
    CHECK_FALSE(fs::exists(dir / "badfit"));
    CHECK(run_cli("sample bad.fssm -o badsample", dir).code == 3);
    CHECK_FALSE(fs::exists(dir / "badsample"));
  }
}

TEST_CASE("identical runs produce byte-identical outputs") {
  const auto dir = scratch("determinism");
  make_dataset(dir, 4);
  write_json(dir / "cfg.json", desk_config(2));
  REQUIRE(run_cli("train cfg.json -o a", dir).code == 0);
  REQUIRE(run_cli("train cfg.json -o b", dir).code == 0);
  CHECK(tree_hashes(dir / "a") == tree_hashes(dir / "b"));
  REQUIRE(run_cli("sample model.fssm -o s --n 2", dir / "a").code == 0);
  REQUIRE(run_cli("sample model.fssm -o s --n 2", dir / "b").code == 0);
  CHECK(tree_hashes(dir / "a") == tree_hashes(dir / "b"));
}
