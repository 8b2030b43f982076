#include "flowssm/synth/synth.hpp"

#include <array>
#include <cmath>
#include <complex>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <unordered_map>

#include <Eigen/Geometry>

#include "flowssm/common/atomic_file.hpp"
#include "flowssm/common/error.hpp"
#include "flowssm/common/seed.hpp"
#include "flowssm/geometry/distance.hpp"
#include "flowssm/geometry/sampling.hpp"
#include "flowssm/ssm/pca.hpp"

namespace flowssm::synth {

namespace {

constexpr int kLobeCount = 3;
constexpr std::uint64_t kSiteStream = 0xb0b5;

Vec3 random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Vec3 v;
  do {
    v = Vec3(n(rng), n(rng), n(rng));
  } while (v.norm() < 1e-12);
  return v.normalized();
}

std::vector<Vec3> bump_sites(const FamilySpec& spec) {
  std::mt19937_64 rng(derive_seed(spec.seed, {kSiteStream}));
  std::vector<Vec3> sites;
  for (int j = 0; j < spec.bump_count; ++j) sites.push_back(random_unit(rng));
  return sites;
}

double ellipsoid_radius(const Vector& params, const Vec3& u) {
  return 1.0 / Vec3(u.x() / params(0), u.y() / params(1), u.z() / params(2)).norm();
}

double lobe(int j, const Vec3& u, double phase) {
  const std::complex<double> rot = std::polar(1.0, phase);
  switch (j) {
    case 0:
      return std::real(std::pow(std::complex<double>(u.x(), u.y()), 3) * rot);
    case 1:
      return 1.5 * std::sqrt(3.0) * u.z() * std::real(std::pow(std::complex<double>(u.x(), u.y()), 2) * rot);
    default:
      return std::real(std::pow(std::complex<double>(u.y(), u.z()), 2) * rot);
  }
}

double detail_factor(const FamilySpec& spec, const std::vector<Vec3>& sites, const Vector& params, const Vec3& u) {
  double f = 1.0;
  if (spec.family == Family::BumpyEllipsoid) {
    const auto k = static_cast<Eigen::Index>(sites.size());
    for (Eigen::Index j = 0; j < k; ++j) {
      const double a = params(3 + j);
      const double w = params(3 + k + j);
      f += a * std::exp(-(u - sites[static_cast<std::size_t>(j)]).squaredNorm() / (w * w));
    }
  } else if (spec.family == Family::LobedBlob) {
    for (int j = 0; j < kLobeCount; ++j) f += params(3 + j) * lobe(j, u, params(3 + kLobeCount + j));
  }
  return f;
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return lo == hi ? lo : std::uniform_real_distribution<double>(lo, hi)(rng);
}

Vector draw_params(const FamilySpec& spec, int index) {
  std::mt19937_64 axes_rng(derive_seed(spec.seed, {static_cast<std::uint64_t>(index), 0}));
  std::mt19937_64 detail_rng(derive_seed(spec.seed, {static_cast<std::uint64_t>(index), 2}));
  Vector params;
  switch (spec.family) {
    case Family::Ellipsoid:
      params.resize(3);
      break;
    case Family::BumpyEllipsoid:
      params.resize(3 + 2 * spec.bump_count);
      break;
    case Family::LobedBlob:
      params.resize(3 + 2 * kLobeCount);
      break;
  }
  for (int a = 0; a < 3; ++a) params(a) = uniform(axes_rng, spec.axis_min(a), spec.axis_max(a));
  if (spec.family == Family::BumpyEllipsoid) {
    for (int j = 0; j < spec.bump_count; ++j) {
      params(3 + j) = uniform(detail_rng, spec.bump_amplitude_min, spec.bump_amplitude_max);
      params(3 + spec.bump_count + j) = uniform(detail_rng, spec.bump_width_min, spec.bump_width_max);
    }
  } else if (spec.family == Family::LobedBlob) {
    for (int j = 0; j < kLobeCount; ++j) {
      params(3 + j) = uniform(detail_rng, spec.lobe_amplitude_min, spec.lobe_amplitude_max);
      params(3 + kLobeCount + j) = uniform(detail_rng, 0.0, 2.0 * std::numbers::pi);
    }
  }
  return params;
}

/// Fibonacci lattice under a random rotation with a small tangential jitter.
Points jittered_sphere_points(Eigen::Index n, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::Vector4d q(normal(rng), normal(rng), normal(rng), normal(rng));
  q.normalize();
  const Mat3 rot = Eigen::Quaterniond(q(0), q(1), q(2), q(3)).toRotationMatrix();
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  const double spacing = std::sqrt(4.0 * std::numbers::pi / static_cast<double>(n));
  Points p(n, 3);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double z = 1.0 - (2.0 * static_cast<double>(i) + 1.0) / static_cast<double>(n);
    const double r = std::sqrt(1.0 - z * z);
    const double phi = golden * static_cast<double>(i);
    Vec3 v(r * std::cos(phi), r * std::sin(phi), z);
    Vec3 jitter(normal(rng), normal(rng), normal(rng));
    jitter -= jitter.dot(v) * v;
    v = (v + 0.2 * spacing * jitter).normalized();
    p.row(i) = (rot * v).transpose();
  }
  return p;
}

geometry::TriMesh displace(const Points& directions, const Faces& faces, const FamilySpec& spec,
                           const std::vector<Vec3>& sites, const Vector& params) {
  geometry::TriMesh mesh;
  mesh.faces = faces;
  mesh.vertices.resize(directions.rows(), 3);
  for (Eigen::Index i = 0; i < directions.rows(); ++i) {
    const Vec3 u = directions.row(i).transpose();
    const double r = ellipsoid_radius(params, u) * detail_factor(spec, sites, params, u);
    mesh.vertices.row(i) = (r * u).transpose();
  }
  return mesh;
}

}  // namespace

const char* family_name(Family f) {
  switch (f) {
    case Family::Ellipsoid:
      return "ellipsoid";
    case Family::BumpyEllipsoid:
      return "bumpy_ellipsoid";
    case Family::LobedBlob:
      return "lobed_blob";
  }
  return "ellipsoid";
}

Family parse_family(const std::string& name) {
  for (auto f : {Family::Ellipsoid, Family::BumpyEllipsoid, Family::LobedBlob}) {
    if (name == family_name(f)) return f;
  }
  throw ConfigError("unknown shape family '" + name + "'");
}

void FamilySpec::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw InvalidArgument("invalid family spec: " + what);
  };
  for (int a = 0; a < 3; ++a) require(axis_min(a) > 0.0 && axis_min(a) <= axis_max(a), "axis range");
  require(bump_count >= 0, "bump_count must be >= 0");
  require(bump_amplitude_min >= 0.0 && bump_amplitude_min <= bump_amplitude_max, "bump amplitude range");
  require(bump_width_min > 0.0 && bump_width_min <= bump_width_max, "bump width range");
  require(lobe_amplitude_min >= 0.0 && lobe_amplitude_min <= lobe_amplitude_max, "lobe amplitude range");
  require(kLobeCount * lobe_amplitude_max < 0.9, "lobe amplitudes could fold the surface");
  require(subdivisions >= 0 && subdivisions <= 7, "subdivisions must lie in [0, 7]");
}

void to_json(nlohmann::json& j, const FamilySpec& s) {
  j = nlohmann::json{{"family", family_name(s.family)},
                     {"axis_min", {s.axis_min.x(), s.axis_min.y(), s.axis_min.z()}},
                     {"axis_max", {s.axis_max.x(), s.axis_max.y(), s.axis_max.z()}},
                     {"bump_count", s.bump_count},
                     {"bump_amplitude", {s.bump_amplitude_min, s.bump_amplitude_max}},
                     {"bump_width", {s.bump_width_min, s.bump_width_max}},
                     {"lobe_amplitude", {s.lobe_amplitude_min, s.lobe_amplitude_max}},
                     {"subdivisions", s.subdivisions},
                     {"jitter", s.jitter},
                     {"seed", s.seed}};
}

void from_json(const nlohmann::json& j, FamilySpec& s) {
  static const std::set<std::string> keys{"family",     "axis_min",       "axis_max",     "bump_count",
                                          "bump_amplitude", "bump_width", "lobe_amplitude", "subdivisions",
                                          "jitter",     "seed"};
  if (!j.is_object()) throw ConfigError("family spec must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!keys.count(key)) throw ConfigError("unknown family spec key '" + key + "'");
  }
  auto vec3 = [](const nlohmann::json& v) {
    const auto a = v.get<std::array<double, 3>>();
    return Vec3(a[0], a[1], a[2]);
  };
  auto range = [](const nlohmann::json& v, double& lo, double& hi) {
    const auto a = v.get<std::array<double, 2>>();
    lo = a[0];
    hi = a[1];
  };
  if (j.contains("family")) s.family = parse_family(j.at("family").get<std::string>());
  if (j.contains("axis_min")) s.axis_min = vec3(j.at("axis_min"));
  if (j.contains("axis_max")) s.axis_max = vec3(j.at("axis_max"));
  if (j.contains("bump_count")) j.at("bump_count").get_to(s.bump_count);
  if (j.contains("bump_amplitude")) range(j.at("bump_amplitude"), s.bump_amplitude_min, s.bump_amplitude_max);
  if (j.contains("bump_width")) range(j.at("bump_width"), s.bump_width_min, s.bump_width_max);
  if (j.contains("lobe_amplitude")) range(j.at("lobe_amplitude"), s.lobe_amplitude_min, s.lobe_amplitude_max);
  if (j.contains("subdivisions")) j.at("subdivisions").get_to(s.subdivisions);
  if (j.contains("jitter")) j.at("jitter").get_to(s.jitter);
  if (j.contains("seed")) j.at("seed").get_to(s.seed);
}

geometry::TriMesh icosphere(int subdivisions) {
  if (subdivisions < 0) throw InvalidArgument("subdivisions must be >= 0");
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Vec3> v{{-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
                      {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
  for (auto& p : v) p.normalize();
  std::vector<std::array<int, 3>> f{{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
                                    {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
                                    {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
                                    {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};
  for (int level = 0; level < subdivisions; ++level) {
    std::map<std::pair<int, int>, int> midpoint;
    auto mid = [&](int a, int b) {
      const auto key = std::minmax(a, b);
      auto it = midpoint.find(key);
      if (it != midpoint.end()) return it->second;
      v.push_back((v[static_cast<std::size_t>(a)] + v[static_cast<std::size_t>(b)]).normalized());
      const int id = static_cast<int>(v.size()) - 1;
      midpoint.emplace(key, id);
      return id;
    };
    std::vector<std::array<int, 3>> next;
    next.reserve(f.size() * 4);
    for (const auto& tri : f) {
      const int a = mid(tri[0], tri[1]), b = mid(tri[1], tri[2]), c = mid(tri[2], tri[0]);
      next.push_back({tri[0], a, c});
      next.push_back({tri[1], b, a});
      next.push_back({tri[2], c, b});
      next.push_back({a, b, c});
    }
    f = std::move(next);
  }
  geometry::TriMesh mesh;
  mesh.vertices.resize(static_cast<Eigen::Index>(v.size()), 3);
  for (std::size_t i = 0; i < v.size(); ++i) mesh.vertices.row(static_cast<Eigen::Index>(i)) = v[i].transpose();
  mesh.faces.resize(static_cast<Eigen::Index>(f.size()), 3);
  for (std::size_t i = 0; i < f.size(); ++i) {
    for (int k = 0; k < 3; ++k) mesh.faces(static_cast<Eigen::Index>(i), k) = f[i][static_cast<std::size_t>(k)];
  }
  return mesh;
}

Faces spherical_hull(const Points& points) {
  const auto n = points.rows();
  if (n < 4) throw InvalidArgument("a hull needs at least four points");
  auto pt = [&](Eigen::Index i) -> Vec3 { return points.row(i).transpose(); };

  // Seed tetrahedron from well-spread points.
  Eigen::Index i0 = 0, i1 = 0, i2 = 0, i3 = 0;
  double best = -1.0;
  for (Eigen::Index i = 1; i < n; ++i) {
    const double d = (pt(i) - pt(i0)).squaredNorm();
    if (d > best) best = d, i1 = i;
  }
  best = -1.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double d = (pt(i1) - pt(i0)).cross(pt(i) - pt(i0)).squaredNorm();
    if (d > best) best = d, i2 = i;
  }
  best = -1.0;
  const Vec3 normal0 = (pt(i1) - pt(i0)).cross(pt(i2) - pt(i0));
  for (Eigen::Index i = 0; i < n; ++i) {
    const double d = std::abs(normal0.dot(pt(i) - pt(i0)));
    if (d > best) best = d, i3 = i;
  }
  if (best <= 1e-12) throw InvalidArgument("hull points are coplanar");

  struct Face {
    std::array<Eigen::Index, 3> v;
    Vec3 normal;
    bool alive = true;
  };
  std::vector<Face> faces;
  std::unordered_map<std::uint64_t, std::size_t> edge_face;
  auto edge_key = [](Eigen::Index a, Eigen::Index b) {
    return (static_cast<std::uint64_t>(a) << 32) | static_cast<std::uint64_t>(b);
  };
  auto add_face = [&](Eigen::Index a, Eigen::Index b, Eigen::Index c) {
    Face f{{a, b, c}, (pt(b) - pt(a)).cross(pt(c) - pt(a)), true};
    faces.push_back(f);
    const auto id = faces.size() - 1;
    edge_face[edge_key(a, b)] = id;
    edge_face[edge_key(b, c)] = id;
    edge_face[edge_key(c, a)] = id;
  };

  const Vec3 inside = (pt(i0) + pt(i1) + pt(i2) + pt(i3)) / 4.0;
  const std::array<std::array<Eigen::Index, 3>, 4> seed_faces{{{i0, i1, i2}, {i0, i1, i3}, {i0, i2, i3}, {i1, i2, i3}}};
  for (auto tri : seed_faces) {
    const Vec3 nrm = (pt(tri[1]) - pt(tri[0])).cross(pt(tri[2]) - pt(tri[0]));
    if (nrm.dot(inside - pt(tri[0])) > 0.0) std::swap(tri[1], tri[2]);
    add_face(tri[0], tri[1], tri[2]);
  }

  std::vector<std::size_t> visible;
  std::vector<std::pair<Eigen::Index, Eigen::Index>> horizon;
  for (Eigen::Index p = 0; p < n; ++p) {
    if (p == i0 || p == i1 || p == i2 || p == i3) continue;
    const Vec3 x = pt(p);
    visible.clear();
    for (std::size_t f = 0; f < faces.size(); ++f) {
      if (faces[f].alive && faces[f].normal.dot(x - pt(faces[f].v[0])) > 1e-14) visible.push_back(f);
    }
    if (visible.empty()) continue;
    for (auto f : visible) faces[f].alive = false;
    horizon.clear();
    for (auto f : visible) {
      for (int k = 0; k < 3; ++k) {
        const auto a = faces[f].v[static_cast<std::size_t>(k)];
        const auto b = faces[f].v[static_cast<std::size_t>((k + 1) % 3)];
        const auto twin = edge_face.find(edge_key(b, a));
        if (twin != edge_face.end() && faces[twin->second].alive) horizon.emplace_back(a, b);
      }
    }
    for (auto f : visible) {
      for (int k = 0; k < 3; ++k) {
        edge_face.erase(edge_key(faces[f].v[static_cast<std::size_t>(k)], faces[f].v[static_cast<std::size_t>((k + 1) % 3)]));
      }
    }
    for (const auto& [a, b] : horizon) add_face(a, b, p);
  }

  std::vector<std::array<Eigen::Index, 3>> alive;
  for (const auto& f : faces) {
    if (f.alive) alive.push_back(f.v);
  }
  Faces out(static_cast<Eigen::Index>(alive.size()), 3);
  for (std::size_t i = 0; i < alive.size(); ++i) {
    for (int k = 0; k < 3; ++k) {
      out(static_cast<Eigen::Index>(i), k) = static_cast<std::int32_t>(alive[i][static_cast<std::size_t>(k)]);
    }
  }
  return out;
}

double family_radius(const FamilySpec& spec, const Vector& params, const Vec3& u) {
  const Vec3 dir = u.normalized();
  return ellipsoid_radius(params, dir) * detail_factor(spec, bump_sites(spec), params, dir);
}

std::vector<FamilyMember> generate_family(const FamilySpec& spec, int n) { return generate_family(spec, 0, n); }

std::vector<FamilyMember> generate_family(const FamilySpec& spec, int first, int n) {
  spec.validate();
  if (n < 0 || first < 0) throw InvalidArgument("member range must be non-negative");
  const auto sites = bump_sites(spec);
  const auto base = icosphere(spec.subdivisions);
  std::vector<FamilyMember> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = first; i < first + n; ++i) {
    FamilyMember member;
    member.params = draw_params(spec, i);
    if (spec.jitter) {
      std::mt19937_64 tri_rng(derive_seed(spec.seed, {static_cast<std::uint64_t>(i), 1}));
      const double factor = std::uniform_real_distribution<double>(0.9, 1.1)(tri_rng);
      const auto count = static_cast<Eigen::Index>(std::lround(factor * static_cast<double>(base.vertex_count())));
      const Points dirs = jittered_sphere_points(count, tri_rng);
      member.mesh = displace(dirs, spherical_hull(dirs), spec, sites, member.params);
    } else {
      member.mesh = displace(base.vertices, base.faces, spec, sites, member.params);
    }
    out.push_back(std::move(member));
  }
  return out;
}

geometry::TriMesh family_template(const FamilySpec& spec) {
  spec.validate();
  const auto base = icosphere(spec.subdivisions);
  FamilySpec plain = spec;
  plain.family = Family::Ellipsoid;
  Vector params = 0.5 * (spec.axis_min + spec.axis_max);
  return displace(base.vertices, base.faces, plain, {}, params);
}

double family_nearest_neighbor_spread(const std::vector<geometry::TriMesh>& members, Eigen::Index n_points,
                                      std::uint64_t seed) {
  if (members.size() < 2) throw InvalidArgument("spread needs at least two members");
  std::vector<geometry::PointSet> samples;
  for (std::size_t i = 0; i < members.size(); ++i) {
    samples.push_back(geometry::sample_surface(members[i], n_points, derive_seed(seed, {i})));
  }
  double total = 0.0;
  for (std::size_t i = 0; i < members.size(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < members.size(); ++j) {
      if (i != j) best = std::min(best, geometry::chamfer_distance(samples[i], samples[j]));
    }
    total += best;
  }
  return total / static_cast<double>(members.size());
}

BaselineReport vertex_pca_baseline(const std::vector<geometry::TriMesh>& training,
                                   const std::vector<geometry::TriMesh>& test, std::optional<Eigen::Index> max_modes,
                                   Eigen::Index assd_samples, std::uint64_t seed) {
  if (training.size() < 2) throw InvalidArgument("the vertex PCA baseline needs at least two training meshes");
  const auto& faces = training.front().faces;
  auto same = [&](const geometry::TriMesh& m) {
    return m.faces.rows() == faces.rows() && m.vertices.rows() == training.front().vertices.rows() && m.faces == faces;
  };
  for (const auto& m : training) {
    if (!same(m)) throw ConnectivityMismatch("vertex PCA needs identical connectivity across meshes");
  }
  for (const auto& m : test) {
    if (!same(m)) throw ConnectivityMismatch("vertex PCA needs identical connectivity across meshes");
  }
  const auto dim = training.front().vertices.size();
  Matrix stacked(static_cast<Eigen::Index>(training.size()), dim);
  for (std::size_t i = 0; i < training.size(); ++i) {
    stacked.row(static_cast<Eigen::Index>(i)) = Eigen::Map<const Eigen::RowVectorXd>(training[i].vertices.data(), dim);
  }
  ssm::PcaBasis basis = ssm::fit_pca(stacked);
  if (max_modes && *max_modes < basis.modes()) {
    basis.components.conservativeResize(*max_modes, Eigen::NoChange);
    basis.stddevs.conservativeResize(*max_modes);
  }

  BaselineReport report;
  report.modes = basis.modes();
  for (std::size_t i = 0; i < test.size(); ++i) {
    const Vector x = Eigen::Map<const Vector>(test[i].vertices.data(), dim);
    const Vector recon = basis.reconstruct(basis.project(x));
    geometry::TriMesh fitted;
    fitted.vertices = Eigen::Map<const Points>(recon.data(), test[i].vertices.rows(), 3);
    fitted.faces = faces;
    report.assd.push_back(geometry::average_symmetric_surface_distance(fitted, test[i], assd_samples, derive_seed(seed, {i})));
  }
  if (!report.assd.empty()) {
    const Eigen::Map<const Vector> a(report.assd.data(), static_cast<Eigen::Index>(report.assd.size()));
    report.mean = a.mean();
    report.stddev = a.size() > 1 ? std::sqrt((a.array() - report.mean).square().sum() / static_cast<double>(a.size() - 1)) : 0.0;
  }
  return report;
}

void write_family(const std::filesystem::path& dir, const FamilySpec& spec, const std::vector<FamilyMember>& members) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  nlohmann::json manifest{{"spec", spec}, {"members", nlohmann::json::array()}};
  for (std::size_t i = 0; i < members.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "member_%03zu.obj", i);
    geometry::save_mesh(members[i].mesh, dir / name, geometry::MeshFormat::Obj);
    std::vector<double> params(members[i].params.data(), members[i].params.data() + members[i].params.size());
    manifest["members"].push_back({{"file", name}, {"params", params}});
  }
  write_file_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
}

}  // namespace flowssm::synth
