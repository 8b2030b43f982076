#include <doctest.h>

#include <cmath>

#include "flowssm/common/error.hpp"
#include "flowssm/geometry/self_intersection.hpp"
#include "flowssm/synth/synth.hpp"
#include "helpers.hpp"

using namespace flowssm;
using namespace flowssm::synth;

TEST_CASE("unit axes give the unit sphere") {
  FamilySpec spec;
  spec.axis_min = spec.axis_max = Vec3(1, 1, 1);
  spec.subdivisions = 3;
  for (bool jitter : {false, true}) {
    spec.jitter = jitter;
    const auto m = generate_family(spec, 1)[0].mesh;
    CHECK((m.vertices.rowwise().norm().array() - 1.0).abs().maxCoeff() < 1e-3);
  }
}

TEST_CASE("zero bump amplitude reproduces the ellipsoid family") {
  FamilySpec plain;
  plain.subdivisions = 3;
  plain.seed = 4;
  FamilySpec bumpy = plain;
  bumpy.family = Family::BumpyEllipsoid;
  bumpy.bump_amplitude_min = bumpy.bump_amplitude_max = 0.0;
  const auto a = generate_family(plain, 3), b = generate_family(bumpy, 3);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].mesh.faces == b[i].mesh.faces);
    CHECK((a[i].mesh.vertices - b[i].mesh.vertices).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("generated members are valid surfaces without self-intersections") {
  for (auto fam : {Family::Ellipsoid, Family::BumpyEllipsoid, Family::LobedBlob}) {
    FamilySpec spec;
    spec.family = fam;
    spec.subdivisions = 3;
    spec.seed = 2;
    for (const auto& m : generate_family(spec, 4)) {
      CHECK_NOTHROW(m.mesh.validate());
      CHECK_FALSE(geometry::count_self_intersections(m.mesh).is_self_intersecting);
    }
    CHECK_FALSE(geometry::count_self_intersections(family_template(spec)).is_self_intersecting);
  }
}

TEST_CASE("jittered triangulations vary within ten percent") {
  FamilySpec spec;
  spec.subdivisions = 3;
  const auto base = icosphere(3).vertex_count();
  const auto members = generate_family(spec, 6);
  bool differs = false;
  for (const auto& m : members) {
    CHECK(std::abs(static_cast<double>(m.mesh.vertex_count()) / static_cast<double>(base) - 1.0) <= 0.1 + 1e-9);
    differs |= m.mesh.vertex_count() != members[0].mesh.vertex_count();
  }
  CHECK(differs);
}

TEST_CASE("vertices lie on the ground-truth radial surface") {
  FamilySpec spec;
  spec.family = Family::LobedBlob;
  spec.subdivisions = 3;
  const auto m = generate_family(spec, 1)[0];
  for (Eigen::Index i = 0; i < m.mesh.vertex_count(); i += 17) {
    const Vec3 v = m.mesh.vertex(i);
    CHECK(std::abs(v.norm() - family_radius(spec, m.params, v.normalized())) < 1e-12);
  }
}

TEST_CASE("families are reproducible and sub-ranges agree") {
  FamilySpec spec;
  spec.family = Family::BumpyEllipsoid;
  spec.subdivisions = 2;
  spec.seed = 9;
  const auto a = generate_family(spec, 5), b = generate_family(spec, 5);
  const auto tail = generate_family(spec, 3, 2);
  for (int i = 0; i < 5; ++i) {
    CHECK(a[static_cast<std::size_t>(i)].mesh.vertices == b[static_cast<std::size_t>(i)].mesh.vertices);
  }
  CHECK(tail[0].mesh.vertices == a[3].mesh.vertices);
  CHECK(tail[1].params == a[4].params);
}

TEST_CASE("spherical hull triangulates points on the sphere") {
  const Points p = icosphere(2).vertices;
  const Faces f = spherical_hull(p);
  CHECK(f.rows() == 2 * p.rows() - 4);
  geometry::TriMesh m{p, f};
  CHECK_NOTHROW(m.validate());
  CHECK(m.total_area() > 0.95 * 4 * 3.14159);
}

TEST_CASE("nearest-neighbour spread") {
  FamilySpec spec;
  spec.subdivisions = 3;
  const auto one = generate_family(spec, 1)[0].mesh;
  CHECK(family_nearest_neighbor_spread({one, one}, 3000, 1) < 0.03);

  double previous = 0.0;
  for (double half_width : {0.02, 0.06, 0.12}) {
    FamilySpec s = spec;
    s.axis_min = Vec3(0.75, 0.65, 0.55) - Vec3::Constant(half_width);
    s.axis_max = Vec3(0.75, 0.65, 0.55) + Vec3::Constant(half_width);
    std::vector<geometry::TriMesh> meshes;
    for (auto& m : generate_family(s, 6)) meshes.push_back(std::move(m.mesh));
    const double spread = family_nearest_neighbor_spread(meshes, 3000, 1);
    CHECK(spread > previous);
    previous = spread;
  }
}

TEST_CASE("vertex PCA baseline") {
  FamilySpec spec;
  spec.subdivisions = 3;
  spec.jitter = false;
  std::vector<geometry::TriMesh> train, test;
  for (auto& m : generate_family(spec, 0, 8)) train.push_back(std::move(m.mesh));
  for (auto& m : generate_family(spec, 8, 3)) test.push_back(std::move(m.mesh));
  const auto r = vertex_pca_baseline(train, test, std::nullopt, 3000, 1);
  CHECK(r.modes <= 7);
  CHECK(r.assd.size() == 3);
  CHECK(r.mean < 2e-3);
  CHECK(vertex_pca_baseline(train, test, 1, 3000, 1).modes == 1);

  spec.jitter = true;
  std::vector<geometry::TriMesh> jittered;
  for (auto& m : generate_family(spec, 2)) jittered.push_back(std::move(m.mesh));
  CHECK_THROWS_AS((void)vertex_pca_baseline(jittered, test, std::nullopt, 100, 1), ConnectivityMismatch);
}

TEST_CASE("family spec validation and JSON") {
  FamilySpec spec;
  spec.axis_min = Vec3(1, 1, 1);
  spec.axis_max = Vec3(0.5, 1, 1);
  CHECK_THROWS_AS(spec.validate(), InvalidArgument);
  FamilySpec lobes;
  lobes.lobe_amplitude_max = 0.5;
  CHECK_THROWS_AS(lobes.validate(), InvalidArgument);

  FamilySpec s;
  s.family = Family::LobedBlob;
  s.seed = 42;
  const nlohmann::json j = s;
  const auto back = j.get<FamilySpec>();
  CHECK(back.family == Family::LobedBlob);
  CHECK(back.seed == 42);
  nlohmann::json bad = j;
  bad["colour"] = "red";
  CHECK_THROWS((void)bad.get<FamilySpec>());
  CHECK_THROWS_AS((void)parse_family("torus"), ConfigError);
}
