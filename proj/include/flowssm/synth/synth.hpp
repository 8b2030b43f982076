#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "flowssm/geometry/mesh.hpp"

namespace flowssm::synth {

enum class Family { Ellipsoid, BumpyEllipsoid, LobedBlob };

[[nodiscard]] const char* family_name(Family f);
[[nodiscard]] Family parse_family(const std::string& name);

/// Radial-graph shape family r(u) u over unit directions u.
///
///   ellipsoid:        r = 1 / |(ux/a, uy/b, uz/c)|
///   bumpy_ellipsoid:  r = ellipsoid * (1 + sum_j A_j exp(-|u - s_j|^2 / w_j^2)),
///                     bump sites s_j shared by the family
///   lobed_blob:       r = ellipsoid * (1 + sum_j A_j h_j(u; phase_j)) with
///                     phase-rotated harmonic lobes |h_j| <= 1
struct FamilySpec {
  Family family = Family::Ellipsoid;
  Vec3 axis_min{0.75, 0.55, 0.45};
  Vec3 axis_max{0.95, 0.75, 0.65};
  int bump_count = 4;
  double bump_amplitude_min = 0.0;
  double bump_amplitude_max = 0.15;
  double bump_width_min = 0.45;
  double bump_width_max = 0.6;
  double lobe_amplitude_min = 0.05;
  double lobe_amplitude_max = 0.15;
  /// Icosphere subdivision level; sets the nominal vertex count.
  int subdivisions = 4;
  /// Independent random triangulation per member with vertex count within +-10%.
  /// Without jitter every member shares the icosphere connectivity.
  bool jitter = true;
  std::uint64_t seed = 0;

  /// Throws InvalidArgument when the ranges are empty or the radius could reach zero.
  void validate() const;
};

void to_json(nlohmann::json& j, const FamilySpec& s);
void from_json(const nlohmann::json& j, FamilySpec& s);

struct FamilyMember {
  geometry::TriMesh mesh;
  Vector params;  // axes, then family-specific detail parameters
};

[[nodiscard]] std::vector<FamilyMember> generate_family(const FamilySpec& spec, int n);

/// Members first..first+n-1 of the family (same members as a larger generate_family call).
[[nodiscard]] std::vector<FamilyMember> generate_family(const FamilySpec& spec, int first, int n);

/// Shared template: the mid-range ellipsoid on the icosphere.
[[nodiscard]] geometry::TriMesh family_template(const FamilySpec& spec);

/// Radius of member `params` in unit direction `u`.
[[nodiscard]] double family_radius(const FamilySpec& spec, const Vector& params, const Vec3& u);

[[nodiscard]] geometry::TriMesh icosphere(int subdivisions);

/// Convex hull of points on the unit sphere, faces oriented outwards.
[[nodiscard]] Faces spherical_hull(const Points& points);

/// Mean over members of the smallest symmetric Chamfer distance to another member.
[[nodiscard]] double family_nearest_neighbor_spread(const std::vector<geometry::TriMesh>& members,
                                                    Eigen::Index n_points, std::uint64_t seed);

struct BaselineReport {
  std::vector<double> assd;  // per test shape
  double mean = 0.0;
  double stddev = 0.0;
  Eigen::Index modes = 0;
};

/// Point distribution model: PCA over stacked vertex coordinates, test shapes
/// reconstructed by projection onto the first `max_modes` modes (all when unset).
/// Throws ConnectivityMismatch unless every mesh has the same faces.
[[nodiscard]] BaselineReport vertex_pca_baseline(const std::vector<geometry::TriMesh>& training,
                                                 const std::vector<geometry::TriMesh>& test,
                                                 std::optional<Eigen::Index> max_modes, Eigen::Index assd_samples,
                                                 std::uint64_t seed);

/// member_000.obj ... plus manifest.json with the spec and ground-truth parameters.
void write_family(const std::filesystem::path& dir, const FamilySpec& spec, const std::vector<FamilyMember>& members);

}  // namespace flowssm::synth
