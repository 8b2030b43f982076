#pragma once

#include <optional>
#include <vector>

#include "flowssm/geometry/mesh.hpp"

namespace flowssm::geometry {

struct IcpResult {
  RigidTransform transform;  // maps source coordinates onto the target
  TriMesh aligned;           // transformed source
  int iterations = 0;
  double rms = 0.0;
  bool converged = false;    // false: max_iters reached (non-fatal warning)
};

/// Point-to-point ICP with Kabsch/SVD updates and no scaling. Correspondences are
/// closest points on the target surface until the RMS change drops below 1e-6,
/// then nearest target vertices until it drops below `tol`. Consecutive aligned
/// surface steps are extrapolated by line search. `max_iters` covers both phases.
[[nodiscard]] IcpResult icp_align(const TriMesh& source, const TriMesh& target, int max_iters = 300,
                                  double tol = 1e-10);

/// Least-squares rigid transform mapping `from` onto `to` (paired rows).
[[nodiscard]] RigidTransform best_fit_rigid(const Points& from, const Points& to);

struct Normalization {
  std::vector<TriMesh> meshes;
  double scale = 1.0;           // normalized = (x - center) * scale
  std::vector<Vec3> centers;    // one per input mesh

  /// Maps a length in normalized units back to input units.
  [[nodiscard]] double to_model_units(double normalized_length) const { return normalized_length / scale; }
};

/// Centres every mesh on its bounding-box centre and applies one shared isotropic
/// scale = 1 / half of the largest bounding-box extent (or 1 / reference_half_extent).
[[nodiscard]] Normalization normalize_to_unit_box(const std::vector<TriMesh>& meshes,
                                                  std::optional<double> reference_half_extent = std::nullopt);

}  // namespace flowssm::geometry
