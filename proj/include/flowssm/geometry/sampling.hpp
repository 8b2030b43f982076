#pragma once

#include <cstdint>

#include "flowssm/geometry/mesh.hpp"

namespace flowssm::geometry {

/// Area-weighted face choice, uniform barycentric position within the face.
/// Deterministic given `seed`.
[[nodiscard]] PointSet sample_surface(const TriMesh& mesh, Eigen::Index n, std::uint64_t seed);

/// Greedy farthest-point sampling over a dense surface sample. The first pick
/// is the dense sample nearest the sample centroid.
[[nodiscard]] PointSet farthest_point_sample(const TriMesh& mesh, Eigen::Index m, std::uint64_t seed,
                                             Eigen::Index dense_count = 0);

/// Farthest-point selection on an explicit candidate set; returns candidate indices.
[[nodiscard]] std::vector<Eigen::Index> farthest_point_indices(const Points& candidates, Eigen::Index m);

}  // namespace flowssm::geometry
