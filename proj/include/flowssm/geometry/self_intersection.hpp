#pragma once

#include <cstdint>

#include "flowssm/geometry/mesh.hpp"

namespace flowssm::geometry {

struct SelfIntersectionReport {
  bool is_self_intersecting = false;
  std::int64_t intersecting_face_pairs = 0;
};

/// Triangle-triangle test; touching counts as intersecting.
[[nodiscard]] bool triangles_intersect(const Vec3& a0, const Vec3& a1, const Vec3& a2, const Vec3& b0, const Vec3& b1,
                                       const Vec3& b2);

/// Tests every pair of faces that share no vertex, using a BVH to skip pairs
/// with disjoint bounding boxes.
[[nodiscard]] SelfIntersectionReport count_self_intersections(const TriMesh& mesh);

/// All-pairs reference implementation of count_self_intersections.
[[nodiscard]] SelfIntersectionReport count_self_intersections_exhaustive(const TriMesh& mesh);

}  // namespace flowssm::geometry
