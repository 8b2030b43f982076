#pragma once

#include <cstdint>
#include <vector>

#include "flowssm/common/types.hpp"
#include "flowssm/geometry/mesh.hpp"

namespace flowssm::geometry {

enum class ChamferMode { Symmetric, OneSidedAToB };

/// Chamfer distance with unsquared Euclidean distances.
///   Symmetric:    1/(2|a|) sum_a min_b |x-y| + 1/(2|b|) sum_b min_a |x-y|
///   OneSidedAToB: 1/|a| sum_a min_b |x-y|
[[nodiscard]] double chamfer_distance(const PointSet& a, const PointSet& b, ChamferMode mode = ChamferMode::Symmetric);

class KdTree;
/// Same, reusing prebuilt trees over both point sets.
[[nodiscard]] double chamfer_distance(const KdTree& a, const KdTree& b, ChamferMode mode = ChamferMode::Symmetric);

/// Closest point to `p` on triangle (a, b, c); covers interior, edge and vertex regions.
[[nodiscard]] Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c);

struct Aabb {
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = Vec3::Constant(-std::numeric_limits<double>::infinity());

  void extend(const Vec3& p) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  void extend(const Aabb& o) {
    lo = lo.cwiseMin(o.lo);
    hi = hi.cwiseMax(o.hi);
  }
  [[nodiscard]] bool overlaps(const Aabb& o) const {
    return (lo.array() <= o.hi.array()).all() && (o.lo.array() <= hi.array()).all();
  }
  [[nodiscard]] double squared_distance(const Vec3& p) const {
    const Vec3 d = (lo - p).cwiseMax(Vec3::Zero()).cwiseMax(p - hi);
    return d.squaredNorm();
  }
};

/// Bounding-volume hierarchy over the faces of a mesh.
class TriangleBvh {
 public:
  struct Node {
    Aabb box;
    std::int32_t left = -1, right = -1;  // -1 on leaves
    std::int32_t begin = 0, end = 0;     // range into face_order()
    [[nodiscard]] bool leaf() const { return left < 0; }
  };

  explicit TriangleBvh(const TriMesh& mesh);

  struct Hit {
    Eigen::Index face = -1;
    Vec3 point = Vec3::Zero();
    double distance = 0.0;
  };
  [[nodiscard]] Hit closest_point(const Vec3& p) const;

  [[nodiscard]] const std::vector<Node>& nodes() const { return nodes_; }
  [[nodiscard]] const std::vector<std::int32_t>& face_order() const { return order_; }
  [[nodiscard]] const TriMesh& mesh() const { return *mesh_; }

 private:
  std::int32_t build(std::int32_t begin, std::int32_t end);

  const TriMesh* mesh_;
  std::vector<Aabb> face_boxes_;
  std::vector<Vec3> centroids_;
  std::vector<std::int32_t> order_;
  std::vector<Node> nodes_;
};

/// Mean distance from `samples` to the surface of `mesh`.
[[nodiscard]] double mean_point_to_surface(const Points& samples, const TriangleBvh& surface);

/// Average symmetric surface distance: area-uniform samples on each mesh, exact
/// point-to-triangle distance to the other, the two directional means averaged.
[[nodiscard]] double average_symmetric_surface_distance(const TriMesh& a, const TriMesh& b, Eigen::Index n_samples,
                                                        std::uint64_t seed = 0);

}  // namespace flowssm::geometry
