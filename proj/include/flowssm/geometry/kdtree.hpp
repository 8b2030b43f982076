#pragma once

#include <vector>

#include "flowssm/common/types.hpp"
#include "flowssm/geometry/mesh.hpp"

namespace flowssm::geometry {

struct Neighbor {
  Eigen::Index index = -1;
  double distance = 0.0;
};

/// Exact 3D nearest-neighbour search. Ties resolve to the smallest reference
/// index so results do not depend on tree layout.
class KdTree {
 public:
  KdTree() = default;
  explicit KdTree(const Points& reference);

  [[nodiscard]] Neighbor nearest(const Vec3& query) const;
  [[nodiscard]] Eigen::Index size() const { return points_.rows(); }
  [[nodiscard]] const Points& points() const { return points_; }

 private:
  struct Node {
    int axis = -1;  // -1 for leaves
    double split = 0.0;
    std::int32_t left = -1, right = -1;
    std::int32_t begin = 0, end = 0;
  };

  std::int32_t build(std::int32_t begin, std::int32_t end, int depth);
  void search(std::int32_t node, const Vec3& q, Eigen::Index& best, double& best_d2) const;

  Points points_;
  std::vector<std::int32_t> order_;
  std::vector<Node> nodes_;
};

/// For each query point, the exact nearest reference point.
[[nodiscard]] std::vector<Neighbor> nearest_neighbor(const PointSet& query, const PointSet& reference);

}  // namespace flowssm::geometry
