#include "flowssm/geometry/kdtree.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

#include "flowssm/common/error.hpp"

namespace flowssm::geometry {

namespace {
constexpr std::int32_t kLeafSize = 8;
}

KdTree::KdTree(const Points& reference) : points_(reference) {
  if (points_.rows() == 0) throw ShapeMismatch("KdTree reference set is empty");
  order_.resize(static_cast<std::size_t>(points_.rows()));
  std::iota(order_.begin(), order_.end(), 0);
  nodes_.reserve(static_cast<std::size_t>(2 * points_.rows() / kLeafSize + 2));
  build(0, static_cast<std::int32_t>(order_.size()), 0);
}

std::int32_t KdTree::build(std::int32_t begin, std::int32_t end, int depth) {
  const auto id = static_cast<std::int32_t>(nodes_.size());
  nodes_.push_back({});
  nodes_[static_cast<std::size_t>(id)].begin = begin;
  nodes_[static_cast<std::size_t>(id)].end = end;
  if (end - begin <= kLeafSize) return id;

  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = -lo;
  for (auto i = begin; i < end; ++i) {
    const Vec3 p = points_.row(order_[static_cast<std::size_t>(i)]).transpose();
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  int axis = 0;
  (hi - lo).maxCoeff(&axis);
  (void)depth;
  const auto mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](std::int32_t a, std::int32_t b) {
                     const double pa = points_(a, axis), pb = points_(b, axis);
                     return pa < pb || (pa == pb && a < b);
                   });
  const double split = points_(order_[static_cast<std::size_t>(mid)], axis);
  const auto left = build(begin, mid, depth + 1);
  const auto right = build(mid, end, depth + 1);
  auto& node = nodes_[static_cast<std::size_t>(id)];
  node.axis = axis;
  node.split = split;
  node.left = left;
  node.right = right;
  return id;
}

void KdTree::search(std::int32_t id, const Vec3& q, Eigen::Index& best, double& best_d2) const {
  const auto& node = nodes_[static_cast<std::size_t>(id)];
  if (node.axis < 0) {
    for (auto i = node.begin; i < node.end; ++i) {
      const auto idx = order_[static_cast<std::size_t>(i)];
      const double d2 = (points_.row(idx).transpose() - q).squaredNorm();
      if (d2 < best_d2 || (d2 == best_d2 && idx < best)) {
        best_d2 = d2;
        best = idx;
      }
    }
    return;
  }
  // Left subtree holds coordinates <= split, right holds >= split.
  const double diff = q[node.axis] - node.split;
  const auto near = diff <= 0.0 ? node.left : node.right;
  const auto far = diff <= 0.0 ? node.right : node.left;
  search(near, q, best, best_d2);
  if (diff * diff <= best_d2) search(far, q, best, best_d2);
}

Neighbor KdTree::nearest(const Vec3& query) const {
  Eigen::Index best = std::numeric_limits<Eigen::Index>::max();
  double best_d2 = std::numeric_limits<double>::infinity();
  search(0, query, best, best_d2);
  return {best, std::sqrt(best_d2)};
}

std::vector<Neighbor> nearest_neighbor(const PointSet& query, const PointSet& reference) {
  const KdTree tree(reference.points);
  std::vector<Neighbor> out(static_cast<std::size_t>(query.size()));
  for (Eigen::Index i = 0; i < query.size(); ++i) {
    out[static_cast<std::size_t>(i)] = tree.nearest(query.points.row(i).transpose());
  }
  return out;
}

}  // namespace flowssm::geometry
