#include "flowssm/geometry/distance.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

#include "flowssm/common/error.hpp"
#include "flowssm/geometry/kdtree.hpp"
#include "flowssm/geometry/sampling.hpp"

namespace flowssm::geometry {

namespace {

double mean_nearest(const Points& from, const KdTree& to) {
  double sum = 0.0;
  for (Eigen::Index i = 0; i < from.rows(); ++i) sum += to.nearest(from.row(i).transpose()).distance;
  return sum / static_cast<double>(from.rows());
}

}  // namespace

double chamfer_distance(const PointSet& a, const PointSet& b, ChamferMode mode) {
  a.validate();
  b.validate();
  const KdTree tree_b(b.points);
  const double a_to_b = mean_nearest(a.points, tree_b);
  if (mode == ChamferMode::OneSidedAToB) return a_to_b;
  const KdTree tree_a(a.points);
  return 0.5 * a_to_b + 0.5 * mean_nearest(b.points, tree_a);
}

double chamfer_distance(const KdTree& a, const KdTree& b, ChamferMode mode) {
  if (a.size() == 0 || b.size() == 0) throw ShapeMismatch("chamfer distance of an empty point set");
  const double a_to_b = mean_nearest(a.points(), b);
  if (mode == ChamferMode::OneSidedAToB) return a_to_b;
  return 0.5 * a_to_b + 0.5 * mean_nearest(b.points(), a);
}

// Region classification after Ericson, "Real-Time Collision Detection", 5.1.5.
Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 ab = b - a, ac = c - a, ap = p - a;
  const double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0.0 && d2 <= 0.0) return a;

  const Vec3 bp = p - b;
  const double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0.0 && d4 <= d3) return b;

  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) return a + (d1 / (d1 - d3)) * ab;

  const Vec3 cp = p - c;
  const double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0.0 && d5 <= d6) return c;

  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) return a + (d2 / (d2 - d6)) * ac;

  const double va = d3 * d6 - d5 * d4;
  if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {
    return b + ((d4 - d3) / ((d4 - d3) + (d5 - d6))) * (c - b);
  }

  const double denom = 1.0 / (va + vb + vc);
  return a + ab * (vb * denom) + ac * (vc * denom);
}

TriangleBvh::TriangleBvh(const TriMesh& mesh) : mesh_(&mesh) {
  const auto nf = mesh.face_count();
  if (nf == 0) throw TopologyError("cannot build a BVH over a mesh without faces");
  face_boxes_.resize(static_cast<std::size_t>(nf));
  centroids_.resize(static_cast<std::size_t>(nf));
  for (Eigen::Index f = 0; f < nf; ++f) {
    Aabb box;
    Vec3 centroid = Vec3::Zero();
    for (int k = 0; k < 3; ++k) {
      const Vec3 v = mesh.vertex(mesh.faces(f, k));
      box.extend(v);
      centroid += v / 3.0;
    }
    face_boxes_[static_cast<std::size_t>(f)] = box;
    centroids_[static_cast<std::size_t>(f)] = centroid;
  }
  order_.resize(static_cast<std::size_t>(nf));
  std::iota(order_.begin(), order_.end(), 0);
  nodes_.reserve(static_cast<std::size_t>(2 * nf));
  build(0, static_cast<std::int32_t>(nf));
}

std::int32_t TriangleBvh::build(std::int32_t begin, std::int32_t end) {
  const auto id = static_cast<std::int32_t>(nodes_.size());
  nodes_.push_back({});
  Aabb box;
  Aabb centroid_box;
  for (auto i = begin; i < end; ++i) {
    const auto f = static_cast<std::size_t>(order_[static_cast<std::size_t>(i)]);
    box.extend(face_boxes_[f]);
    centroid_box.extend(centroids_[f]);
  }
  nodes_[static_cast<std::size_t>(id)].box = box;
  nodes_[static_cast<std::size_t>(id)].begin = begin;
  nodes_[static_cast<std::size_t>(id)].end = end;
  if (end - begin <= 4) return id;

  int axis = 0;
  (centroid_box.hi - centroid_box.lo).maxCoeff(&axis);
  const auto mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](std::int32_t a, std::int32_t b) {
                     const double ca = centroids_[static_cast<std::size_t>(a)][axis];
                     const double cb = centroids_[static_cast<std::size_t>(b)][axis];
                     return ca < cb || (ca == cb && a < b);
                   });
  const auto left = build(begin, mid);
  const auto right = build(mid, end);
  nodes_[static_cast<std::size_t>(id)].left = left;
  nodes_[static_cast<std::size_t>(id)].right = right;
  return id;
}

TriangleBvh::Hit TriangleBvh::closest_point(const Vec3& p) const {
  Hit best;
  double best_d2 = std::numeric_limits<double>::infinity();
  std::vector<std::int32_t> stack{0};
  stack.reserve(64);
  while (!stack.empty()) {
    const auto& node = nodes_[static_cast<std::size_t>(stack.back())];
    stack.pop_back();
    if (node.box.squared_distance(p) > best_d2) continue;
    if (node.leaf()) {
      for (auto i = node.begin; i < node.end; ++i) {
        const auto f = order_[static_cast<std::size_t>(i)];
        const Vec3 q = closest_point_on_triangle(p, mesh_->vertex(mesh_->faces(f, 0)), mesh_->vertex(mesh_->faces(f, 1)),
                                                 mesh_->vertex(mesh_->faces(f, 2)));
        const double d2 = (q - p).squaredNorm();
        if (d2 < best_d2 || (d2 == best_d2 && f < best.face)) {
          best_d2 = d2;
          best.face = f;
          best.point = q;
        }
      }
      continue;
    }
    const auto& l = nodes_[static_cast<std::size_t>(node.left)];
    const auto& r = nodes_[static_cast<std::size_t>(node.right)];
    // Push the farther child first so the nearer one is explored first.
    if (l.box.squared_distance(p) <= r.box.squared_distance(p)) {
      stack.push_back(node.right);
      stack.push_back(node.left);
    } else {
      stack.push_back(node.left);
      stack.push_back(node.right);
    }
  }
  best.distance = std::sqrt(best_d2);
  return best;
}

double mean_point_to_surface(const Points& samples, const TriangleBvh& surface) {
  double sum = 0.0;
  for (Eigen::Index i = 0; i < samples.rows(); ++i) sum += surface.closest_point(samples.row(i).transpose()).distance;
  return sum / static_cast<double>(samples.rows());
}

double average_symmetric_surface_distance(const TriMesh& a, const TriMesh& b, Eigen::Index n_samples,
                                          std::uint64_t seed) {
  a.validate();
  b.validate();
  const TriangleBvh bvh_a(a), bvh_b(b);
  const auto sa = sample_surface(a, n_samples, seed);
  const auto sb = sample_surface(b, n_samples, seed ^ 0x9e3779b97f4a7c15ULL);
  return 0.5 * (mean_point_to_surface(sa.points, bvh_b) + mean_point_to_surface(sb.points, bvh_a));
}

}  // namespace flowssm::geometry
