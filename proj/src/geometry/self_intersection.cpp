#include "flowssm/geometry/self_intersection.hpp"

#include <array>

#include "flowssm/geometry/distance.hpp"

namespace flowssm::geometry {

namespace {

double orient(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d) {
  return (b - a).dot((c - a).cross(d - a));
}

int sign(double v) { return (v > 0.0) - (v < 0.0); }

using Vec2 = Eigen::Vector2d;

double orient2(const Vec2& a, const Vec2& b, const Vec2& c) {
  return (b.x() - a.x()) * (c.y() - a.y()) - (b.y() - a.y()) * (c.x() - a.x());
}

bool on_segment2(const Vec2& p, const Vec2& q, const Vec2& r) {
  return r.x() >= std::min(p.x(), q.x()) && r.x() <= std::max(p.x(), q.x()) && r.y() >= std::min(p.y(), q.y()) &&
         r.y() <= std::max(p.y(), q.y());
}

bool segments_intersect2(const Vec2& p1, const Vec2& p2, const Vec2& q1, const Vec2& q2) {
  const int d1 = sign(orient2(q1, q2, p1)), d2 = sign(orient2(q1, q2, p2));
  const int d3 = sign(orient2(p1, p2, q1)), d4 = sign(orient2(p1, p2, q2));
  if (d1 * d2 < 0 && d3 * d4 < 0) return true;
  if (d1 == 0 && on_segment2(q1, q2, p1)) return true;
  if (d2 == 0 && on_segment2(q1, q2, p2)) return true;
  if (d3 == 0 && on_segment2(p1, p2, q1)) return true;
  if (d4 == 0 && on_segment2(p1, p2, q2)) return true;
  return false;
}

bool point_in_triangle2(const Vec2& p, const Vec2& a, const Vec2& b, const Vec2& c) {
  const double s1 = orient2(a, b, p), s2 = orient2(b, c, p), s3 = orient2(c, a, p);
  return (s1 >= 0 && s2 >= 0 && s3 >= 0) || (s1 <= 0 && s2 <= 0 && s3 <= 0);
}

// Drops the coordinate along the dominant normal axis.
std::array<Vec2, 3> project(const std::array<Vec3, 3>& t, int drop) {
  std::array<Vec2, 3> out;
  const int i0 = drop == 0 ? 1 : 0;
  const int i1 = drop == 2 ? 1 : 2;
  for (std::size_t k = 0; k < 3; ++k) out[k] = Vec2(t[k][i0], t[k][i1]);
  return out;
}

bool coplanar_intersect(const std::array<Vec3, 3>& a, const std::array<Vec3, 3>& b) {
  const Vec3 n = (a[1] - a[0]).cross(a[2] - a[0]);
  int drop = 0;
  n.cwiseAbs().maxCoeff(&drop);
  const auto pa = project(a, drop), pb = project(b, drop);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      if (segments_intersect2(pa[i], pa[(i + 1) % 3], pb[j], pb[(j + 1) % 3])) return true;
    }
  }
  return point_in_triangle2(pa[0], pb[0], pb[1], pb[2]) || point_in_triangle2(pb[0], pa[0], pa[1], pa[2]);
}

bool segment_hits_triangle(const Vec3& p, const Vec3& q, const std::array<Vec3, 3>& t) {
  const int sp = sign(orient(t[0], t[1], t[2], p));
  const int sq = sign(orient(t[0], t[1], t[2], q));
  if (sp * sq > 0) return false;
  if (sp == 0 && sq == 0) {
    const Vec3 n = (t[1] - t[0]).cross(t[2] - t[0]);
    int drop = 0;
    n.cwiseAbs().maxCoeff(&drop);
    const auto pt = project(t, drop);
    const auto ps = project({p, q, q}, drop);
    for (std::size_t j = 0; j < 3; ++j) {
      if (segments_intersect2(ps[0], ps[1], pt[j], pt[(j + 1) % 3])) return true;
    }
    return point_in_triangle2(ps[0], pt[0], pt[1], pt[2]);
  }
  const int s1 = sign(orient(p, q, t[0], t[1]));
  const int s2 = sign(orient(p, q, t[1], t[2]));
  const int s3 = sign(orient(p, q, t[2], t[0]));
  return (s1 >= 0 && s2 >= 0 && s3 >= 0) || (s1 <= 0 && s2 <= 0 && s3 <= 0);
}

bool share_vertex(const Faces& faces, Eigen::Index f, Eigen::Index g) {
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      if (faces(f, i) == faces(g, j)) return true;
    }
  }
  return false;
}

bool face_pair_intersects(const TriMesh& mesh, Eigen::Index f, Eigen::Index g) {
  return triangles_intersect(mesh.vertex(mesh.faces(f, 0)), mesh.vertex(mesh.faces(f, 1)), mesh.vertex(mesh.faces(f, 2)),
                             mesh.vertex(mesh.faces(g, 0)), mesh.vertex(mesh.faces(g, 1)), mesh.vertex(mesh.faces(g, 2)));
}

class PairCollector {
 public:
  PairCollector(const TriMesh& mesh, const TriangleBvh& bvh) : mesh_(mesh), bvh_(bvh) {}

  void self(std::int32_t id) {
    const auto& n = bvh_.nodes()[static_cast<std::size_t>(id)];
    if (n.leaf()) {
      for (auto i = n.begin; i < n.end; ++i) {
        for (auto j = i + 1; j < n.end; ++j) test(face(i), face(j));
      }
      return;
    }
    self(n.left);
    self(n.right);
    cross(n.left, n.right);
  }

  void cross(std::int32_t a, std::int32_t b) {
    const auto& na = bvh_.nodes()[static_cast<std::size_t>(a)];
    const auto& nb = bvh_.nodes()[static_cast<std::size_t>(b)];
    if (!na.box.overlaps(nb.box)) return;
    if (na.leaf() && nb.leaf()) {
      for (auto i = na.begin; i < na.end; ++i) {
        for (auto j = nb.begin; j < nb.end; ++j) test(face(i), face(j));
      }
      return;
    }
    if (nb.leaf() || (!na.leaf() && na.end - na.begin >= nb.end - nb.begin)) {
      cross(na.left, b);
      cross(na.right, b);
    } else {
      cross(a, nb.left);
      cross(a, nb.right);
    }
  }

  std::int64_t count = 0;

 private:
  [[nodiscard]] Eigen::Index face(std::int32_t slot) const {
    return bvh_.face_order()[static_cast<std::size_t>(slot)];
  }

  void test(Eigen::Index f, Eigen::Index g) {
    if (share_vertex(mesh_.faces, f, g)) return;
    if (face_pair_intersects(mesh_, f, g)) ++count;
  }

  const TriMesh& mesh_;
  const TriangleBvh& bvh_;
};

}  // namespace

bool triangles_intersect(const Vec3& a0, const Vec3& a1, const Vec3& a2, const Vec3& b0, const Vec3& b1,
                         const Vec3& b2) {
  const std::array<Vec3, 3> a{a0, a1, a2}, b{b0, b1, b2};
  const int sb0 = sign(orient(a0, a1, a2, b0)), sb1 = sign(orient(a0, a1, a2, b1)), sb2 = sign(orient(a0, a1, a2, b2));
  if ((sb0 > 0 && sb1 > 0 && sb2 > 0) || (sb0 < 0 && sb1 < 0 && sb2 < 0)) return false;
  const int sa0 = sign(orient(b0, b1, b2, a0)), sa1 = sign(orient(b0, b1, b2, a1)), sa2 = sign(orient(b0, b1, b2, a2));
  if ((sa0 > 0 && sa1 > 0 && sa2 > 0) || (sa0 < 0 && sa1 < 0 && sa2 < 0)) return false;
  if (sb0 == 0 && sb1 == 0 && sb2 == 0) return coplanar_intersect(a, b);
  // Non-coplanar: the intersection segment ends on an edge of one of the triangles.
  for (std::size_t i = 0; i < 3; ++i) {
    if (segment_hits_triangle(a[i], a[(i + 1) % 3], b)) return true;
    if (segment_hits_triangle(b[i], b[(i + 1) % 3], a)) return true;
  }
  return false;
}

SelfIntersectionReport count_self_intersections(const TriMesh& mesh) {
  mesh.validate();
  const TriangleBvh bvh(mesh);
  PairCollector collector(mesh, bvh);
  collector.self(0);
  return {collector.count > 0, collector.count};
}

SelfIntersectionReport count_self_intersections_exhaustive(const TriMesh& mesh) {
  mesh.validate();
  std::int64_t count = 0;
  for (Eigen::Index f = 0; f < mesh.face_count(); ++f) {
    for (Eigen::Index g = f + 1; g < mesh.face_count(); ++g) {
      if (!share_vertex(mesh.faces, f, g) && face_pair_intersects(mesh, f, g)) ++count;
    }
  }
  return {count > 0, count};
}

}  // namespace flowssm::geometry
