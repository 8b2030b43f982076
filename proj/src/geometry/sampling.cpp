#include "flowssm/geometry/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "flowssm/common/error.hpp"

namespace flowssm::geometry {

PointSet sample_surface(const TriMesh& mesh, Eigen::Index n, std::uint64_t seed) {
  if (n < 1) throw InvalidArgument("sample_surface needs n >= 1");
  std::vector<double> cumulative(static_cast<std::size_t>(mesh.face_count()));
  double total = 0.0;
  for (Eigen::Index f = 0; f < mesh.face_count(); ++f) {
    total += mesh.face_area(f);
    cumulative[static_cast<std::size_t>(f)] = total;
  }
  if (!(total > 0.0)) throw TopologyError("cannot sample a mesh with zero area");

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Points out(n, 3);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double u = unit(rng) * total;
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
    if (it == cumulative.end()) --it;
    const auto f = static_cast<Eigen::Index>(it - cumulative.begin());
    const double s = std::sqrt(unit(rng));
    const double r = unit(rng);
    const Vec3 a = mesh.vertex(mesh.faces(f, 0));
    const Vec3 b = mesh.vertex(mesh.faces(f, 1));
    const Vec3 c = mesh.vertex(mesh.faces(f, 2));
    out.row(i) = ((1.0 - s) * a + s * (1.0 - r) * b + s * r * c).transpose();
  }
  return PointSet(std::move(out), PointSource::MeshSampled);
}

std::vector<Eigen::Index> farthest_point_indices(const Points& candidates, Eigen::Index m) {
  if (m < 1) throw InvalidArgument("farthest point sampling needs m >= 1");
  const auto n = candidates.rows();
  if (n == 0) throw ShapeMismatch("no candidates for farthest point sampling");
  m = std::min(m, n);

  const Vec3 centroid = candidates.colwise().mean().transpose();
  Eigen::Index first = 0;
  double best = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < n; ++i) {
    const double d = (candidates.row(i).transpose() - centroid).squaredNorm();
    if (d < best) {
      best = d;
      first = i;
    }
  }

  std::vector<Eigen::Index> picked{first};
  Vector min_d2(n);
  for (Eigen::Index i = 0; i < n; ++i) min_d2[i] = (candidates.row(i) - candidates.row(first)).squaredNorm();
  while (static_cast<Eigen::Index>(picked.size()) < m) {
    Eigen::Index next = 0;
    min_d2.maxCoeff(&next);  // first maximal index
    picked.push_back(next);
    for (Eigen::Index i = 0; i < n; ++i) {
      min_d2[i] = std::min(min_d2[i], (candidates.row(i) - candidates.row(next)).squaredNorm());
    }
  }
  return picked;
}

PointSet farthest_point_sample(const TriMesh& mesh, Eigen::Index m, std::uint64_t seed, Eigen::Index dense_count) {
  if (m < 1) throw InvalidArgument("farthest point sampling needs m >= 1");
  if (dense_count <= 0) dense_count = std::max<Eigen::Index>(20000, 40 * m);
  const PointSet dense = sample_surface(mesh, dense_count, seed);
  const auto idx = farthest_point_indices(dense.points, m);
  Points out(static_cast<Eigen::Index>(idx.size()), 3);
  for (std::size_t k = 0; k < idx.size(); ++k) out.row(static_cast<Eigen::Index>(k)) = dense.points.row(idx[k]);
  return PointSet(std::move(out), PointSource::MeshSampled);
}

}  // namespace flowssm::geometry
