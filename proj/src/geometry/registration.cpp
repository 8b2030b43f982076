#include "flowssm/geometry/registration.hpp"

#include <Eigen/Geometry>
#include <Eigen/LU>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>

#include "flowssm/common/error.hpp"
#include "flowssm/geometry/distance.hpp"
#include "flowssm/geometry/kdtree.hpp"

namespace flowssm::geometry {

namespace {
constexpr double kCoarseTolerance = 1e-6;
constexpr double kAlignedCosine = 0.98480775301220802;  // cos 10 degrees
constexpr int kMaxExtrapolationDoublings = 8;
}  // namespace

RigidTransform best_fit_rigid(const Points& from, const Points& to) {
  if (from.rows() != to.rows() || from.rows() == 0) throw ShapeMismatch("best_fit_rigid needs paired, non-empty sets");
  const Vec3 cf = from.colwise().mean().transpose();
  const Vec3 ct = to.colwise().mean().transpose();
  Mat3 h = Mat3::Zero();
  for (Eigen::Index i = 0; i < from.rows(); ++i) {
    h += (from.row(i).transpose() - cf) * (to.row(i).transpose() - ct).transpose();
  }
  Eigen::JacobiSVD<Mat3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 d = Mat3::Identity();
  if ((svd.matrixV() * svd.matrixU().transpose()).determinant() < 0.0) d(2, 2) = -1.0;
  RigidTransform t;
  t.rotation = svd.matrixV() * d * svd.matrixU().transpose();
  t.translation = ct - t.rotation * cf;
  return t;
}

IcpResult icp_align(const TriMesh& source, const TriMesh& target, int max_iters, double tol) {
  source.validate();
  target.validate();
  const TriangleBvh surface(target);
  const KdTree vertices(target.vertices);
  IcpResult result;
  Points current = source.vertices;
  Points matched(current.rows(), 3);
  bool on_surface = true;

  auto surface_rms = [&](const Points& pts, Points* closest) {
    double sq = 0.0;
    for (Eigen::Index i = 0; i < pts.rows(); ++i) {
      const auto hit = surface.closest_point(pts.row(i).transpose());
      if (closest) closest->row(i) = hit.point.transpose();
      sq += hit.distance * hit.distance;
    }
    return std::sqrt(sq / static_cast<double>(pts.rows()));
  };
  auto correspond = [&] {
    if (on_surface) return surface_rms(current, &matched);
    double sq = 0.0;
    for (Eigen::Index i = 0; i < current.rows(); ++i) {
      const auto nb = vertices.nearest(current.row(i).transpose());
      matched.row(i) = target.vertices.row(nb.index);
      sq += nb.distance * nb.distance;
    }
    return std::sqrt(sq / static_cast<double>(current.rows()));
  };

  // Besl-McKay style acceleration: while consecutive surface steps point the
  // same way, repeat the step with doubling powers as long as the RMS drops.
  auto extrapolate = [&](const RigidTransform& step, double rms_now) {
    RigidTransform power = step;
    RigidTransform accepted;
    double best = rms_now;
    for (int k = 0; k < kMaxExtrapolationDoublings; ++k) {
      const RigidTransform trial = power.compose(accepted);
      const double r = surface_rms(trial.apply(current), nullptr);
      if (!(r < best)) break;
      best = r;
      accepted = trial;
      power = power.compose(power);
    }
    current = accepted.apply(current);
    result.transform = accepted.compose(result.transform);
  };

  const double coarse_tol = std::max(tol, kCoarseTolerance);
  double rms = correspond();
  Eigen::Matrix<double, 6, 1> previous = Eigen::Matrix<double, 6, 1>::Zero();
  for (int it = 0; it < max_iters; ++it) {
    const RigidTransform step = best_fit_rigid(current, matched);
    current = step.apply(current);
    result.transform = step.compose(result.transform);
    result.iterations = it + 1;
    if (on_surface) {
      const Eigen::AngleAxisd aa(step.rotation);
      Eigen::Matrix<double, 6, 1> motion;
      motion << aa.angle() * aa.axis(), step.translation;
      const double norms = motion.norm() * previous.norm();
      if (norms > 0.0 && motion.dot(previous) > kAlignedCosine * norms) {
        extrapolate(step, surface_rms(current, nullptr));
      }
      previous = motion;
    }
    const double next = correspond();
    const bool settled = std::abs(rms - next) < (on_surface ? coarse_tol : tol);
    rms = next;
    if (settled && on_surface) {
      on_surface = false;
      rms = correspond();
    } else if (settled) {
      result.converged = true;
      break;
    }
  }
  result.rms = rms;
  result.aligned = TriMesh{current, source.faces};
  return result;
}

Normalization normalize_to_unit_box(const std::vector<TriMesh>& meshes, std::optional<double> reference_half_extent) {
  if (meshes.empty()) throw InvalidArgument("normalize_to_unit_box needs at least one mesh");
  Normalization out;
  double half_extent = 0.0;
  for (const auto& m : meshes) {
    const auto box = bounding_box(m.vertices);
    out.centers.push_back(box.center());
    half_extent = std::max(half_extent, 0.5 * box.max_extent());
  }
  if (reference_half_extent) half_extent = *reference_half_extent;
  if (!(half_extent > 0.0)) throw InvalidArgument("meshes have zero extent");
  out.scale = 1.0 / half_extent;
  for (std::size_t i = 0; i < meshes.size(); ++i) {
    TriMesh m = meshes[i];
    m.vertices.rowwise() -= out.centers[i].transpose();
    m.vertices *= out.scale;
    out.meshes.push_back(std::move(m));
  }
  return out;
}

}  // namespace flowssm::geometry
