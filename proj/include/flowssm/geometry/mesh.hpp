#pragma once

#include <filesystem>
#include <optional>

#include "flowssm/common/types.hpp"

namespace flowssm::geometry {

/// Indexed triangle surface.
struct TriMesh {
  Points vertices;
  Faces faces;

  [[nodiscard]] Eigen::Index vertex_count() const { return vertices.rows(); }
  [[nodiscard]] Eigen::Index face_count() const { return faces.rows(); }

  [[nodiscard]] Vec3 vertex(Eigen::Index i) const { return vertices.row(i).transpose(); }
  [[nodiscard]] double face_area(Eigen::Index f) const;
  [[nodiscard]] double total_area() const;

  /// Throws TopologyError on out-of-range indices, degenerate faces, an
  /// empty face list or zero total area.
  void validate() const;
};

enum class PointSource { MeshSampled, External };

/// Unordered 3D samples, optionally weighted.
struct PointSet {
  Points points;
  Vector weights;  // empty when unweighted
  PointSource source = PointSource::External;

  PointSet() = default;
  explicit PointSet(Points p, PointSource src = PointSource::External)
      : points(std::move(p)), source(src) {}

  [[nodiscard]] Eigen::Index size() const { return points.rows(); }
  [[nodiscard]] bool empty() const { return points.rows() == 0; }

  /// Throws ShapeMismatch when empty, NonFiniteValue on NaN/Inf coordinates.
  void validate() const;
};

struct RigidTransform {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  [[nodiscard]] Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
  [[nodiscard]] Points apply(const Points& p) const;
  [[nodiscard]] RigidTransform compose(const RigidTransform& inner) const;
  [[nodiscard]] RigidTransform inverse() const;
  [[nodiscard]] double rotation_angle() const;
};

struct BoundingBox {
  Vec3 min = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 max = Vec3::Constant(-std::numeric_limits<double>::infinity());

  void extend(const Vec3& p) {
    min = min.cwiseMin(p);
    max = max.cwiseMax(p);
  }
  [[nodiscard]] Vec3 center() const { return 0.5 * (min + max); }
  [[nodiscard]] double max_extent() const { return (max - min).maxCoeff(); }
};

[[nodiscard]] BoundingBox bounding_box(const Points& p);

enum class MeshFormat { Obj, Ply, PlyAscii };

/// Guesses the format from the file extension; nullopt when unknown.
[[nodiscard]] std::optional<MeshFormat> format_from_extension(const std::filesystem::path& path);

[[nodiscard]] TriMesh load_mesh(const std::filesystem::path& path, MeshFormat format);
[[nodiscard]] TriMesh load_mesh(const std::filesystem::path& path);

/// Writes atomically (temporary file + rename). Validates the mesh first.
void save_mesh(const TriMesh& mesh, const std::filesystem::path& path, MeshFormat format);
void save_mesh(const TriMesh& mesh, const std::filesystem::path& path);

}  // namespace flowssm::geometry
