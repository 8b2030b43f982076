#pragma once

#include <cstdint>
#include <optional>

#include "flowssm/autodiff/tensor.hpp"
#include "flowssm/common/types.hpp"
#include "flowssm/flow/imnet.hpp"
#include "flowssm/flow/integrator.hpp"
#include "flowssm/geometry/mesh.hpp"

namespace flowssm::latent {

/// Per-shape latent codes: one global vector and one local vector per control point.
struct LatentState {
  Vector z_global;
  Matrix z_local;  // M x d, row k belongs to control point k
};

/// Template control points c_k with Gaussian inverse widths eps_k.
struct ControlPointSet {
  Points positions;
  ad::Tensor inverse_widths;  // shape {M}

  [[nodiscard]] Eigen::Index size() const { return positions.rows(); }
};

inline constexpr double kMinInitialEps = 0.01;
inline constexpr double kMaxInitialEps = 30.0;

/// M farthest-point samples of the template surface, all with eps = initial_eps.
[[nodiscard]] ControlPointSet place_control_points(const geometry::TriMesh& template_mesh, int m, double initial_eps,
                                                   std::uint64_t seed);

/// Kernel matrix phi_ik = exp(-(eps_k |c_k - x_i|)^2), N x M. Differentiable in
/// `x` and `eps`.
[[nodiscard]] ad::Tensor rbf_kernel(const ad::Tensor& x, const Points& centers, const ad::Tensor& eps);

/// z(x_i) = sum_k z_k phi_ik for every row of `x`; returns N x d.
[[nodiscard]] ad::Tensor interpolate_latent(const ControlPointSet& cps, const ad::Tensor& z_local, const ad::Tensor& x);
[[nodiscard]] Vector interpolate_latent(const ControlPointSet& cps, const Matrix& z_local, const Vec3& x);

struct GlobalStage {
  const flow::ImNetMlp* mlp = nullptr;
  ad::Tensor z;  // 1 x d
};

struct LocalStage {
  const flow::ImNetMlp* mlp = nullptr;
  const ControlPointSet* cps = nullptr;
  ad::Tensor z_local;  // M x d
};

/// Global flow with a shared latent, followed by the local flow whose per-point
/// latents are interpolated at the global stage's outputs. Passing no local
/// stage gives the global-only deformer.
[[nodiscard]] ad::Tensor compose_deformers(const ad::Tensor& points, const GlobalStage& global,
                                           const std::optional<LocalStage>& local, const flow::FlowConfig& cfg);

}  // namespace flowssm::latent
