#include "flowssm/latent/latent.hpp"

#include <cmath>

#include "flowssm/autodiff/ops.hpp"
#include "flowssm/common/error.hpp"
#include "flowssm/geometry/sampling.hpp"

namespace flowssm::latent {

ControlPointSet place_control_points(const geometry::TriMesh& template_mesh, int m, double initial_eps,
                                     std::uint64_t seed) {
  if (m < 1) throw InvalidArgument("need at least one control point");
  if (!(initial_eps >= kMinInitialEps && initial_eps <= kMaxInitialEps)) {
    throw InvalidArgument("initial eps " + std::to_string(initial_eps) + " outside [0.01, 30]");
  }
  ControlPointSet cps;
  cps.positions = geometry::farthest_point_sample(template_mesh, m, seed).points;
  cps.inverse_widths = ad::Tensor::parameter(Matrix::Constant(1, m, initial_eps), {m});
  return cps;
}

ad::Tensor rbf_kernel(const ad::Tensor& x, const Points& centers, const ad::Tensor& eps) {
  if (x.cols() != 3) throw ShapeMismatch("rbf_kernel expects N x 3 points, got " + ad::shape_string(x.shape()));
  if (eps.size() != centers.rows()) {
    throw ShapeMismatch("rbf_kernel: " + std::to_string(eps.size()) + " widths for " +
                        std::to_string(centers.rows()) + " centers");
  }
  const auto n = x.rows();
  const auto m = centers.rows();
  // |x - c|^2 = |x|^2 + |c|^2 - 2 x.c
  Matrix d2 = -2.0 * x.value() * centers.transpose();
  d2.colwise() += x.value().rowwise().squaredNorm();
  d2.rowwise() += centers.rowwise().squaredNorm().transpose();
  d2 = d2.cwiseMax(0.0);
  const Eigen::RowVectorXd eps2 = eps.value().row(0).array().square();
  Matrix phi = (-(d2.array().rowwise() * eps2.array())).exp().matrix();

  return ad::make_result(
      "rbf_kernel", phi, {n, m}, {x, eps}, [centers, d2 = std::move(d2), phi](ad::Node& self) {
        auto& xn = *self.inputs[0];
        auto& en = *self.inputs[1];
        const Eigen::ArrayXXd t = self.grad.array() * phi.array();
        const Eigen::RowVectorXd e = en.value.row(0);
        if (en.requires_grad) {
          Matrix g = (-2.0 * e.array() * (t * d2.array()).colwise().sum()).matrix();
          en.accumulate(std::move(g));
        }
        if (xn.requires_grad) {
          const Matrix w = (t.rowwise() * e.array().square()).matrix();
          Matrix g = -2.0 * (xn.value.array().colwise() * w.rowwise().sum().array()).matrix();
          g.noalias() += 2.0 * w * centers;
          xn.accumulate(std::move(g));
        }
      });
}

ad::Tensor interpolate_latent(const ControlPointSet& cps, const ad::Tensor& z_local, const ad::Tensor& x) {
  if (z_local.rows() != cps.size()) {
    throw ShapeMismatch("local latent has " + std::to_string(z_local.rows()) + " rows for " +
                        std::to_string(cps.size()) + " control points");
  }
  return ad::matmul(rbf_kernel(x, cps.positions, cps.inverse_widths), z_local);
}

Vector interpolate_latent(const ControlPointSet& cps, const Matrix& z_local, const Vec3& x) {
  ad::NoGradGuard guard;
  Matrix xm = x.transpose();
  const auto z = interpolate_latent(cps, ad::Tensor::constant(z_local), ad::Tensor::constant(std::move(xm)));
  return z.value().row(0).transpose();
}

ad::Tensor compose_deformers(const ad::Tensor& points, const GlobalStage& global, const std::optional<LocalStage>& local,
                             const flow::FlowConfig& cfg) {
  ad::Tensor x = flow::integrate_flow(*global.mlp, points, global.z, cfg);
  if (!local) return x;
  const ad::Tensor z = interpolate_latent(*local->cps, local->z_local, x);
  return flow::integrate_flow(*local->mlp, x, z, cfg);
}

}  // namespace flowssm::latent
