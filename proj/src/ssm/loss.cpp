#include "flowssm/ssm/loss.hpp"

#include "flowssm/common/error.hpp"

namespace flowssm::ssm {

const char* loss_mode_name(LossMode mode) {
  switch (mode) {
    case LossMode::Symmetric:
      return "symmetric";
    case LossMode::OneSidedDeformedToTarget:
      return "one_sided_deformed_to_target";
    case LossMode::OneSidedTargetToDeformed:
      return "one_sided_target_to_deformed";
  }
  return "symmetric";
}

LossMode parse_loss_mode(const std::string& name) {
  for (auto m : {LossMode::Symmetric, LossMode::OneSidedDeformedToTarget, LossMode::OneSidedTargetToDeformed}) {
    if (name == loss_mode_name(m)) return m;
  }
  throw ConfigError("unknown loss mode '" + name + "'");
}

ad::Tensor chamfer_loss(const ad::Tensor& deformed, const geometry::KdTree& target, LossMode mode) {
  if (deformed.cols() != 3 || deformed.rows() == 0) {
    throw ShapeMismatch("chamfer_loss expects N x 3 points, got " + ad::shape_string(deformed.shape()));
  }
  if (target.size() == 0) throw ShapeMismatch("chamfer_loss: empty target");
  const Points& p = deformed.value();
  const Points& q = target.points();
  const double w_forward = mode == LossMode::Symmetric ? 0.5 : 1.0;
  Matrix local = Matrix::Zero(p.rows(), 3);
  double loss = 0.0;

  if (mode != LossMode::OneSidedTargetToDeformed) {
    const double w = w_forward / static_cast<double>(p.rows());
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
      const Vec3 x = p.row(i).transpose();
      const auto nn = target.nearest(x);
      loss += w * nn.distance;
      if (nn.distance > 0.0) local.row(i) += (w / nn.distance) * (x - q.row(nn.index).transpose()).transpose();
    }
  }
  if (mode != LossMode::OneSidedDeformedToTarget) {
    const geometry::KdTree tree(p);
    const double w = w_forward / static_cast<double>(q.rows());
    for (Eigen::Index j = 0; j < q.rows(); ++j) {
      const Vec3 y = q.row(j).transpose();
      const auto nn = tree.nearest(y);
      loss += w * nn.distance;
      if (nn.distance > 0.0) local.row(nn.index) += (w / nn.distance) * (p.row(nn.index).transpose() - y).transpose();
    }
  }

  Matrix value(1, 1);
  value(0, 0) = loss;
  return ad::make_result("chamfer_loss", std::move(value), {}, {deformed}, [local = std::move(local)](ad::Node& self) {
    self.inputs[0]->accumulate(Matrix(self.grad(0, 0) * local));
  });
}

}  // namespace flowssm::ssm
