#include "flowssm/ssm/pca.hpp"

#include <cmath>

#include <Eigen/SVD>

#include "flowssm/common/error.hpp"

namespace flowssm::ssm {

Vector PcaBasis::reconstruct(const Vector& weights) const {
  if (weights.size() != modes()) throw ShapeMismatch("PCA weight count does not match the number of modes");
  if (modes() == 0) return mean;
  return mean + components.transpose() * weights;
}

Vector PcaBasis::project(const Vector& x) const {
  if (x.size() != dim()) throw ShapeMismatch("vector dimension does not match the PCA basis");
  if (modes() == 0) return Vector(0);
  return components * (x - mean);
}

double PcaBasis::span_residual(const Vector& x) const {
  const Vector centered = x - mean;
  if (modes() == 0) return centered.norm();
  return (centered - components.transpose() * (components * centered)).norm();
}

PcaBasis fit_pca(const Matrix& samples) {
  const auto n = samples.rows();
  if (n < 2) throw InvalidArgument("PCA needs at least two samples");
  if (!samples.allFinite()) throw NonFiniteValue("PCA input has non-finite values");

  PcaBasis basis;
  basis.mean = samples.colwise().mean().transpose();
  const Eigen::MatrixXd centered = samples.rowwise() - basis.mean.transpose();
  Eigen::BDCSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinV);
  const Vector& s = svd.singularValues();
  const double scale = std::max(1.0, samples.cwiseAbs().maxCoeff());
  const double tol = 1e-10 * scale * std::sqrt(static_cast<double>(n));
  Eigen::Index k = 0;
  while (k < s.size() && s(k) > tol) ++k;

  basis.components.resize(k, samples.cols());
  basis.stddevs.resize(k);
  for (Eigen::Index i = 0; i < k; ++i) {
    Vector u = svd.matrixV().col(i);
    Eigen::Index pivot = 0;
    u.cwiseAbs().maxCoeff(&pivot);
    if (u(pivot) < 0.0) u = -u;
    basis.components.row(i) = u.transpose();
    basis.stddevs(i) = s(i) / std::sqrt(static_cast<double>(n - 1));
  }
  basis.degenerate = k == 0;
  return basis;
}

}  // namespace flowssm::ssm
