#pragma once

#include "flowssm/common/types.hpp"

namespace flowssm::ssm {

/// Linear latent statistics: x = mean + components^T w.
struct PcaBasis {
  Vector mean;
  Matrix components;  // modes x dim, orthonormal rows
  Vector stddevs;     // per mode, descending
  bool degenerate = false;  // no mode with nonzero variance

  [[nodiscard]] Eigen::Index modes() const { return components.rows(); }
  [[nodiscard]] Eigen::Index dim() const { return mean.size(); }

  [[nodiscard]] Vector reconstruct(const Vector& weights) const;
  [[nodiscard]] Vector project(const Vector& x) const;
  /// |(I - U^T U)(x - mean)|
  [[nodiscard]] double span_residual(const Vector& x) const;
};

/// Mean-centred PCA of the rows of `samples` (N x D, N >= 2). Keeps every mode
/// with nonzero variance; stddevs are sample standard deviations of the
/// projections. Identical rows give zero modes and set `degenerate`.
[[nodiscard]] PcaBasis fit_pca(const Matrix& samples);

}  // namespace flowssm::ssm
