#pragma once

#include <string>

#include "flowssm/autodiff/tensor.hpp"
#include "flowssm/geometry/kdtree.hpp"

namespace flowssm::ssm {

enum class LossMode {
  Symmetric,
  /// Mean distance from deformed points to the target; for partial targets.
  OneSidedDeformedToTarget,
  /// Mean distance from target points to the deformed set; for sparse targets.
  OneSidedTargetToDeformed,
};

[[nodiscard]] const char* loss_mode_name(LossMode mode);
[[nodiscard]] LossMode parse_loss_mode(const std::string& name);

/// Unsquared Chamfer distance between the deformed points (N x 3, differentiable)
/// and a fixed target whose KD-tree is `target`. The subgradient of a zero
/// distance is zero.
[[nodiscard]] ad::Tensor chamfer_loss(const ad::Tensor& deformed, const geometry::KdTree& target, LossMode mode);

}  // namespace flowssm::ssm
