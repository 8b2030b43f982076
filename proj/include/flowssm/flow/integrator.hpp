#pragma once

#include <functional>
#include <string>

#include <json.hpp>

#include "flowssm/autodiff/tensor.hpp"
#include "flowssm/flow/imnet.hpp"

namespace flowssm::flow {

enum class Integrator { Euler, Rk4 };
enum class Direction { Forward, Reverse };

struct FlowConfig {
  int n_steps = 8;
  Integrator integrator = Integrator::Rk4;
  /// Any |coordinate| above this aborts integration with NonFiniteValue.
  double divergence_bound = 1e3;
};

void to_json(nlohmann::json& j, const FlowConfig& c);
void from_json(const nlohmann::json& j, FlowConfig& c);

/// v(x, t) for a batch of points x (N x 3).
using VelocityField = std::function<ad::Tensor(const ad::Tensor& x, double t)>;

/// Latent-conditioned velocity f(x, t z) * |z|. `z` is 1 x d (shared) or N x d
/// (one latent per point, norms taken per row).
[[nodiscard]] ad::Tensor velocity(const ImNetMlp& mlp, const ad::Tensor& x, double t, const ad::Tensor& z);

/// Single-point convenience form.
[[nodiscard]] Vec3 velocity(const ImNetMlp& mlp, const Vec3& x, double t, const Vector& z);

/// Fixed-step integration of dx/dt = v(x, t) over t in [0, 1]. Reverse
/// direction integrates from t = 1 back to t = 0. Differentiable by
/// backpropagating through the unrolled steps.
[[nodiscard]] ad::Tensor integrate(const VelocityField& field, const ad::Tensor& x0, const FlowConfig& cfg,
                                   Direction direction = Direction::Forward);

/// Flow of the MLP velocity field. The latent rows are held constant along
/// each trajectory.
[[nodiscard]] ad::Tensor integrate_flow(const ImNetMlp& mlp, const ad::Tensor& x0, const ad::Tensor& z,
                                        const FlowConfig& cfg, Direction direction = Direction::Forward);

}  // namespace flowssm::flow
