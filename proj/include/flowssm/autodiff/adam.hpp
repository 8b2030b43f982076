#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "flowssm/autodiff/tensor.hpp"

namespace flowssm::ad {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::vector<Matrix> first_moment;
  std::vector<Matrix> second_moment;
  std::int64_t step = 0;
};

/// One bias-corrected Adam update, in place. Moments are created on first use.
void adam_step(std::span<Matrix* const> params, std::span<const Matrix> grads, AdamState& state);

/// Adam over a fixed list of leaf tensors, reading their accumulated gradients.
class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamConfig config);

  void step();
  void zero_grad();

  [[nodiscard]] const AdamState& state() const { return state_; }
  [[nodiscard]] std::vector<Tensor>& params() { return params_; }

 private:
  std::vector<Tensor> params_;
  AdamState state_;
};

}  // namespace flowssm::ad
