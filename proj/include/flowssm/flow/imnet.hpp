#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "flowssm/autodiff/archive.hpp"
#include "flowssm/autodiff/tensor.hpp"

namespace flowssm::flow {

struct MlpConfig {
  int latent_dim = 128;
  std::vector<int> hidden{512, 512, 256, 128};
  double negative_slope = 0.02;
  /// Start with zero output weights so the initial flow is the identity.
  bool zero_init_output = false;
};

void to_json(nlohmann::json& j, const MlpConfig& c);
void from_json(const nlohmann::json& j, MlpConfig& c);

/// IM-Net style flow network f(x, z) -> R^3: four hidden fully connected layers
/// with LeakyReLU, the raw input [x, z] copied and concatenated onto the inputs
/// of hidden layers 2-4, and a linear output layer.
class ImNetMlp {
 public:
  static constexpr int kPointDim = 3;

  ImNetMlp() = default;
  ImNetMlp(MlpConfig config, std::mt19937_64& rng);

  /// `x` is N x 3. `z` is either N x d (one latent per point) or 1 x d
  /// (shared by all points). Returns N x 3.
  [[nodiscard]] ad::Tensor forward(const ad::Tensor& x, const ad::Tensor& z) const;

  [[nodiscard]] std::vector<ad::Tensor> parameters() const;
  [[nodiscard]] std::size_t parameter_count() const;
  [[nodiscard]] const MlpConfig& config() const { return config_; }
  [[nodiscard]] int latent_dim() const { return config_.latent_dim; }

  void set_trainable(bool on);
  /// Copy whose weights are constants; never records gradients for them.
  [[nodiscard]] ImNetMlp frozen() const;

  void save(ad::TensorArchive& archive, const std::string& prefix) const;
  static ImNetMlp load(const ad::TensorArchive& archive, const std::string& prefix, MlpConfig config);

  /// Layer weights are (fan_in x fan_out) so that layers compute x W + b.
  [[nodiscard]] const std::vector<ad::Tensor>& weights() const { return weights_; }
  [[nodiscard]] const std::vector<ad::Tensor>& biases() const { return biases_; }

 private:
  MlpConfig config_;
  std::vector<ad::Tensor> weights_;
  std::vector<ad::Tensor> biases_;
};

}  // namespace flowssm::flow
