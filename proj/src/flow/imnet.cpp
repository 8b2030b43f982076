#include "flowssm/flow/imnet.hpp"

#include <cmath>

#include "flowssm/autodiff/ops.hpp"
#include "flowssm/common/error.hpp"

namespace flowssm::flow {

void to_json(nlohmann::json& j, const MlpConfig& c) {
  j = nlohmann::json{{"latent_dim", c.latent_dim},
                     {"hidden", c.hidden},
                     {"negative_slope", c.negative_slope},
                     {"zero_init_output", c.zero_init_output}};
}

void from_json(const nlohmann::json& j, MlpConfig& c) {
  j.at("latent_dim").get_to(c.latent_dim);
  j.at("hidden").get_to(c.hidden);
  j.at("negative_slope").get_to(c.negative_slope);
  if (j.contains("zero_init_output")) j.at("zero_init_output").get_to(c.zero_init_output);
}

namespace {

Eigen::Index layer_input_dim(const MlpConfig& c, std::size_t layer) {
  const Eigen::Index raw = ImNetMlp::kPointDim + c.latent_dim;
  if (layer == 0) return raw;
  const auto prev = static_cast<Eigen::Index>(c.hidden[layer - 1]);
  return layer < c.hidden.size() ? prev + raw : prev;
}

Eigen::Index layer_output_dim(const MlpConfig& c, std::size_t layer) {
  return layer < c.hidden.size() ? c.hidden[layer] : ImNetMlp::kPointDim;
}

}  // namespace

ImNetMlp::ImNetMlp(MlpConfig config, std::mt19937_64& rng) : config_(std::move(config)) {
  if (config_.hidden.size() != 4) throw ConfigError("the flow MLP needs exactly four hidden widths");
  if (config_.latent_dim < 1) throw ConfigError("latent_dim must be positive");
  for (std::size_t l = 0; l <= config_.hidden.size(); ++l) {
    const auto in = layer_input_dim(config_, l);
    const auto out = layer_output_dim(config_, l);
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    std::uniform_real_distribution<double> u(-bound, bound);
    Matrix w(in, out);
    Matrix b(1, out);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = u(rng);
    for (Eigen::Index i = 0; i < b.size(); ++i) b.data()[i] = u(rng);
    if (l == config_.hidden.size() && config_.zero_init_output) {
      w.setZero();
      b.setZero();
    }
    weights_.push_back(ad::Tensor::parameter(std::move(w)));
    biases_.push_back(ad::Tensor::parameter(std::move(b), {out}));
  }
}

ad::Tensor ImNetMlp::forward(const ad::Tensor& x, const ad::Tensor& z) const {
  using namespace ad;
  if (x.cols() != kPointDim) throw ShapeMismatch("flow MLP expects N x 3 points, got " + shape_string(x.shape()));
  if (z.cols() != config_.latent_dim || (z.rows() != 1 && z.rows() != x.rows())) {
    throw ShapeMismatch("flow MLP latent has shape " + shape_string(z.shape()));
  }
  Tensor h = leaky_relu(affine({x, z}, weights_[0], biases_[0]), config_.negative_slope);
  for (std::size_t l = 1; l < config_.hidden.size(); ++l) {
    h = leaky_relu(affine({h, x, z}, weights_[l], biases_[l]), config_.negative_slope);
  }
  return affine({h}, weights_.back(), biases_.back());
}

std::vector<ad::Tensor> ImNetMlp::parameters() const {
  std::vector<ad::Tensor> out;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    out.push_back(weights_[l]);
    out.push_back(biases_[l]);
  }
  return out;
}

std::size_t ImNetMlp::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += static_cast<std::size_t>(p.size());
  return n;
}

void ImNetMlp::set_trainable(bool on) {
  for (auto& p : parameters()) {
    ad::Tensor t = p;
    t.set_requires_grad(on);
    t.zero_grad();
  }
}

ImNetMlp ImNetMlp::frozen() const {
  ImNetMlp copy;
  copy.config_ = config_;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    copy.weights_.push_back(ad::Tensor::constant(weights_[l].value()));
    copy.biases_.push_back(ad::Tensor::constant(biases_[l].value(), biases_[l].shape()));
  }
  return copy;
}

void ImNetMlp::save(ad::TensorArchive& archive, const std::string& prefix) const {
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    archive.put(prefix + ".w" + std::to_string(l), weights_[l].value());
    archive.put(prefix + ".b" + std::to_string(l), biases_[l].value(), biases_[l].shape());
  }
}

ImNetMlp ImNetMlp::load(const ad::TensorArchive& archive, const std::string& prefix, MlpConfig config) {
  ImNetMlp mlp;
  mlp.config_ = std::move(config);
  for (std::size_t l = 0; l <= mlp.config_.hidden.size(); ++l) {
    const Matrix& w = archive.get(prefix + ".w" + std::to_string(l));
    const Matrix& b = archive.get(prefix + ".b" + std::to_string(l));
    if (w.rows() != layer_input_dim(mlp.config_, l) || w.cols() != layer_output_dim(mlp.config_, l) ||
        b.size() != w.cols()) {
      throw ShapeMismatch("checkpoint layer " + prefix + "." + std::to_string(l) + " has unexpected shape");
    }
    mlp.weights_.push_back(ad::Tensor::parameter(w));
    mlp.biases_.push_back(ad::Tensor::parameter(b, {b.cols()}));
  }
  return mlp;
}

}  // namespace flowssm::flow
