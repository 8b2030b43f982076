#include "flowssm/flow/integrator.hpp"

#include "flowssm/autodiff/ops.hpp"
#include "flowssm/common/error.hpp"

namespace flowssm::flow {

void to_json(nlohmann::json& j, const FlowConfig& c) {
  j = nlohmann::json{{"n_steps", c.n_steps},
                     {"integrator", c.integrator == Integrator::Rk4 ? "rk4" : "euler"},
                     {"divergence_bound", c.divergence_bound}};
}

void from_json(const nlohmann::json& j, FlowConfig& c) {
  j.at("n_steps").get_to(c.n_steps);
  const auto name = j.at("integrator").get<std::string>();
  if (name == "rk4") {
    c.integrator = Integrator::Rk4;
  } else if (name == "euler") {
    c.integrator = Integrator::Euler;
  } else {
    throw ConfigError("unknown integrator '" + name + "'");
  }
  if (j.contains("divergence_bound")) j.at("divergence_bound").get_to(c.divergence_bound);
}

ad::Tensor velocity(const ImNetMlp& mlp, const ad::Tensor& x, double t, const ad::Tensor& z) {
  const ad::Tensor f = mlp.forward(x, ad::scale(z, t));
  if (z.rows() == 1) return ad::mul_scalar(f, ad::l2_norm(z));
  return ad::scale_rows(f, ad::row_norms(z));
}

Vec3 velocity(const ImNetMlp& mlp, const Vec3& x, double t, const Vector& z) {
  ad::NoGradGuard guard;
  Matrix xm = x.transpose();
  Matrix zm = z.transpose();
  const auto v = velocity(mlp, ad::Tensor::constant(std::move(xm)), t, ad::Tensor::constant(std::move(zm)));
  return v.value().row(0).transpose();
}

ad::Tensor integrate(const VelocityField& field, const ad::Tensor& x0, const FlowConfig& cfg, Direction direction) {
  using namespace ad;
  if (cfg.n_steps < 1) throw ConfigError("flow needs n_steps >= 1");
  if (x0.rows() == 0) throw ShapeMismatch("cannot integrate an empty point set");
  const double h = (direction == Direction::Forward ? 1.0 : -1.0) / cfg.n_steps;
  double t = direction == Direction::Forward ? 0.0 : 1.0;
  Tensor x = x0;
  for (int step = 0; step < cfg.n_steps; ++step) {
    if (cfg.integrator == Integrator::Euler) {
      x = add(x, scale(field(x, t), h));
    } else {
      const Tensor k1 = field(x, t);
      const Tensor k2 = field(add(x, scale(k1, 0.5 * h)), t + 0.5 * h);
      const Tensor k3 = field(add(x, scale(k2, 0.5 * h)), t + 0.5 * h);
      const Tensor k4 = field(add(x, scale(k3, h)), t + h);
      const Tensor incr = add(add(k1, scale(k2, 2.0)), add(scale(k3, 2.0), k4));
      x = add(x, scale(incr, h / 6.0));
    }
    t = direction == Direction::Forward ? static_cast<double>(step + 1) / cfg.n_steps
                                        : 1.0 - static_cast<double>(step + 1) / cfg.n_steps;
    if (x.value().cwiseAbs().maxCoeff() > cfg.divergence_bound) {
      throw NonFiniteValue("flow trajectory diverged at step " + std::to_string(step + 1));
    }
  }
  return x;
}

ad::Tensor integrate_flow(const ImNetMlp& mlp, const ad::Tensor& x0, const ad::Tensor& z, const FlowConfig& cfg,
                          Direction direction) {
  return integrate([&](const ad::Tensor& x, double t) { return velocity(mlp, x, t, z); }, x0, cfg, direction);
}

}  // namespace flowssm::flow
