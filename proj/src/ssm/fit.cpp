#include <limits>
#include <random>

#include "flowssm/autodiff/adam.hpp"
#include "flowssm/autodiff/ops.hpp"
#include "flowssm/common/error.hpp"
#include "flowssm/common/seed.hpp"
#include "flowssm/geometry/kdtree.hpp"
#include "flowssm/geometry/sampling.hpp"
#include "flowssm/ssm/model.hpp"

namespace flowssm::ssm {

namespace {

Matrix gaussian_row(Eigen::Index n, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Matrix m(1, n);
  for (Eigen::Index i = 0; i < n; ++i) m(0, i) = dist(rng);
  return m;
}

/// Minimizes `loss_of(latent)` over PCA weights w, latent = mean + w U.
/// Returns the best weights seen and their loss.
template <typename LossFn>
std::pair<Vector, double> optimize_weights(const PcaBasis& basis, const FitConfig& cfg, std::mt19937_64& rng,
                                           LossFn&& loss_of) {
  const auto k = basis.modes();
  const ad::Tensor mean = ad::Tensor::constant(Matrix(basis.mean.transpose()));
  if (k == 0) {
    ad::NoGradGuard guard;
    return {Vector(0), loss_of(mean, 0).item()};
  }
  const ad::Tensor components = ad::Tensor::constant(basis.components);
  ad::Tensor w = ad::Tensor::parameter(gaussian_row(k, cfg.init_std, rng));
  ad::AdamConfig adam_cfg;
  adam_cfg.lr = cfg.lr;
  ad::Adam optimizer({w}, adam_cfg);

  Vector best = w.value().row(0).transpose();
  double best_loss = std::numeric_limits<double>::infinity();
  for (int it = 0; it < cfg.iters; ++it) {
    optimizer.zero_grad();
    const ad::Tensor latent = ad::add(ad::matmul(w, components), mean);
    const ad::Tensor loss = loss_of(latent, it);
    if (loss.item() < best_loss) {
      best_loss = loss.item();
      best = w.value().row(0).transpose();
    }
    ad::backward(loss);
    optimizer.step();
  }
  if (cfg.iters == 0) {
    ad::NoGradGuard guard;
    best_loss = loss_of(ad::add(ad::matmul(w, components), mean), 0).item();
  }
  return {best, best_loss};
}

}  // namespace

FitResult fit_latent(const FlowSsmModel& model, const geometry::PointSet& target, const FitConfig& cfg) {
  target.validate();
  if (cfg.iters < 0 || cfg.lr <= 0.0 || cfg.n_sample_points < 1 || cfg.init_std < 0.0) {
    throw InvalidArgument("invalid fit configuration");
  }
  const geometry::KdTree tree(target.points);
  const flow::ImNetMlp mlp_global = model.mlp_global.frozen();
  const flow::ImNetMlp mlp_local = model.mlp_local.frozen();
  latent::ControlPointSet cps;
  cps.positions = model.cps.positions;
  cps.inverse_widths = ad::Tensor::constant(model.cps.inverse_widths.value(), model.cps.inverse_widths.shape());
  const auto n_points = static_cast<Eigen::Index>(cfg.n_sample_points);
  const auto m = model.control_point_count();
  const auto d = static_cast<Eigen::Index>(model.latent_dim());
  std::mt19937_64 rng(derive_seed(cfg.seed, {0}));

  auto source_points = [&](int phase, int it) {
    return geometry::sample_surface(model.template_mesh, n_points,
                                    derive_seed(cfg.seed, {1, static_cast<std::uint64_t>(phase),
                                                           static_cast<std::uint64_t>(it)}))
        .points;
  };

  FitResult result;
  try {
    auto [wg, global_loss] = optimize_weights(model.pca_global, cfg, rng, [&](const ad::Tensor& zg, int it) {
      const auto y = flow::integrate_flow(mlp_global, ad::Tensor::constant(source_points(0, it)), zg, model.flow);
      return chamfer_loss(y, tree, cfg.loss_mode);
    });
    result.global_weights = std::move(wg);
    result.global_loss = global_loss;
    result.final_loss = global_loss;
    result.latents.z_global = model.pca_global.reconstruct(result.global_weights);
    const ad::Tensor zg = ad::Tensor::constant(Matrix(result.latents.z_global.transpose()));

    if (cfg.use_local) {
      auto [wl, local_loss] = optimize_weights(model.pca_local, cfg, rng, [&](const ad::Tensor& flat, int it) {
        ad::Tensor start;
        {
          ad::NoGradGuard guard;
          start = flow::integrate_flow(mlp_global, ad::Tensor::constant(source_points(1, it)), zg, model.flow);
        }
        const auto zx = latent::interpolate_latent(cps, ad::reshape(flat, {m, d}), start);
        return chamfer_loss(flow::integrate_flow(mlp_local, start, zx, model.flow), tree, cfg.loss_mode);
      });
      result.local_weights = std::move(wl);
      result.final_loss = local_loss;
    } else {
      result.local_weights = Vector::Zero(model.pca_local.modes());
    }
  } catch (const NonFiniteValue& e) {
    throw NonFiniteLoss(std::string("latent fit diverged: ") + e.what());
  } catch (const NonFiniteGradient& e) {
    throw NonFiniteLoss(std::string("latent fit diverged: ") + e.what());
  }

  const Vector local_flat = model.pca_local.reconstruct(result.local_weights);
  result.latents.z_local = Eigen::Map<const Matrix>(local_flat.data(), m, d);
  result.global_mesh = model.deform_template(result.latents, false);
  result.mesh = cfg.use_local ? model.deform_template(result.latents, true) : result.global_mesh;
  return result;
}

SampledShape sample_shape(const FlowSsmModel& model, std::uint64_t seed) {
  std::mt19937_64 rng(derive_seed(seed, {0}));
  std::normal_distribution<double> unit(0.0, 1.0);
  SampledShape out;
  out.global_weights.resize(model.pca_global.modes());
  for (Eigen::Index i = 0; i < out.global_weights.size(); ++i) out.global_weights(i) = model.pca_global.stddevs(i) * unit(rng);
  out.local_weights.resize(model.pca_local.modes());
  for (Eigen::Index i = 0; i < out.local_weights.size(); ++i) out.local_weights(i) = model.pca_local.stddevs(i) * unit(rng);
  out.latents = model.decode(out.global_weights, out.local_weights);
  out.mesh = model.deform_template(out.latents);
  return out;
}

}  // namespace flowssm::ssm
