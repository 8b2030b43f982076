#include <algorithm>
#include <numeric>
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

constexpr double kBoxTolerance = 1e-6;

void require_normalized(const geometry::TriMesh& mesh, const std::string& what) {
  mesh.validate();
  if (mesh.vertices.cwiseAbs().maxCoeff() > 1.0 + kBoxTolerance) {
    throw DataError(what + " is not normalized to [-1, 1]^3; run preprocessing first");
  }
}

Matrix gaussian(Eigen::Index rows, Eigen::Index cols, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, stddev);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

struct ShapeLatents {
  ad::Tensor global;  // 1 x d
  ad::Tensor local;   // M x d
  ad::AdamState global_state;
  ad::AdamState local_state;
};

void step_latent(ad::Tensor& z, ad::AdamState& state) {
  if (!z.has_grad()) return;
  Matrix* value = &z.mutable_value();
  const Matrix grad = z.grad();
  ad::adam_step(std::span<Matrix* const>(&value, 1), std::span<const Matrix>(&grad, 1), state);
  z.zero_grad();
}

}  // namespace

TrainResult train(const std::vector<geometry::TriMesh>& shapes, const geometry::TriMesh& template_mesh,
                  const TrainingConfig& cfg, const ProgressFn& progress) {
  cfg.validate();
  if (shapes.size() < 2) throw InvalidArgument("training needs at least two shapes");
  require_normalized(template_mesh, "template");
  for (std::size_t i = 0; i < shapes.size(); ++i) require_normalized(shapes[i], "training shape " + std::to_string(i));

  const auto n_shapes = shapes.size();
  const auto d = cfg.latent_dim;
  const auto m = cfg.n_control_points;

  TrainResult result;
  FlowSsmModel& model = result.model;
  model.template_mesh = template_mesh;
  model.flow = cfg.flow;
  model.training_config = cfg;

  std::mt19937_64 init_rng(derive_seed(cfg.seed, {0}));
  flow::MlpConfig global_cfg{d, cfg.global_hidden, cfg.negative_slope, false};
  flow::MlpConfig local_cfg{d, cfg.local_hidden, cfg.negative_slope, true};
  model.mlp_global = flow::ImNetMlp(global_cfg, init_rng);
  model.mlp_local = flow::ImNetMlp(local_cfg, init_rng);
  model.cps = latent::place_control_points(template_mesh, m, cfg.initial_eps, derive_seed(cfg.seed, {1}));

  std::vector<ShapeLatents> z(n_shapes);
  std::mt19937_64 latent_rng(derive_seed(cfg.seed, {2}));
  ad::AdamConfig adam_cfg;
  adam_cfg.lr = cfg.lr;
  for (auto& s : z) {
    s.global = ad::Tensor::parameter(gaussian(1, d, cfg.latent_init_std, latent_rng));
    s.local = ad::Tensor::parameter(gaussian(m, d, cfg.latent_init_std, latent_rng));
    s.global_state.config = adam_cfg;
    s.local_state.config = adam_cfg;
  }

  const auto n_points = static_cast<Eigen::Index>(cfg.n_sample_points);
  const int n_stages = cfg.train_local ? 2 : 1;
  for (int stage = 1; stage <= n_stages; ++stage) {
    const bool local_stage = stage == 2;
    model.mlp_global.set_trainable(!local_stage);
    model.mlp_local.set_trainable(local_stage);
    model.cps.inverse_widths.set_requires_grad(local_stage);
    std::vector<ad::Tensor> shared = local_stage ? model.mlp_local.parameters() : model.mlp_global.parameters();
    if (local_stage) shared.push_back(model.cps.inverse_widths);
    ad::Adam optimizer(shared, adam_cfg);
    const flow::ImNetMlp frozen_global = model.mlp_global.frozen();

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
      std::vector<std::size_t> order(n_shapes);
      std::iota(order.begin(), order.end(), 0);
      std::mt19937_64 shuffle_rng(derive_seed(cfg.seed, {3, static_cast<std::uint64_t>(stage),
                                                         static_cast<std::uint64_t>(epoch)}));
      std::shuffle(order.begin(), order.end(), shuffle_rng);

      double epoch_loss = 0.0;
      for (std::size_t begin = 0; begin < n_shapes; begin += static_cast<std::size_t>(cfg.batch_size)) {
        const auto end = std::min(n_shapes, begin + static_cast<std::size_t>(cfg.batch_size));
        const double batch_weight = 1.0 / static_cast<double>(end - begin);
        optimizer.zero_grad();
        for (std::size_t b = begin; b < end; ++b) {
          const auto i = order[b];
          const auto step_seed = derive_seed(cfg.seed, {4, static_cast<std::uint64_t>(stage),
                                                        static_cast<std::uint64_t>(epoch), i});
          try {
            const auto source = geometry::sample_surface(template_mesh, n_points, derive_seed(step_seed, {0}));
            const auto target = geometry::sample_surface(shapes[i], n_points, derive_seed(step_seed, {1}));
            const geometry::KdTree target_tree(target.points);
            ad::Tensor deformed;
            if (!local_stage) {
              deformed = flow::integrate_flow(model.mlp_global, ad::Tensor::constant(source.points), z[i].global,
                                              cfg.flow);
            } else {
              ad::Tensor start;
              {
                ad::NoGradGuard guard;
                start = flow::integrate_flow(frozen_global, ad::Tensor::constant(source.points),
                                             ad::Tensor::constant(z[i].global.value()), cfg.flow);
              }
              const auto zx = latent::interpolate_latent(model.cps, z[i].local, start);
              deformed = flow::integrate_flow(model.mlp_local, start, zx, cfg.flow);
            }
            const auto loss = chamfer_loss(deformed, target_tree, LossMode::Symmetric);
            epoch_loss += loss.item();
            ad::backward(ad::scale(loss, batch_weight));
          } catch (const NonFiniteValue& e) {
            throw NonFiniteLoss("stage " + std::to_string(stage) + ", epoch " + std::to_string(epoch) + ", shape " +
                                std::to_string(i) + ": " + e.what());
          } catch (const NonFiniteGradient& e) {
            throw NonFiniteLoss("stage " + std::to_string(stage) + ", epoch " + std::to_string(epoch) + ", shape " +
                                std::to_string(i) + ": " + e.what());
          }
          if (local_stage) {
            step_latent(z[i].local, z[i].local_state);
          } else {
            step_latent(z[i].global, z[i].global_state);
          }
        }
        optimizer.step();
      }
      optimizer.zero_grad();
      LossRecord record{stage, epoch, epoch_loss / static_cast<double>(n_shapes)};
      result.loss_curve.push_back(record);
      if (progress) progress(record);
    }
  }

  model.mlp_global.set_trainable(false);
  model.mlp_local.set_trainable(false);
  model.cps.inverse_widths.set_requires_grad(false);
  model.cps.inverse_widths.mutable_value() = model.cps.inverse_widths.value().cwiseAbs();

  Matrix zg(static_cast<Eigen::Index>(n_shapes), d);
  Matrix zl(static_cast<Eigen::Index>(n_shapes), static_cast<Eigen::Index>(m) * d);
  for (std::size_t i = 0; i < n_shapes; ++i) {
    latent::LatentState s;
    s.z_global = z[i].global.value().row(0).transpose();
    s.z_local = z[i].local.value();
    zg.row(static_cast<Eigen::Index>(i)) = s.z_global.transpose();
    zl.row(static_cast<Eigen::Index>(i)) = Eigen::Map<const Eigen::RowVectorXd>(s.z_local.data(), s.z_local.size());
    model.training_latents.push_back(std::move(s));
  }
  model.pca_global = fit_pca(zg);
  model.pca_local = fit_pca(zl);
  result.final_loss = result.loss_curve.empty() ? 0.0 : result.loss_curve.back().loss;
  return result;
}

}  // namespace flowssm::ssm
