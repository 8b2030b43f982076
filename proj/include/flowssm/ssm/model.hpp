#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "flowssm/flow/imnet.hpp"
#include "flowssm/flow/integrator.hpp"
#include "flowssm/geometry/mesh.hpp"
#include "flowssm/latent/latent.hpp"
#include "flowssm/ssm/loss.hpp"
#include "flowssm/ssm/pca.hpp"

namespace flowssm::ssm {

inline constexpr const char* kSoftwareVersion = "1.0.0";

struct TrainingConfig {
  int epochs = 300;
  double lr = 1e-3;
  int batch_size = 16;
  int n_sample_points = 15000;
  double latent_init_std = 0.1;
  int latent_dim = 128;
  std::vector<int> global_hidden{512, 512, 256, 128};
  std::vector<int> local_hidden{512, 512, 256, 128};
  double negative_slope = 0.02;
  int n_control_points = 125;
  double initial_eps = 2.5963;
  /// Run the local stage after the global stage.
  bool train_local = true;
  flow::FlowConfig flow;
  std::uint64_t seed = 0;

  /// Throws ConfigError on non-positive sizes or out-of-range values.
  void validate() const;
};

/// Throws ConfigError on unknown keys.
void to_json(nlohmann::json& j, const TrainingConfig& c);
void from_json(const nlohmann::json& j, TrainingConfig& c);

/// Trained statistical shape model. Immutable after training.
struct FlowSsmModel {
  geometry::TriMesh template_mesh;
  flow::ImNetMlp mlp_global;
  flow::ImNetMlp mlp_local;
  latent::ControlPointSet cps;
  flow::FlowConfig flow;
  PcaBasis pca_global;
  PcaBasis pca_local;
  std::vector<latent::LatentState> training_latents;
  /// normalized = (model - center) * scale
  double normalization_scale = 1.0;
  nlohmann::json training_config = nlohmann::json::object();

  [[nodiscard]] int latent_dim() const { return mlp_global.latent_dim(); }
  [[nodiscard]] Eigen::Index control_point_count() const { return cps.size(); }

  /// Deformation of arbitrary points by the given latents, without gradients.
  [[nodiscard]] Points deform(const Points& points, const latent::LatentState& z, bool use_local = true) const;
  /// Template mesh with deformed vertices and the template's faces.
  [[nodiscard]] geometry::TriMesh deform_template(const latent::LatentState& z, bool use_local = true) const;

  /// Latents from PCA weights.
  [[nodiscard]] latent::LatentState decode(const Vector& global_weights, const Vector& local_weights) const;
  /// Concatenated global and local PCA weights of a latent state.
  [[nodiscard]] Vector pca_features(const latent::LatentState& z) const;
};

struct LossRecord {
  int stage = 1;  // 1 = global, 2 = local
  int epoch = 0;
  double loss = 0.0;  // mean symmetric Chamfer over the shapes of the epoch
};

struct TrainResult {
  FlowSsmModel model;
  std::vector<LossRecord> loss_curve;
  double final_loss = 0.0;
};

using ProgressFn = std::function<void(const LossRecord&)>;

/// Auto-decoder training: stage 1 fits the global MLP and latents, stage 2 the
/// local MLP, inverse widths and local latents on top of the frozen stage 1.
/// PCA bases are fitted to the final latents. Inputs must lie in [-1, 1]^3
/// (DataError otherwise).
[[nodiscard]] TrainResult train(const std::vector<geometry::TriMesh>& shapes, const geometry::TriMesh& template_mesh,
                                const TrainingConfig& cfg, const ProgressFn& progress = {});

struct FitConfig {
  int iters = 600;
  double lr = 0.01;
  double init_std = 0.1;
  int n_sample_points = 15000;
  LossMode loss_mode = LossMode::Symmetric;
  bool use_local = true;
  std::uint64_t seed = 0;
};

struct FitResult {
  latent::LatentState latents;
  Vector global_weights;
  Vector local_weights;
  geometry::TriMesh mesh;         // full deformer
  geometry::TriMesh global_mesh;  // global stage only
  double global_loss = 0.0;       // best loss of the global phase
  double final_loss = 0.0;        // best loss of the last phase
};

/// Span-restricted inference: optimizes PCA weights (global, then local) with
/// the networks and inverse widths frozen, keeping the best iterate of each phase.
[[nodiscard]] FitResult fit_latent(const FlowSsmModel& model, const geometry::PointSet& target, const FitConfig& cfg);

struct SampledShape {
  geometry::TriMesh mesh;
  latent::LatentState latents;
  Vector global_weights;
  Vector local_weights;
};

/// Draws independent N(0, stddev_i^2) weights per mode for both bases and decodes them.
[[nodiscard]] SampledShape sample_shape(const FlowSsmModel& model, std::uint64_t seed);

void save_checkpoint(const FlowSsmModel& model, const std::filesystem::path& path);
/// Throws IoError on a corrupt or incompatible file.
[[nodiscard]] FlowSsmModel load_checkpoint(const std::filesystem::path& path);

}  // namespace flowssm::ssm
