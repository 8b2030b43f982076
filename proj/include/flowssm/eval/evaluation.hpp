#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "flowssm/geometry/mesh.hpp"
#include "flowssm/ssm/model.hpp"

namespace flowssm::eval {

struct Summary {
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation
};

[[nodiscard]] Summary summarize(const std::vector<double>& values);

struct EvalConfig {
  ssm::FitConfig fit;
  /// Surface samples per mesh for ASSD.
  Eigen::Index assd_samples = 15000;
  /// Surface samples per mesh for specificity Chamfer distances.
  Eigen::Index chamfer_points = 15000;
  int n_specificity_samples = 1000;
  std::uint64_t seed = 0;
};

struct GeneralityRecord {
  std::string name;
  double assd = 0.0;           // normalized units
  double assd_global = 0.0;    // global stage only
  double fit_loss = 0.0;
  bool self_intersecting = false;
  Eigen::Index intersecting_pairs = 0;
};

struct SpecificityRecord {
  int index = 0;
  double chamfer = 0.0;  // to the nearest training shape
  Eigen::Index nearest_training_shape = -1;
  bool self_intersecting = false;
  Eigen::Index intersecting_pairs = 0;
};

/// Fits each test shape (symmetric loss unless configured otherwise) and scores
/// the fitted mesh by ASSD and self-intersections.
[[nodiscard]] std::vector<GeneralityRecord> evaluate_generality(const ssm::FlowSsmModel& model,
                                                                const std::vector<geometry::TriMesh>& test_shapes,
                                                                const EvalConfig& cfg,
                                                                const std::vector<std::string>& names = {});

enum class LatentSampler {
  Pca,         // per-mode N(0, stddev^2) weights
  UniformBox,  // every latent coordinate uniform over its training range
};

/// Decodes random latents and scores each sample by its smallest symmetric
/// Chamfer distance to a training shape, plus self-intersections.
[[nodiscard]] std::vector<SpecificityRecord> evaluate_specificity(const ssm::FlowSsmModel& model,
                                                                  const std::vector<geometry::TriMesh>& training_shapes,
                                                                  const EvalConfig& cfg,
                                                                  LatentSampler sampler = LatentSampler::Pca);

/// Latents with each coordinate uniform over the range of the training latents.
[[nodiscard]] latent::LatentState uniform_box_latents(const ssm::FlowSsmModel& model, std::uint64_t seed);

struct PairedTest {
  double mean_difference = 0.0;  // mean of (a - b)
  double t = 0.0;
  double p_two_sided = 1.0;
  int n = 0;
};

/// Paired Student t-test on a - b.
[[nodiscard]] PairedTest paired_t_test(const std::vector<double>& a, const std::vector<double>& b);

struct AblationReport {
  std::vector<double> global_only;      // ASSD per test shape
  std::vector<double> global_and_local;
  Summary global_summary;
  Summary combined_summary;
  PairedTest test;  // global_only - global_and_local
};

/// Global-only vs. global+local generality with shared stage-1 training. Both
/// arms come from the same fit: its global phase is the global-only result.
[[nodiscard]] AblationReport ablate_global_vs_local(const ssm::FlowSsmModel& model,
                                                    const std::vector<geometry::TriMesh>& test_shapes,
                                                    const EvalConfig& cfg);

/// Trains on `shapes` and runs the ablation above on `test_shapes`.
[[nodiscard]] AblationReport ablate_global_vs_local(const std::vector<geometry::TriMesh>& shapes,
                                                    const geometry::TriMesh& template_mesh,
                                                    const std::vector<geometry::TriMesh>& test_shapes,
                                                    const ssm::TrainingConfig& train_cfg, const EvalConfig& cfg);

struct EvalReport {
  std::vector<GeneralityRecord> generality;
  std::vector<SpecificityRecord> specificity;
  Summary generality_summary;
  Summary specificity_summary;
  int sim_generality = 0;
  int sim_specificity = 0;
  /// normalized length / scale = model units (mm for mm inputs)
  double normalization_scale = 1.0;
  nlohmann::json config = nlohmann::json::object();

  void finalize();
  [[nodiscard]] nlohmann::json to_json() const;
  [[nodiscard]] std::string generality_csv() const;
  [[nodiscard]] std::string specificity_csv() const;
};

}  // namespace flowssm::eval
