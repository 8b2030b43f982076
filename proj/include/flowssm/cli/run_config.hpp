#pragma once

#include <cstdint>
#include <filesystem>

#include <json.hpp>

#include "flowssm/eval/evaluation.hpp"
#include "flowssm/eval/svm.hpp"
#include "flowssm/ssm/model.hpp"

namespace flowssm::cli {

/// Complete run description. Every section is optional and defaults to the
/// reference hyperparameters; unknown keys anywhere are rejected.
///
///   {
///     "seed": 0,
///     "output_dir": "runs/a",
///     "data": {"shapes_dir": ..., "template": ..., "test_dir": ..., "preprocess_manifest": ...},
///     "training": {TrainingConfig keys except "seed"},
///     "fit": {"iters", "lr", "init_std", "n_sample_points", "use_local"},
///     "evaluation": {"assd_samples", "chamfer_points", "n_specificity_samples"},
///     "classification": {"lambda", "svm_iters", "n_splits", "train_fractions"}
///   }
///
/// Relative paths are resolved against the directory of the config file.
struct RunConfig {
  std::uint64_t seed = 0;
  std::filesystem::path output_dir;
  std::filesystem::path shapes_dir;
  std::filesystem::path template_path;
  std::filesystem::path test_dir;
  std::filesystem::path preprocess_manifest;
  ssm::TrainingConfig training;
  ssm::FitConfig fit;
  eval::EvalConfig evaluation;
  eval::MonteCarloConfig classification;

  [[nodiscard]] nlohmann::json to_json() const;
};

/// Validates the document and applies the shared seed to every section.
[[nodiscard]] RunConfig parse_run_config(const nlohmann::json& doc, const std::filesystem::path& base_dir);
[[nodiscard]] RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace flowssm::cli
