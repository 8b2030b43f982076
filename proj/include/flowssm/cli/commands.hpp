#pragma once

#include <cstdint>
#include <exception>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace flowssm::cli {

/// Process exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitNumeric = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitIo = 3;

/// Maps a library error to the exit code contract.
[[nodiscard]] int exit_code_for(const std::exception& e);

struct PreprocessOptions {
  std::filesystem::path in_dir;
  std::filesystem::path template_path;
  std::filesystem::path out_dir;
  int icp_iters = 300;
  double icp_tol = 1e-10;
  std::optional<double> reference_half_extent;
};

struct TrainOptions {
  std::filesystem::path config;
  std::filesystem::path out_dir;  // overrides output_dir from the config when set
};

struct FitOptions {
  std::filesystem::path checkpoint;
  std::filesystem::path target;
  std::filesystem::path out_dir;
  std::filesystem::path config;  // optional, for the fit section
  std::string loss_mode = "symmetric";
  std::optional<int> iters;
  std::optional<double> lr;
  std::optional<int> n_points;
  std::optional<std::uint64_t> seed;
  bool global_only = false;
  std::string format = "obj";
};

struct SampleOptions {
  std::filesystem::path checkpoint;
  std::filesystem::path out_dir;
  int n = 10;
  std::uint64_t seed = 0;
  std::string format = "obj";
};

struct EvaluateOptions {
  std::filesystem::path checkpoint;
  std::filesystem::path test_dir;
  std::filesystem::path out_dir;
  std::filesystem::path config;     // optional
  std::filesystem::path train_dir;  // optional; enables specificity
  std::optional<int> n_samples;
  std::optional<std::uint64_t> seed;
};

struct ClassifyOptions {
  std::filesystem::path latents_csv;
  std::filesystem::path labels_csv;
  std::filesystem::path out_dir;
  std::filesystem::path config;  // optional
  std::optional<int> n_splits;
  std::optional<double> lambda;
  std::optional<std::uint64_t> seed;
};

struct SynthOptions {
  std::filesystem::path spec;
  std::filesystem::path out_dir;
  int n = 10;
};

/// Each command writes its outputs atomically into its output directory
/// (holding an exclusive lock on it) and finishes with run.json.
void run_preprocess(const PreprocessOptions& o);
void run_train(const TrainOptions& o);
void run_fit(const FitOptions& o);
void run_sample(const SampleOptions& o);
void run_evaluate(const EvaluateOptions& o);
void run_classify(const ClassifyOptions& o);
void run_synth(const SynthOptions& o);

/// Mesh files (.obj, .ply) of a directory in name order.
[[nodiscard]] std::vector<std::filesystem::path> list_meshes(const std::filesystem::path& dir);

}  // namespace flowssm::cli
