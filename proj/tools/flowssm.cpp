#include <iostream>

#include <CLI11.hpp>

#include "flowssm/cli/commands.hpp"
#include "flowssm/ssm/model.hpp"

using namespace flowssm::cli;

int main(int argc, char** argv) {
  CLI::App app{"FlowSSM: statistical shape models from learned template flows", "flowssm"};
  app.set_version_flag("--version", std::string(flowssm::ssm::kSoftwareVersion));
  app.require_subcommand(1);

  PreprocessOptions pre;
  auto* c_pre = app.add_subcommand("preprocess", "Rigidly align meshes to a template and normalize them jointly");
  c_pre->add_option("in_dir", pre.in_dir, "Directory of .obj/.ply meshes")->required();
  c_pre->add_option("--template", pre.template_path, "Template mesh")->required()->check(CLI::ExistingFile);
  c_pre->add_option("-o,--out", pre.out_dir, "Output directory")->required();
  c_pre->add_option("--icp-iters", pre.icp_iters, "ICP iteration cap");
  c_pre->add_option("--icp-tol", pre.icp_tol, "ICP RMS change tolerance");
  c_pre->add_option("--reference-half-extent", pre.reference_half_extent, "Fixed half extent for scaling");

  TrainOptions train;
  auto* c_train = app.add_subcommand("train", "Train a model from a run config");
  c_train->add_option("config", train.config, "Run config JSON")->required()->check(CLI::ExistingFile);
  c_train->add_option("-o,--out", train.out_dir, "Output directory (overrides output_dir)");

  FitOptions fit;
  auto* c_fit = app.add_subcommand("fit", "Fit a trained model to a mesh or point file");
  c_fit->add_option("checkpoint", fit.checkpoint, "Model checkpoint")->required();
  c_fit->add_option("target", fit.target, "Target mesh (.obj/.ply) or points (.xyz/.pts/.txt/.csv)")->required();
  c_fit->add_option("-o,--out", fit.out_dir, "Output directory")->required();
  c_fit->add_option("--config", fit.config, "Run config JSON (fit section)")->check(CLI::ExistingFile);
  c_fit->add_option("--loss-mode", fit.loss_mode,
                    "symmetric, one_sided_deformed_to_target, one_sided_target_to_deformed, or one_sided/partial/sparse");
  c_fit->add_option("--iters", fit.iters, "Iterations per phase");
  c_fit->add_option("--lr", fit.lr, "Learning rate");
  c_fit->add_option("--n-points", fit.n_points, "Samples per iteration");
  c_fit->add_option("--seed", fit.seed, "Random seed");
  c_fit->add_flag("--global-only", fit.global_only, "Skip the local phase");
  c_fit->add_option("--format", fit.format, "obj, ply or ply_ascii");

  SampleOptions sample;
  auto* c_sample = app.add_subcommand("sample", "Draw random shapes from the PCA latent model");
  c_sample->add_option("checkpoint", sample.checkpoint, "Model checkpoint")->required();
  c_sample->add_option("-o,--out", sample.out_dir, "Output directory")->required();
  c_sample->add_option("--n", sample.n, "Number of shapes");
  c_sample->add_option("--seed", sample.seed, "Random seed");
  c_sample->add_option("--format", sample.format, "obj, ply or ply_ascii");

  EvaluateOptions ev;
  auto* c_eval = app.add_subcommand("evaluate", "Generality, specificity and self-intersection report");
  c_eval->add_option("checkpoint", ev.checkpoint, "Model checkpoint")->required();
  c_eval->add_option("test_dir", ev.test_dir, "Directory of held-out meshes");
  c_eval->add_option("-o,--out", ev.out_dir, "Output directory")->required();
  c_eval->add_option("--config", ev.config, "Run config JSON")->check(CLI::ExistingFile);
  c_eval->add_option("--train-dir", ev.train_dir, "Training meshes; enables specificity");
  c_eval->add_option("--n-samples", ev.n_samples, "Specificity sample count");
  c_eval->add_option("--seed", ev.seed, "Random seed");

  ClassifyOptions cls;
  auto* c_cls = app.add_subcommand("classify", "Monte-Carlo linear SVM accuracy on latent features");
  c_cls->add_option("latents", cls.latents_csv, "Latent CSV (name, features...)")->required();
  c_cls->add_option("labels", cls.labels_csv, "Label CSV (name, +1/-1)")->required();
  c_cls->add_option("-o,--out", cls.out_dir, "Output directory")->required();
  c_cls->add_option("--config", cls.config, "Run config JSON")->check(CLI::ExistingFile);
  c_cls->add_option("--n-splits", cls.n_splits, "Splits per training fraction");
  c_cls->add_option("--lambda", cls.lambda, "SVM regularization");
  c_cls->add_option("--seed", cls.seed, "Random seed");

  SynthOptions syn;
  auto* c_syn = app.add_subcommand("synth", "Generate a synthetic shape family");
  c_syn->add_option("spec", syn.spec, "Family spec JSON")->required()->check(CLI::ExistingFile);
  c_syn->add_option("-o,--out", syn.out_dir, "Output directory")->required();
  c_syn->add_option("--n", syn.n, "Number of members");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*c_pre) run_preprocess(pre);
    if (*c_train) run_train(train);
    if (*c_fit) run_fit(fit);
    if (*c_sample) run_sample(sample);
    if (*c_eval) run_evaluate(ev);
    if (*c_cls) run_classify(cls);
    if (*c_syn) run_synth(syn);
  } catch (const std::exception& e) {
    std::cerr << "flowssm: " << e.what() << '\n';
    return exit_code_for(e);
  }
  return kExitOk;
}
