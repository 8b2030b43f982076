#include "flowssm/cli/run_config.hpp"

#include <set>

#include "flowssm/common/atomic_file.hpp"
#include "flowssm/common/error.hpp"

namespace flowssm::cli {

namespace {

void reject_unknown(const nlohmann::json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

template <typename T>
void get_optional(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) j.at(key).get_to(out);
}

std::filesystem::path resolve(const nlohmann::json& j, const char* key, const std::filesystem::path& base) {
  if (!j.contains(key)) return {};
  std::filesystem::path p = j.at(key).get<std::string>();
  return p.is_relative() ? base / p : p;
}

}  // namespace

RunConfig parse_run_config(const nlohmann::json& doc, const std::filesystem::path& base_dir) {
  try {
    reject_unknown(doc, {"seed", "output_dir", "data", "training", "fit", "evaluation", "classification"}, "run config");
    RunConfig c;
    get_optional(doc, "seed", c.seed);
    c.output_dir = resolve(doc, "output_dir", base_dir);
    if (doc.contains("data")) {
      const auto& d = doc.at("data");
      reject_unknown(d, {"shapes_dir", "template", "test_dir", "preprocess_manifest"}, "data");
      c.shapes_dir = resolve(d, "shapes_dir", base_dir);
      c.template_path = resolve(d, "template", base_dir);
      c.test_dir = resolve(d, "test_dir", base_dir);
      c.preprocess_manifest = resolve(d, "preprocess_manifest", base_dir);
    }
    if (doc.contains("training")) {
      const auto& t = doc.at("training");
      if (t.is_object() && t.contains("seed")) throw ConfigError("set the seed at the top level of the run config");
      c.training = t.get<ssm::TrainingConfig>();
    }
    c.training.seed = c.seed;
    c.training.validate();
    if (doc.contains("fit")) {
      const auto& f = doc.at("fit");
      reject_unknown(f, {"iters", "lr", "init_std", "n_sample_points", "use_local"}, "fit");
      get_optional(f, "iters", c.fit.iters);
      get_optional(f, "lr", c.fit.lr);
      get_optional(f, "init_std", c.fit.init_std);
      get_optional(f, "n_sample_points", c.fit.n_sample_points);
      get_optional(f, "use_local", c.fit.use_local);
    }
    if (c.fit.iters < 0 || c.fit.lr <= 0.0 || c.fit.init_std < 0.0 || c.fit.n_sample_points < 1) {
      throw ConfigError("invalid fit section");
    }
    c.fit.seed = c.seed;
    if (doc.contains("evaluation")) {
      const auto& e = doc.at("evaluation");
      reject_unknown(e, {"assd_samples", "chamfer_points", "n_specificity_samples"}, "evaluation");
      get_optional(e, "assd_samples", c.evaluation.assd_samples);
      get_optional(e, "chamfer_points", c.evaluation.chamfer_points);
      get_optional(e, "n_specificity_samples", c.evaluation.n_specificity_samples);
    }
    if (c.evaluation.assd_samples < 1 || c.evaluation.chamfer_points < 1 || c.evaluation.n_specificity_samples < 0) {
      throw ConfigError("invalid evaluation section");
    }
    c.evaluation.fit = c.fit;
    c.evaluation.seed = c.seed;
    if (doc.contains("classification")) {
      const auto& k = doc.at("classification");
      reject_unknown(k, {"lambda", "svm_iters", "n_splits", "train_fractions"}, "classification");
      get_optional(k, "lambda", c.classification.svm.lambda);
      get_optional(k, "svm_iters", c.classification.svm.iters);
      get_optional(k, "n_splits", c.classification.n_splits);
      get_optional(k, "train_fractions", c.classification.train_fractions);
    }
    if (c.classification.svm.lambda <= 0.0 || c.classification.svm.iters < 1 || c.classification.n_splits < 1) {
      throw ConfigError("invalid classification section");
    }
    for (double f : c.classification.train_fractions) {
      if (!(f > 0.0 && f < 1.0)) throw ConfigError("training fractions must lie in (0, 1)");
    }
    c.classification.seed = c.seed;
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed run config: ") + e.what());
  }
}

RunConfig load_run_config(const std::filesystem::path& path) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("cannot parse " + path.string() + ": " + e.what());
  }
  return parse_run_config(doc, path.parent_path());
}

nlohmann::json RunConfig::to_json() const {
  nlohmann::json training_json = training;
  training_json.erase("seed");
  return nlohmann::json{
      {"seed", seed},
      {"output_dir", output_dir.string()},
      {"data",
       {{"shapes_dir", shapes_dir.string()},
        {"template", template_path.string()},
        {"test_dir", test_dir.string()},
        {"preprocess_manifest", preprocess_manifest.string()}}},
      {"training", training_json},
      {"fit",
       {{"iters", fit.iters},
        {"lr", fit.lr},
        {"init_std", fit.init_std},
        {"n_sample_points", fit.n_sample_points},
        {"use_local", fit.use_local}}},
      {"evaluation",
       {{"assd_samples", evaluation.assd_samples},
        {"chamfer_points", evaluation.chamfer_points},
        {"n_specificity_samples", evaluation.n_specificity_samples}}},
      {"classification",
       {{"lambda", classification.svm.lambda},
        {"svm_iters", classification.svm.iters},
        {"n_splits", classification.n_splits},
        {"train_fractions", classification.train_fractions}}}};
}

}  // namespace flowssm::cli
