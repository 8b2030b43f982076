#include "flowssm/eval/evaluation.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <random>
#include <sstream>

#include <boost/math/distributions/students_t.hpp>

#include "flowssm/common/error.hpp"
#include "flowssm/common/parallel.hpp"
#include "flowssm/common/seed.hpp"
#include "flowssm/geometry/distance.hpp"
#include "flowssm/geometry/kdtree.hpp"
#include "flowssm/geometry/sampling.hpp"
#include "flowssm/geometry/self_intersection.hpp"

namespace flowssm::eval {

namespace {

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

Summary summarize(const std::vector<double>& values) {
  Summary s;
  if (values.empty()) return s;
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.stddev = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return s;
}

std::vector<GeneralityRecord> evaluate_generality(const ssm::FlowSsmModel& model,
                                                  const std::vector<geometry::TriMesh>& test_shapes,
                                                  const EvalConfig& cfg, const std::vector<std::string>& names) {
  std::vector<GeneralityRecord> out(test_shapes.size());
  parallel_for(test_shapes.size(), [&](std::size_t i) {
    const auto& target_mesh = test_shapes[i];
    target_mesh.validate();
    ssm::FitConfig fit = cfg.fit;
    fit.seed = derive_seed(cfg.seed, {0, i});
    const auto target = geometry::sample_surface(target_mesh, fit.n_sample_points, derive_seed(cfg.seed, {1, i}));
    const auto result = ssm::fit_latent(model, target, fit);

    GeneralityRecord r;
    r.name = i < names.size() ? names[i] : "shape_" + std::to_string(i);
    const auto assd_seed = derive_seed(cfg.seed, {2, i});
    r.assd = geometry::average_symmetric_surface_distance(result.mesh, target_mesh, cfg.assd_samples, assd_seed);
    r.assd_global =
        fit.use_local
            ? geometry::average_symmetric_surface_distance(result.global_mesh, target_mesh, cfg.assd_samples, assd_seed)
            : r.assd;
    r.fit_loss = result.final_loss;
    const auto sim = geometry::count_self_intersections(result.mesh);
    r.self_intersecting = sim.is_self_intersecting;
    r.intersecting_pairs = sim.intersecting_face_pairs;
    out[i] = std::move(r);
  });
  return out;
}

latent::LatentState uniform_box_latents(const ssm::FlowSsmModel& model, std::uint64_t seed) {
  const auto& train = model.training_latents;
  if (train.empty()) throw InvalidArgument("model has no training latents");
  Vector g_lo = train.front().z_global, g_hi = g_lo;
  Matrix l_lo = train.front().z_local, l_hi = l_lo;
  for (const auto& z : train) {
    g_lo = g_lo.cwiseMin(z.z_global);
    g_hi = g_hi.cwiseMax(z.z_global);
    l_lo = l_lo.cwiseMin(z.z_local);
    l_hi = l_hi.cwiseMax(z.z_local);
  }
  std::mt19937_64 rng(derive_seed(seed, {7}));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  latent::LatentState z;
  z.z_global.resize(g_lo.size());
  for (Eigen::Index i = 0; i < g_lo.size(); ++i) z.z_global(i) = g_lo(i) + u(rng) * (g_hi(i) - g_lo(i));
  z.z_local.resize(l_lo.rows(), l_lo.cols());
  for (Eigen::Index i = 0; i < l_lo.size(); ++i) z.z_local.data()[i] = l_lo.data()[i] + u(rng) * (l_hi.data()[i] - l_lo.data()[i]);
  return z;
}

std::vector<SpecificityRecord> evaluate_specificity(const ssm::FlowSsmModel& model,
                                                    const std::vector<geometry::TriMesh>& training_shapes,
                                                    const EvalConfig& cfg, LatentSampler sampler) {
  if (training_shapes.empty()) throw InvalidArgument("specificity needs training shapes");
  if (cfg.n_specificity_samples < 0) throw InvalidArgument("sample count must be non-negative");
  std::vector<geometry::KdTree> train_trees;
  for (std::size_t i = 0; i < training_shapes.size(); ++i) {
    train_trees.emplace_back(
        geometry::sample_surface(training_shapes[i], cfg.chamfer_points, derive_seed(cfg.seed, {1, i})).points);
  }
  std::vector<SpecificityRecord> out(static_cast<std::size_t>(cfg.n_specificity_samples));
  parallel_for(out.size(), [&](std::size_t s) {
    const auto sample_seed = derive_seed(cfg.seed, {2, s});
    const geometry::TriMesh mesh = sampler == LatentSampler::Pca
                                       ? ssm::sample_shape(model, sample_seed).mesh
                                       : model.deform_template(uniform_box_latents(model, sample_seed));
    const geometry::KdTree tree(
        geometry::sample_surface(mesh, cfg.chamfer_points, derive_seed(cfg.seed, {3, s}))
            .points);
    SpecificityRecord r;
    r.index = static_cast<int>(s);
    r.chamfer = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < train_trees.size(); ++i) {
      const double c = geometry::chamfer_distance(tree, train_trees[i]);
      if (c < r.chamfer) {
        r.chamfer = c;
        r.nearest_training_shape = static_cast<Eigen::Index>(i);
      }
    }
    const auto sim = geometry::count_self_intersections(mesh);
    r.self_intersecting = sim.is_self_intersecting;
    r.intersecting_pairs = sim.intersecting_face_pairs;
    out[s] = r;
  });
  return out;
}

PairedTest paired_t_test(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw ShapeMismatch("paired samples differ in length");
  if (a.size() < 2) throw InvalidArgument("a paired t-test needs at least two pairs");
  std::vector<double> diff(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) diff[i] = a[i] - b[i];
  const Summary s = summarize(diff);
  PairedTest out;
  out.n = static_cast<int>(a.size());
  out.mean_difference = s.mean;
  if (s.stddev == 0.0) {
    out.t = s.mean == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), s.mean);
    out.p_two_sided = s.mean == 0.0 ? 1.0 : 0.0;
    return out;
  }
  out.t = s.mean / (s.stddev / std::sqrt(static_cast<double>(out.n)));
  const boost::math::students_t dist(out.n - 1);
  out.p_two_sided = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(out.t)));
  return out;
}

AblationReport ablate_global_vs_local(const ssm::FlowSsmModel& model, const std::vector<geometry::TriMesh>& test_shapes,
                                      const EvalConfig& cfg) {
  EvalConfig both = cfg;
  both.fit.use_local = true;
  AblationReport report;
  for (const auto& r : evaluate_generality(model, test_shapes, both)) {
    report.global_only.push_back(r.assd_global);
    report.global_and_local.push_back(r.assd);
  }
  report.global_summary = summarize(report.global_only);
  report.combined_summary = summarize(report.global_and_local);
  if (report.global_only.size() >= 2) report.test = paired_t_test(report.global_only, report.global_and_local);
  return report;
}

AblationReport ablate_global_vs_local(const std::vector<geometry::TriMesh>& shapes,
                                      const geometry::TriMesh& template_mesh,
                                      const std::vector<geometry::TriMesh>& test_shapes,
                                      const ssm::TrainingConfig& train_cfg, const EvalConfig& cfg) {
  ssm::TrainingConfig c = train_cfg;
  c.train_local = true;
  const auto trained = ssm::train(shapes, template_mesh, c);
  return ablate_global_vs_local(trained.model, test_shapes, cfg);
}

void EvalReport::finalize() {
  std::vector<double> g, s;
  sim_generality = 0;
  sim_specificity = 0;
  for (const auto& r : generality) {
    g.push_back(r.assd);
    sim_generality += r.self_intersecting;
  }
  for (const auto& r : specificity) {
    s.push_back(r.chamfer);
    sim_specificity += r.self_intersecting;
  }
  generality_summary = summarize(g);
  specificity_summary = summarize(s);
}

nlohmann::json EvalReport::to_json() const {
  auto summary = [&](const Summary& s) {
    return nlohmann::json{{"mean", s.mean},
                          {"std", s.stddev},
                          {"mean_model_units", s.mean / normalization_scale},
                          {"std_model_units", s.stddev / normalization_scale}};
  };
  nlohmann::json j;
  j["generality"] = summary(generality_summary);
  j["generality"]["n"] = generality.size();
  j["specificity"] = summary(specificity_summary);
  j["specificity"]["n"] = specificity.size();
  j["sim"] = {{"generality", sim_generality}, {"specificity", sim_specificity}};
  j["normalization_scale"] = normalization_scale;
  j["config"] = config;
  j["generality_records"] = nlohmann::json::array();
  for (const auto& r : generality) {
    j["generality_records"].push_back({{"name", r.name},
                                       {"assd", r.assd},
                                       {"assd_model_units", r.assd / normalization_scale},
                                       {"assd_global_only", r.assd_global},
                                       {"fit_loss", r.fit_loss},
                                       {"self_intersecting", r.self_intersecting},
                                       {"intersecting_pairs", r.intersecting_pairs}});
  }
  j["specificity_records"] = nlohmann::json::array();
  for (const auto& r : specificity) {
    j["specificity_records"].push_back({{"index", r.index},
                                        {"chamfer", r.chamfer},
                                        {"nearest_training_shape", r.nearest_training_shape},
                                        {"self_intersecting", r.self_intersecting},
                                        {"intersecting_pairs", r.intersecting_pairs}});
  }
  return j;
}

std::string EvalReport::generality_csv() const {
  std::ostringstream out;
  out << "name,assd,assd_model_units,assd_global_only,fit_loss,self_intersecting,intersecting_pairs\n";
  for (const auto& r : generality) {
    out << r.name << ',' << format_double(r.assd) << ',' << format_double(r.assd / normalization_scale) << ','
        << format_double(r.assd_global) << ',' << format_double(r.fit_loss) << ',' << (r.self_intersecting ? 1 : 0)
        << ',' << r.intersecting_pairs << '\n';
  }
  return std::move(out).str();
}

std::string EvalReport::specificity_csv() const {
  std::ostringstream out;
  out << "index,chamfer,chamfer_model_units,nearest_training_shape,self_intersecting,intersecting_pairs\n";
  for (const auto& r : specificity) {
    out << r.index << ',' << format_double(r.chamfer) << ',' << format_double(r.chamfer / normalization_scale) << ','
        << r.nearest_training_shape << ',' << (r.self_intersecting ? 1 : 0) << ',' << r.intersecting_pairs << '\n';
  }
  return std::move(out).str();
}

}  // namespace flowssm::eval
