#include <doctest.h>

#include <cmath>
#include <random>

#include "flowssm/common/error.hpp"
#include "flowssm/eval/evaluation.hpp"
#include "flowssm/eval/svm.hpp"
#include "helpers.hpp"

using namespace flowssm;
using namespace flowssm::eval;

namespace {

struct Blobs {
  Matrix x;
  std::vector<int> y;
};

Blobs two_blobs(int per_class, double separation, std::uint64_t seed, Eigen::Index dim = 2) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 0.3);
  Blobs b;
  b.x.resize(2 * per_class, dim);
  for (int i = 0; i < 2 * per_class; ++i) {
    const int label = i < per_class ? 1 : -1;
    for (Eigen::Index c = 0; c < dim; ++c) b.x(i, c) = n(rng) + (c == 0 ? label * separation / 2 : 0.0);
    b.y.push_back(label);
  }
  return b;
}

}  // namespace

TEST_CASE("separable blobs are classified perfectly at every fraction") {
  const auto b = two_blobs(50, 6.0, 1);
  MonteCarloConfig cfg;
  cfg.n_splits = 100;
  const auto curve = classify_monte_carlo(b.x, b.y, cfg);
  REQUIRE(curve.size() == 9);
  for (const auto& r : curve) {
    CHECK(r.mean == 1.0);
    CHECK(r.n_splits == 100);
  }
}

TEST_CASE("shuffled labels give chance accuracy") {
  auto b = two_blobs(100, 6.0, 2);
  std::shuffle(b.y.begin(), b.y.end(), std::mt19937_64(3));
  MonteCarloConfig cfg;
  cfg.n_splits = 300;
  cfg.train_fractions = {0.5};
  const auto curve = classify_monte_carlo(b.x, b.y, cfg);
  CHECK(std::abs(curve[0].mean - 0.5) <= 0.05);
}

TEST_CASE("linear SVM recovers the max-margin separator of a hand-built problem") {
  Matrix x(6, 2);
  x << 2, 0, 3, 1, 3, -1, -2, 0, -3, 1, -3, -1;
  const std::vector<int> y{1, 1, 1, -1, -1, -1};
  const auto svm = train_svm(x, y, {0.1, 20000});
  // hard margin: w = (0.5, 0), b = 0
  CHECK((svm.w - Eigen::Vector2d(0.5, 0.0)).norm() <= 0.05 * 0.5);
  CHECK(std::abs(svm.b) <= 0.05 * 0.5);
  for (Eigen::Index i = 0; i < 6; ++i) CHECK(svm.predict(x.row(i).transpose()) == y[static_cast<std::size_t>(i)]);
}

TEST_CASE("classification is reproducible and validates its inputs") {
  const auto b = two_blobs(10, 1.0, 4);
  MonteCarloConfig cfg;
  cfg.n_splits = 20;
  cfg.seed = 5;
  const auto first = classify_monte_carlo(b.x, b.y, cfg);
  const auto second = classify_monte_carlo(b.x, b.y, cfg);
  for (std::size_t i = 0; i < first.size(); ++i) CHECK(first[i].mean == second[i].mean);

  CHECK_THROWS_AS((void)classify_monte_carlo(b.x, std::vector<int>(20, 1), cfg), DegenerateLabels);
  auto bad = b.y;
  bad[0] = 2;
  CHECK_THROWS_AS((void)train_svm(b.x, bad, {}), InvalidArgument);
  CHECK_THROWS_AS((void)train_svm(b.x, std::vector<int>(3, 1), {}), ShapeMismatch);
}

TEST_CASE("paired t-test matches a reference implementation") {
  const std::vector<double> a{1.2, 0.9, 1.5, 1.1, 1.3, 0.8}, b{1.0, 0.85, 1.1, 1.05, 0.9, 0.82};
  const auto r = paired_t_test(a, b);
  // scipy.stats.ttest_rel(a, b)
  CHECK(r.t == doctest::Approx(2.38415824271708).epsilon(1e-10));
  CHECK(r.p_two_sided == doctest::Approx(0.06284049099893624).epsilon(1e-8));
  CHECK(r.n == 6);
  CHECK(r.mean_difference == doctest::Approx((1.2 + 0.9 + 1.5 + 1.1 + 1.3 + 0.8 - 1.0 - 0.85 - 1.1 - 1.05 - 0.9 - 0.82) / 6));
  CHECK_THROWS((void)paired_t_test({1.0}, {2.0}));
  CHECK_THROWS((void)paired_t_test({1.0, 2.0}, {2.0}));
}

TEST_CASE("summaries use the sample standard deviation") {
  const auto s = summarize({1.0, 2.0, 3.0, 4.0});
  CHECK(s.mean == 2.5);
  CHECK(s.stddev == doctest::Approx(std::sqrt(5.0 / 3.0)));
  CHECK(summarize({}).mean == 0.0);
}

TEST_CASE("report converts to model units with the stored scale") {
  EvalReport r;
  r.normalization_scale = 0.5;
  r.generality = {{"a", 0.1, 0.2, 0.01, false, 0}, {"b", 0.3, 0.4, 0.02, true, 3}};
  r.specificity = {{0, 0.2, 1, false, 0}};
  r.finalize();
  CHECK(r.generality_summary.mean == doctest::Approx(0.2));
  CHECK(r.sim_generality == 1);
  CHECK(r.sim_specificity == 0);
  const auto j = r.to_json();
  CHECK(j["generality"]["mean_model_units"].get<double>() == doctest::Approx(0.4));
  CHECK(r.generality_csv().find("name") == 0);
  CHECK(r.specificity_csv().find('\n') != std::string::npos);
}
