#include "flowssm/eval/svm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "flowssm/common/error.hpp"
#include "flowssm/common/seed.hpp"

namespace flowssm::eval {

namespace {

void check_labels(const Matrix& features, const std::vector<int>& labels) {
  if (static_cast<Eigen::Index>(labels.size()) != features.rows()) {
    throw ShapeMismatch("label count does not match feature rows");
  }
  bool pos = false, neg = false;
  for (int y : labels) {
    if (y != 1 && y != -1) throw InvalidArgument("labels must be +1 or -1");
    pos |= y == 1;
    neg |= y == -1;
  }
  if (!pos || !neg) throw DegenerateLabels("classification needs both classes");
}

}  // namespace

LinearSvm train_svm(const Matrix& features, const std::vector<int>& labels, const SvmConfig& cfg) {
  check_labels(features, labels);
  if (cfg.lambda <= 0.0 || cfg.iters < 1) throw InvalidArgument("SVM needs lambda > 0 and iters >= 1");
  const auto n = features.rows();
  const auto dim = features.cols();
  const double upper = 1.0 / (cfg.lambda * static_cast<double>(n));

  // Bias folded in as a constant feature of value 1.
  Matrix x(n, dim + 1);
  x << features, Vector::Ones(n);
  const Vector q = x.rowwise().squaredNorm();
  Vector alpha = Vector::Zero(n);
  Vector w = Vector::Zero(dim + 1);
  for (int pass = 0; pass < cfg.iters; ++pass) {
    double pg_max = -std::numeric_limits<double>::infinity();
    double pg_min = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < n; ++i) {
      const double y = labels[static_cast<std::size_t>(i)];
      const double g = y * x.row(i).dot(w) - 1.0;
      double pg = g;
      if (alpha(i) <= 0.0) pg = std::min(g, 0.0);
      if (alpha(i) >= upper) pg = std::max(g, 0.0);
      pg_max = std::max(pg_max, pg);
      pg_min = std::min(pg_min, pg);
      if (pg == 0.0 || q(i) == 0.0) continue;
      const double next = std::clamp(alpha(i) - g / q(i), 0.0, upper);
      w += (next - alpha(i)) * y * x.row(i).transpose();
      alpha(i) = next;
    }
    if (pg_max - pg_min < cfg.tol) break;
  }
  LinearSvm svm;
  svm.w = w.head(dim);
  svm.b = w(dim);
  svm.lambda = cfg.lambda;
  return svm;
}

std::vector<FractionAccuracy> classify_monte_carlo(const Matrix& features, const std::vector<int>& labels,
                                                   const MonteCarloConfig& cfg) {
  check_labels(features, labels);
  if (cfg.n_splits < 1) throw InvalidArgument("need at least one split");
  std::vector<Eigen::Index> pos, neg;
  for (std::size_t i = 0; i < labels.size(); ++i) (labels[i] == 1 ? pos : neg).push_back(static_cast<Eigen::Index>(i));
  if (pos.size() < 2 || neg.size() < 2) throw DegenerateLabels("each class needs at least two cases for splitting");

  auto train_count = [](double f, std::size_t n_class) {
    const auto k = static_cast<std::size_t>(std::lround(f * static_cast<double>(n_class)));
    return std::clamp<std::size_t>(k, 1, n_class - 1);
  };

  std::vector<FractionAccuracy> out;
  for (std::size_t fi = 0; fi < cfg.train_fractions.size(); ++fi) {
    const double f = cfg.train_fractions[fi];
    if (!(f > 0.0 && f < 1.0)) throw InvalidArgument("training fractions must lie in (0, 1)");
    const auto k_pos = train_count(f, pos.size());
    const auto k_neg = train_count(f, neg.size());
    std::mt19937_64 rng(derive_seed(cfg.seed, {fi}));
    std::vector<double> acc;
    acc.reserve(static_cast<std::size_t>(cfg.n_splits));
    auto p = pos;
    auto q = neg;
    for (int s = 0; s < cfg.n_splits; ++s) {
      std::shuffle(p.begin(), p.end(), rng);
      std::shuffle(q.begin(), q.end(), rng);
      std::vector<Eigen::Index> train_idx(p.begin(), p.begin() + static_cast<std::ptrdiff_t>(k_pos));
      train_idx.insert(train_idx.end(), q.begin(), q.begin() + static_cast<std::ptrdiff_t>(k_neg));
      std::vector<Eigen::Index> test_idx(p.begin() + static_cast<std::ptrdiff_t>(k_pos), p.end());
      test_idx.insert(test_idx.end(), q.begin() + static_cast<std::ptrdiff_t>(k_neg), q.end());

      Matrix x_train = features(train_idx, Eigen::all);
      std::vector<int> y_train;
      for (auto i : train_idx) y_train.push_back(labels[static_cast<std::size_t>(i)]);
      const Eigen::RowVectorXd mu = x_train.colwise().mean();
      Eigen::RowVectorXd sd = ((x_train.rowwise() - mu).array().square().colwise().sum() /
                               static_cast<double>(std::max<Eigen::Index>(1, x_train.rows() - 1)))
                                  .sqrt();
      for (Eigen::Index c = 0; c < sd.size(); ++c) {
        if (!(sd(c) > 1e-12)) sd(c) = 1.0;
      }
      x_train = (x_train.rowwise() - mu).array().rowwise() / sd.array();
      const LinearSvm svm = train_svm(x_train, y_train, cfg.svm);

      int correct = 0;
      for (auto i : test_idx) {
        const Vector x = ((features.row(i) - mu).array() / sd.array()).matrix().transpose();
        correct += svm.predict(x) == labels[static_cast<std::size_t>(i)];
      }
      acc.push_back(static_cast<double>(correct) / static_cast<double>(test_idx.size()));
    }
    FractionAccuracy r;
    r.fraction = f;
    r.n_splits = cfg.n_splits;
    const Eigen::Map<const Vector> a(acc.data(), static_cast<Eigen::Index>(acc.size()));
    r.mean = a.mean();
    r.stddev = a.size() > 1 ? std::sqrt((a.array() - r.mean).square().sum() / static_cast<double>(a.size() - 1)) : 0.0;
    out.push_back(r);
  }
  return out;
}

}  // namespace flowssm::eval
