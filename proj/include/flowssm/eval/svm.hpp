#pragma once

#include <cstdint>
#include <vector>

#include "flowssm/common/types.hpp"

namespace flowssm::eval {

struct LinearSvm {
  Vector w;
  double b = 0.0;
  double lambda = 1e-2;

  [[nodiscard]] double decision(const Vector& x) const { return w.dot(x) + b; }
  /// sign(w.x + b), with 0 mapped to +1.
  [[nodiscard]] int predict(const Vector& x) const { return decision(x) >= 0.0 ? 1 : -1; }
};

struct SvmConfig {
  double lambda = 1e-2;
  /// Cap on passes over the training set.
  int iters = 1000;
  /// Stop once the projected-gradient spread drops below this.
  double tol = 1e-9;
};

/// Minimizes
///   lambda/2 (|w|^2 + b^2) + 1/n sum_i max(0, 1 - y_i (w.x_i + b))
/// by cyclic dual coordinate descent with the bias as an extra constant feature.
/// Labels must be +-1 with both classes present (DegenerateLabels).
[[nodiscard]] LinearSvm train_svm(const Matrix& features, const std::vector<int>& labels, const SvmConfig& cfg);

struct FractionAccuracy {
  double fraction = 0.0;
  double mean = 0.0;
  double stddev = 0.0;
  int n_splits = 0;
};

struct MonteCarloConfig {
  std::vector<double> train_fractions{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  int n_splits = 1000;
  SvmConfig svm;
  std::uint64_t seed = 0;
};

/// Stratified Monte-Carlo cross-validation. Each split draws round(f * n_c)
/// training cases per class (at least one, leaving at least one for testing),
/// standardizes features on the training part and scores the rest.
[[nodiscard]] std::vector<FractionAccuracy> classify_monte_carlo(const Matrix& features, const std::vector<int>& labels,
                                                                 const MonteCarloConfig& cfg);

}  // namespace flowssm::eval
