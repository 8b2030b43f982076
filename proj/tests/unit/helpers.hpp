#pragma once

#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>

#include "flowssm/autodiff/tensor.hpp"
#include "flowssm/common/types.hpp"
#include "flowssm/geometry/mesh.hpp"

namespace flowssm::test {

inline geometry::TriMesh unit_cube() {
  geometry::TriMesh m;
  m.vertices.resize(8, 3);
  for (int i = 0; i < 8; ++i) m.vertices.row(i) << (i & 1), (i >> 1) & 1, (i >> 2) & 1;
  m.faces.resize(12, 3);
  m.faces << 0, 2, 1, 1, 2, 3, 4, 5, 6, 5, 7, 6, 0, 1, 4, 1, 5, 4, 2, 6, 3, 3, 6, 7, 0, 4, 2, 2, 4, 6, 1, 3, 5, 3, 7,
      5;
  return m;
}

inline geometry::TriMesh single_triangle(const Vec3& a, const Vec3& b, const Vec3& c) {
  geometry::TriMesh m;
  m.vertices.resize(3, 3);
  m.vertices.row(0) = a.transpose();
  m.vertices.row(1) = b.transpose();
  m.vertices.row(2) = c.transpose();
  m.faces.resize(1, 3);
  m.faces << 0, 1, 2;
  return m;
}

inline Points random_points(Eigen::Index n, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  Points p(n, 3);
  for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = u(rng);
  return p;
}

inline Matrix random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("flowssm_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

/// Relative error |a - n| / max(|a|, |n|, floor).
inline double rel_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Largest relative error between the recorded gradient of f w.r.t. `param`
/// and central differences, probing `probes` randomly chosen entries.
inline double max_fd_error(const std::function<ad::Tensor()>& f, ad::Tensor param, int probes, std::uint64_t seed,
                           double h = 1e-5) {
  param.zero_grad();
  ad::backward(f());
  const Matrix g = param.grad();
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<Eigen::Index> pick(0, param.size() - 1);
  double worst = 0.0;
  for (int p = 0; p < probes; ++p) {
    const Eigen::Index i = probes >= param.size() ? p % param.size() : pick(rng);
    double& v = param.mutable_value().data()[i];
    const double v0 = v;
    double fp, fm;
    {
      ad::NoGradGuard ng;
      v = v0 + h;
      fp = f().item();
      v = v0 - h;
      fm = f().item();
    }
    v = v0;
    worst = std::max(worst, rel_error(g.data()[i], (fp - fm) / (2 * h)));
  }
  param.zero_grad();
  return worst;
}

}  // namespace flowssm::test
