#include <doctest.h>

#include <cmath>

#include "flowssm/autodiff/ops.hpp"
#include "flowssm/common/error.hpp"
#include "flowssm/latent/latent.hpp"
#include "flowssm/synth/synth.hpp"
#include "helpers.hpp"

using namespace flowssm;
using namespace flowssm::latent;
using ad::Tensor;
using flowssm::test::max_fd_error;
using flowssm::test::random_matrix;

namespace {

ControlPointSet make_cps(const Points& positions, const std::vector<double>& eps) {
  ControlPointSet cps;
  cps.positions = positions;
  Matrix e(1, static_cast<Eigen::Index>(eps.size()));
  for (std::size_t k = 0; k < eps.size(); ++k) e(0, static_cast<Eigen::Index>(k)) = eps[k];
  cps.inverse_widths = Tensor::parameter(e, {e.cols()});
  return cps;
}

flow::ImNetMlp mlp(int d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  flow::MlpConfig c;
  c.latent_dim = d;
  c.hidden = {10, 10, 8, 6};
  return flow::ImNetMlp(c, rng);
}

double min_pairwise(const Points& p) {
  double best = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < p.rows(); ++j) best = std::min(best, (p.row(i) - p.row(j)).norm());
  }
  return best;
}

}  // namespace

TEST_CASE("place_control_points") {
  const auto sphere = synth::icosphere(4);
  const auto one = place_control_points(sphere, 1, 2.5963, 0);
  CHECK(one.size() == 1);
  CHECK(one.inverse_widths.value()(0, 0) == 2.5963);

  geometry::TriMesh liverish = sphere;
  for (Eigen::Index i = 0; i < liverish.vertex_count(); ++i) {
    liverish.vertices.row(i).array() *= Eigen::RowVector3d(1.0, 0.7, 0.5).array();
  }
  const auto many = place_control_points(liverish, 216, 2.5963, 3);
  CHECK(many.size() == 216);
  CHECK((many.inverse_widths.value().array() == 2.5963).all());
  CHECK(min_pairwise(many.positions) > 0.0);

  CHECK(min_pairwise(place_control_points(sphere, 50, 1.0, 0).positions) >
        min_pairwise(place_control_points(sphere, 200, 1.0, 0).positions));

  CHECK_THROWS_AS((void)place_control_points(sphere, 0, 1.0, 0), InvalidArgument);
  CHECK_THROWS_AS((void)place_control_points(sphere, 4, 0.001, 0), InvalidArgument);
  CHECK_THROWS_AS((void)place_control_points(sphere, 4, 31.0, 0), InvalidArgument);
}

TEST_CASE("interpolate_latent hand cases") {
  Points c(2, 3);
  c << 0, 0, 0, 1, 0, 0;
  const auto cps = make_cps(c, {1.0, 1.0});
  Matrix z(2, 1);
  z << 1, 2;
  const Vector v = interpolate_latent(cps, z, Vec3(0, 0, 0));
  CHECK(std::abs(v(0) - (1.0 + 2.0 * std::exp(-1.0))) < 1e-12);

  Points c1(1, 3);
  c1 << 0.3, -0.2, 0.5;
  const auto single = make_cps(c1, {4.0});
  Matrix z1(1, 2);
  z1 << 0.7, -1.3;
  CHECK((interpolate_latent(single, z1, Vec3(0.3, -0.2, 0.5)) - z1.row(0).transpose()).norm() < 1e-12);

  CHECK(interpolate_latent(cps, Matrix::Zero(2, 3), Vec3(0.4, 1, 2)).isZero(0.0));
}

TEST_CASE("interpolate_latent with three control points in two dimensions") {
  Points c(3, 3);
  c << 0, 0, 0, 1, 0, 0, 0, 2, 0;
  const auto cps = make_cps(c, {1.0, 0.5, 2.0});
  Matrix z(3, 2);
  z << 1, -1, 2, 0.5, -3, 4;
  const Vec3 x(0.5, 0.5, 0.0);
  // squared distances 0.5, 0.5, 2.5
  const double p0 = std::exp(-1.0 * 0.5), p1 = std::exp(-0.25 * 0.5), p2 = std::exp(-4.0 * 2.5);
  const Vector expected = (Vector(2) << p0 * 1 + p1 * 2 + p2 * -3, p0 * -1 + p1 * 0.5 + p2 * 4).finished();
  CHECK((interpolate_latent(cps, z, x) - expected).norm() < 1e-12);

  const Tensor xs = Tensor::constant(Matrix(x.transpose()));
  const auto t = interpolate_latent(cps, Tensor::constant(z), xs);
  CHECK((t.value().row(0).transpose() - expected).norm() < 1e-12);
}

TEST_CASE("rbf_kernel gradients match central differences") {
  std::mt19937_64 rng(1);
  const Points c = test::random_points(4, 2);
  auto x = Tensor::parameter(random_matrix(6, 3, rng, 0.5));
  auto eps = Tensor::parameter(Matrix{{1.2, 0.8, 2.0, 1.5}}, {4});
  const Tensor w = Tensor::constant(random_matrix(6, 4, rng));
  auto f = [&] { return ad::sum(ad::mul(rbf_kernel(x, c, eps), w)); };
  CHECK(max_fd_error(f, x, 18, 3) < 1e-6);
  CHECK(max_fd_error(f, eps, 4, 4) < 1e-6);
}

TEST_CASE("kernel value decreases strictly in the inverse width") {
  Points c(1, 3);
  c << 0.2, 0.1, -0.3;
  const Tensor x = Tensor::constant(Matrix{{0.5, 0.0, 0.1}});
  double previous = 2.0;
  for (double e : {0.1, 0.5, 1.0, 2.0, 5.0}) {
    const double phi = rbf_kernel(x, c, Tensor::constant(Matrix{{e}}, {1})).item();
    CHECK(phi < previous);
    previous = phi;
  }
}

TEST_CASE("compose_deformers identities") {
  std::mt19937_64 rng(5);
  const auto g = mlp(3, 6), l = mlp(3, 7);
  const auto cps = make_cps(test::random_points(5, 8), {2, 2, 2, 2, 2});
  const Tensor pts = Tensor::constant(random_matrix(10, 3, rng, 0.5));
  const flow::FlowConfig cfg;

  const auto zero = compose_deformers(pts, {&g, Tensor::constant(Matrix::Zero(1, 3))},
                                      LocalStage{&l, &cps, Tensor::constant(Matrix::Zero(5, 3))}, cfg);
  CHECK(zero.value() == pts.value());

  const Tensor zg = Tensor::constant(random_matrix(1, 3, rng, 0.3));
  const auto global_only = compose_deformers(pts, {&g, zg}, std::nullopt, cfg);
  CHECK(global_only.value() == flow::integrate_flow(g, pts, zg, cfg).value());
  const auto with_zero_local =
      compose_deformers(pts, {&g, zg}, LocalStage{&l, &cps, Tensor::constant(Matrix::Zero(5, 3))}, cfg);
  CHECK(with_zero_local.value() == global_only.value());
}

TEST_CASE("local latents are interpolated at the global stage outputs") {
  std::mt19937_64 rng(9);
  const auto g = mlp(2, 10), l = mlp(2, 11);
  const auto cps = make_cps(test::random_points(3, 12), {1.5, 1.5, 1.5});
  const Tensor pts = Tensor::constant(random_matrix(4, 3, rng, 0.5));
  const Tensor zg = Tensor::constant(random_matrix(1, 2, rng, 0.3));
  const Tensor zl = Tensor::constant(random_matrix(3, 2, rng, 0.3));
  const flow::FlowConfig cfg;
  const auto mid = flow::integrate_flow(g, pts, zg, cfg);
  const auto expected = flow::integrate_flow(l, mid, interpolate_latent(cps, zl, mid), cfg);
  CHECK(compose_deformers(pts, {&g, zg}, LocalStage{&l, &cps, zl}, cfg).value() == expected.value());
}

TEST_CASE("gradients through both stages match central differences") {
  std::mt19937_64 rng(13);
  const auto g = mlp(3, 14), l = mlp(3, 15);
  auto cps = make_cps(test::random_points(4, 16, -0.5, 0.5), {1.5, 2.0, 1.0, 2.5});
  const Tensor pts = Tensor::constant(random_matrix(6, 3, rng, 0.5));
  auto zg = Tensor::parameter(random_matrix(1, 3, rng, 0.3));
  auto zl = Tensor::parameter(random_matrix(4, 3, rng, 0.3));
  const Tensor w = Tensor::constant(random_matrix(6, 3, rng));
  auto f = [&] {
    return ad::sum(ad::mul(compose_deformers(pts, {&g, zg}, LocalStage{&l, &cps, zl}, flow::FlowConfig{}), w));
  };
  CHECK(max_fd_error(f, zg, 3, 1) < 1e-3);
  CHECK(max_fd_error(f, zl, 12, 2) < 1e-3);
  CHECK(max_fd_error(f, cps.inverse_widths, 4, 3) < 1e-3);
  for (const auto& p : l.parameters()) CHECK(max_fd_error(f, p, 5, 4) < 1e-3);
  for (const auto& p : g.parameters()) CHECK(max_fd_error(f, p, 5, 5) < 1e-3);
}
