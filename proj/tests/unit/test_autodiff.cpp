#include <doctest.h>

#include <cmath>

#include "flowssm/autodiff/adam.hpp"
#include "flowssm/autodiff/archive.hpp"
#include "flowssm/autodiff/ops.hpp"
#include "flowssm/common/error.hpp"
#include "helpers.hpp"

using namespace flowssm;
using namespace flowssm::ad;
using flowssm::test::max_fd_error;
using flowssm::test::random_matrix;

namespace {

Tensor param(std::initializer_list<double> v) {
  Matrix m(1, static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) m(0, i++) = x;
  return Tensor::parameter(m, {m.cols()});
}

using Builder = std::function<Tensor(const std::vector<Tensor>&)>;

/// Largest finite-difference error of sum(op(inputs) * R) over `trials` random
/// draws, probing every entry of every input.
double primitive_fd_error(const Builder& op, const std::vector<std::pair<Eigen::Index, Eigen::Index>>& shapes,
                          int trials, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  double worst = 0.0;
  for (int t = 0; t < trials; ++t) {
    std::vector<Tensor> inputs;
    for (auto [r, c] : shapes) inputs.push_back(Tensor::parameter(random_matrix(r, c, rng)));
    const Tensor probe_out = op(inputs);
    const Tensor weights = Tensor::constant(random_matrix(probe_out.rows(), probe_out.cols(), rng));
    auto f = [&] { return sum(mul(op(inputs), weights)); };
    for (auto& in : inputs) worst = std::max(worst, max_fd_error(f, in, static_cast<int>(in.size()), rng()));
  }
  return worst;
}

}  // namespace

TEST_CASE("forward values of the primitives") {
  const auto lr = leaky_relu(Tensor::constant(Matrix{{-1.0, 2.0}}), 0.02);
  CHECK(lr.value()(0, 0) == doctest::Approx(-0.02));
  CHECK(lr.value()(0, 1) == 2.0);
  const auto c = concat({param({1, 2}), param({3, 4, 5})});
  CHECK(c.shape() == Shape{5});
  CHECK(l2_norm(param({3, 4})).item() == 5.0);
  CHECK(mean(param({1, 2, 3, 6})).item() == 3.0);
  const auto g = gather(param({10, 20, 30}), {2, 0, 2});
  CHECK(g.value() == Matrix{{30, 10, 30}});
}

TEST_CASE("backward hand cases") {
  auto x = param({1, 2, 3});
  backward(sum(mul(x, x)));
  CHECK(x.grad() == Matrix{{2, 4, 6}});

  auto y = param({3, 4});
  backward(l2_norm(y));
  CHECK(y.grad()(0, 0) == doctest::Approx(0.6));
  CHECK(y.grad()(0, 1) == doctest::Approx(0.8));

  auto z = param({0, 0});
  backward(l2_norm(z));
  CHECK(z.grad().isZero(0.0));
}

TEST_CASE("every primitive matches central differences") {
  constexpr int kTrials = 100;
  constexpr double kTol = 1e-4;
  CHECK(primitive_fd_error([](auto& in) { return matmul(in[0], in[1]); }, {{4, 3}, {3, 5}}, kTrials, 1) < kTol);
  CHECK(primitive_fd_error([](auto& in) { return add(in[0], in[1]); }, {{4, 3}, {4, 3}}, kTrials, 2) < kTol);
  CHECK(primitive_fd_error([](auto& in) { return add(in[0], in[1]); }, {{4, 3}, {1, 3}}, kTrials, 3) < kTol);
  CHECK(primitive_fd_error([](auto& in) { return sub(in[0], in[1]); }, {{4, 3}, {4, 3}}, kTrials, 4) < kTol);
  CHECK(primitive_fd_error([](auto& in) { return mul(in[0], in[1]); }, {{4, 3}, {4, 3}}, kTrials, 5) < kTol);
  CHECK(primitive_fd_error([](auto& in) { return scale(in[0], -1.7); }, {{3, 3}}, kTrials, 6) < kTol);
  CHECK(primitive_fd_error([](auto& in) { return mul_scalar(in[0], in[1]); }, {{3, 2}, {1, 1}}, kTrials, 7) < kTol);
  CHECK(primitive_fd_error([](auto& in) { return scale_rows(in[0], in[1]); }, {{4, 3}, {4, 1}}, kTrials, 8) < kTol);
  CHECK(primitive_fd_error([](auto& in) { return concat({in[0], in[1]}); }, {{3, 2}, {3, 4}}, kTrials, 9) < kTol);
  CHECK(primitive_fd_error([](auto& in) { return leaky_relu(in[0], 0.02); }, {{5, 4}}, kTrials, 10) < kTol);
  CHECK(primitive_fd_error([](auto& in) { return l2_norm(in[0]); }, {{3, 4}}, kTrials, 11) < kTol);
  CHECK(primitive_fd_error([](auto& in) { return row_norms(in[0]); }, {{5, 3}}, kTrials, 12) < kTol);
  CHECK(primitive_fd_error([](auto& in) { return sum(in[0]); }, {{3, 4}}, kTrials, 13) < kTol);
  CHECK(primitive_fd_error([](auto& in) { return mean(in[0]); }, {{3, 4}}, kTrials, 14) < kTol);
  CHECK(primitive_fd_error([](auto& in) { return gather(in[0], {3, 0, 3, 1}); }, {{5, 2}}, kTrials, 15) < kTol);
  CHECK(primitive_fd_error([](auto& in) { return slice_rows(in[0], 1, 3); }, {{5, 2}}, kTrials, 16) < kTol);
  CHECK(primitive_fd_error([](auto& in) { return reshape(in[0], {2, 6}); }, {{4, 3}}, kTrials, 17) < kTol);
}

TEST_CASE("affine matches central differences and the explicit concatenation") {
  constexpr int kTrials = 100;
  CHECK(primitive_fd_error([](auto& in) { return affine({in[0], in[1]}, in[2], in[3]); },
                           {{5, 3}, {5, 2}, {5, 4}, {1, 4}}, kTrials, 21) < 1e-4);
  CHECK(primitive_fd_error([](auto& in) { return affine({in[0], in[1]}, in[2], in[3]); },
                           {{5, 3}, {1, 2}, {5, 4}, {1, 4}}, kTrials, 22) < 1e-4);
  CHECK(primitive_fd_error([](auto& in) { return affine({in[0]}, in[1], Tensor()); }, {{4, 3}, {3, 2}}, kTrials, 23) <
        1e-4);

  std::mt19937_64 rng(24);
  const auto x = Tensor::constant(random_matrix(6, 3, rng));
  const auto z = Tensor::constant(random_matrix(1, 2, rng));
  const auto w = Tensor::constant(random_matrix(5, 4, rng));
  const auto b = Tensor::constant(random_matrix(1, 4, rng));
  Matrix zz = z.value().replicate(6, 1);
  const Matrix expected = (Matrix(6, 5) << x.value(), zz).finished() * w.value() + b.value().replicate(6, 1);
  CHECK((affine({x, z}, w, b).value() - expected).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("backward is linear in the loss") {
  std::mt19937_64 rng(30);
  auto x = Tensor::parameter(random_matrix(4, 3, rng));
  const auto w = Tensor::constant(random_matrix(3, 2, rng));
  auto f = [&] { return sum(leaky_relu(matmul(x, w), 0.1)); };
  auto g = [&] { return l2_norm(x); };
  backward(f());
  const Matrix gf = x.grad();
  x.zero_grad();
  backward(g());
  const Matrix gg = x.grad();
  x.zero_grad();
  backward(add(scale(f(), 2.5), scale(g(), -0.5)));
  CHECK((x.grad() - (2.5 * gf - 0.5 * gg)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("identical graphs give bit-identical gradients") {
  std::mt19937_64 rng(31);
  const Matrix x0 = random_matrix(8, 3, rng), w0 = random_matrix(3, 3, rng);
  auto run = [&] {
    auto x = Tensor::parameter(x0);
    auto w = Tensor::parameter(w0);
    backward(mean(row_norms(leaky_relu(matmul(x, w), 0.02))));
    return std::pair{x.grad(), w.grad()};
  };
  const auto a = run(), b = run();
  CHECK(a.first == b.first);
  CHECK(a.second == b.second);
}

TEST_CASE("no-grad mode records nothing") {
  auto x = param({1, 2});
  Tensor y;
  {
    NoGradGuard guard;
    y = sum(mul(x, x));
  }
  CHECK_FALSE(y.requires_grad());
  CHECK(grad_enabled());
}

TEST_CASE("non-finite values are rejected") {
  CHECK_THROWS_AS((void)Tensor::constant(Matrix{{std::nan("")}}), NonFiniteValue);
  auto x = param({1e200});
  CHECK_THROWS_AS((void)mul(x, x), NonFiniteValue);
}

TEST_CASE("shape mismatches are rejected") {
  CHECK_THROWS_AS((void)matmul(Tensor::constant(Matrix::Ones(2, 3)), Tensor::constant(Matrix::Ones(2, 3))),
                  ShapeMismatch);
  CHECK_THROWS_AS((void)add(Tensor::constant(Matrix::Ones(2, 3)), Tensor::constant(Matrix::Ones(3, 3))), ShapeMismatch);
  CHECK_THROWS_AS(backward(Tensor::parameter(Matrix::Ones(2, 2))), ShapeMismatch);
}

TEST_CASE("adam first step moves by the learning rate") {
  AdamState state;
  state.config.lr = 1e-3;
  Matrix p{{1.0}};
  Matrix* params[] = {&p};
  const Matrix grads[] = {Matrix{{1.0}}};
  adam_step(params, grads, state);
  CHECK(p(0, 0) == doctest::Approx(1.0 - 1e-3 / (1.0 + 1e-8)).epsilon(1e-14));
  CHECK(state.step == 1);
}

TEST_CASE("adam with zero gradient leaves parameters and advances the step") {
  AdamState state;
  Matrix p{{0.5, -2.0}};
  Matrix* params[] = {&p};
  const Matrix grads[] = {Matrix::Zero(1, 2)};
  adam_step(params, grads, state);
  adam_step(params, grads, state);
  CHECK(p == Matrix{{0.5, -2.0}});
  CHECK(state.step == 2);
}

TEST_CASE("adam two steps match a scripted reference") {
  const double lr = 0.01, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  const double g1 = 0.3, g2 = -1.2;
  double m = (1 - b1) * g1, v = (1 - b2) * g1 * g1;
  double ref = 2.0 - lr * (m / (1 - b1)) / (std::sqrt(v / (1 - b2)) + eps);
  m = b1 * m + (1 - b1) * g2;
  v = b2 * v + (1 - b2) * g2 * g2;
  ref -= lr * (m / (1 - b1 * b1)) / (std::sqrt(v / (1 - b2 * b2)) + eps);

  AdamState state;
  state.config = {lr, b1, b2, eps};
  Matrix p{{2.0}};
  Matrix* params[] = {&p};
  adam_step(params, std::vector<Matrix>{Matrix{{g1}}}, state);
  adam_step(params, std::vector<Matrix>{Matrix{{g2}}}, state);
  CHECK(p(0, 0) == doctest::Approx(ref).epsilon(1e-14));
}

TEST_CASE("archive round trip and corruption handling") {
  std::mt19937_64 rng(40);
  TensorArchive a;
  a.manifest["k"] = "v";
  a.put("m", random_matrix(3, 4, rng));
  a.put("v", random_matrix(1, 5, rng), {5});
  a.put("t", random_matrix(2, 6, rng), {2, 3, 2});
  const auto bytes = serialize_archive(a);
  const auto b = deserialize_archive(bytes);
  CHECK(b.manifest == a.manifest);
  for (const auto& [name, entry] : a.tensors) {
    CHECK(b.tensors.at(name).first == entry.first);
    CHECK(b.get(name) == entry.second);
  }
  std::string bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_AS((void)deserialize_archive(bad), IoError);
  CHECK_THROWS_AS((void)deserialize_archive(bytes.substr(0, bytes.size() - 3)), IoError);
}
