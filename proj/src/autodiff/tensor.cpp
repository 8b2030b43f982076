#include "flowssm/autodiff/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include <malloc.h>

#include "flowssm/common/error.hpp"

namespace flowssm::ad {

namespace {

std::atomic<std::uint64_t> g_sequence{0};
thread_local bool t_grad_enabled = true;

// Graph values are allocated and released every step; keep them out of mmap.
[[maybe_unused]] const bool g_allocator_tuned = [] {
  mallopt(M_MMAP_THRESHOLD, 256 << 20);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  return true;
}();

bool all_finite(const Matrix& m) { return std::isfinite(m.sum()); }

Shape default_shape(const Matrix& m) { return {m.rows(), m.cols()}; }

Eigen::Index shape_size(const Shape& s) {
  Eigen::Index n = 1;
  for (auto d : s) n *= d;
  return n;
}

std::shared_ptr<Node> make_leaf(Matrix value, Shape shape, bool requires_grad) {
  if (shape_size(shape) != value.size()) {
    throw ShapeMismatch("shape " + shape_string(shape) + " does not match " + std::to_string(value.size()) +
                        " stored values");
  }
  if (!all_finite(value)) throw NonFiniteValue("leaf tensor has non-finite values");
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->shape = std::move(shape);
  node->requires_grad = requires_grad;
  node->sequence = g_sequence.fetch_add(1, std::memory_order_relaxed);
  return node;
}

}  // namespace

void Node::accumulate(const Matrix& g) {
  if (!requires_grad) return;
  if (grad.size() == 0) {
    grad = g;
  } else {
    grad += g;
  }
}

void Node::accumulate(Matrix&& g) {
  if (!requires_grad) return;
  if (grad.size() == 0) {
    grad = std::move(g);
  } else {
    grad += g;
  }
}

Tensor Tensor::constant(Matrix value) {
  auto shape = default_shape(value);
  return Tensor(make_leaf(std::move(value), std::move(shape), false));
}

Tensor Tensor::constant(Matrix value, Shape shape) { return Tensor(make_leaf(std::move(value), std::move(shape), false)); }

Tensor Tensor::parameter(Matrix value) {
  auto shape = default_shape(value);
  return Tensor(make_leaf(std::move(value), std::move(shape), true));
}

Tensor Tensor::parameter(Matrix value, Shape shape) { return Tensor(make_leaf(std::move(value), std::move(shape), true)); }

Tensor Tensor::scalar(double v, bool requires_grad) {
  Matrix m(1, 1);
  m(0, 0) = v;
  return Tensor(make_leaf(std::move(m), {}, requires_grad));
}

Tensor Tensor::vector(const Vector& v, bool requires_grad) {
  Matrix m = v.transpose();
  return Tensor(make_leaf(std::move(m), {v.size()}, requires_grad));
}

double Tensor::item() const {
  if (size() != 1) throw ShapeMismatch("item() on tensor of shape " + shape_string(shape()));
  return node_->value(0, 0);
}

void Tensor::set_requires_grad(bool on) {
  if (!node_->inputs.empty()) throw InvalidArgument("requires_grad can only be toggled on leaves");
  node_->requires_grad = on;
}

Matrix Tensor::grad() const {
  if (node_->grad.size() == 0) return Matrix::Zero(node_->value.rows(), node_->value.cols());
  return node_->grad;
}

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

bool grad_enabled() { return t_grad_enabled; }

Tensor make_result(const char* op, Matrix value, Shape shape, const std::vector<Tensor>& inputs, BackwardFn fn) {
  if (!all_finite(value)) throw NonFiniteValue(std::string("non-finite output from ") + op);
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->shape = std::move(shape);
  node->op = op;
  node->sequence = g_sequence.fetch_add(1, std::memory_order_relaxed);
  const bool any = std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.requires_grad(); });
  if (t_grad_enabled && any) {
    node->requires_grad = true;
    node->inputs.reserve(inputs.size());
    for (const auto& t : inputs) node->inputs.push_back(t.node());
    node->backward = std::move(fn);
  }
  return Tensor(std::move(node));
}

void backward(const Tensor& loss) {
  if (loss.size() != 1) throw ShapeMismatch("backward() needs a scalar loss, got " + shape_string(loss.shape()));
  if (!loss.requires_grad()) return;

  // Collect the recorded subgraph.
  std::vector<Node*> order;
  std::vector<Node*> leaves;
  std::unordered_set<Node*> seen;
  std::vector<Node*> stack{loss.node().get()};
  seen.insert(stack.back());
  while (!stack.empty()) {
    Node* n = stack.back();
    stack.pop_back();
    if (n->inputs.empty()) {
      leaves.push_back(n);
      continue;
    }
    order.push_back(n);
    for (const auto& in : n->inputs) {
      if (in->requires_grad && seen.insert(in.get()).second) stack.push_back(in.get());
    }
  }
  std::sort(order.begin(), order.end(), [](const Node* a, const Node* b) { return a->sequence > b->sequence; });

  Node* root = loss.node().get();
  root->accumulate(Matrix::Ones(1, 1));
  for (Node* n : order) {
    if (n->grad.size() != 0 && n->backward) n->backward(*n);
    n->grad.resize(0, 0);
  }
  for (Node* leaf : leaves) {
    if (leaf->grad.size() != 0 && !all_finite(leaf->grad)) throw NonFiniteGradient("non-finite gradient at a leaf");
  }
}

std::string shape_string(const Shape& s) {
  std::ostringstream out;
  out << '(';
  for (std::size_t i = 0; i < s.size(); ++i) out << (i ? ", " : "") << s[i];
  out << ')';
  return std::move(out).str();
}

}  // namespace flowssm::ad
