#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "flowssm/common/types.hpp"

namespace flowssm::ad {

/// Logical tensor shape. Rank 0 is stored as 1x1, rank 1 {n} as 1xn, rank 2 {r,c} as rxc.
using Shape = std::vector<Eigen::Index>;

struct Node;
using BackwardFn = std::function<void(Node& self)>;

/// One entry of the differentiation record. A node is either a leaf (no inputs)
/// or the output of a primitive that knows how to push `grad` into its inputs.
struct Node {
  Matrix value;
  Matrix grad;  // empty until something is accumulated
  Shape shape;
  bool requires_grad = false;
  std::uint64_t sequence = 0;  // creation order; a valid topological order
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  BackwardFn backward;

  void accumulate(const Matrix& g);
  void accumulate(Matrix&& g);
};

/// Handle to a node. Copies share the node, so a Tensor behaves like a
/// reference to a value in the graph.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Tensor constant(Matrix value);
  static Tensor constant(Matrix value, Shape shape);
  static Tensor parameter(Matrix value);
  static Tensor parameter(Matrix value, Shape shape);
  static Tensor scalar(double v, bool requires_grad = false);
  static Tensor vector(const Vector& v, bool requires_grad = false);

  [[nodiscard]] bool defined() const { return static_cast<bool>(node_); }
  [[nodiscard]] const Matrix& value() const { return node_->value; }
  /// Direct write access; intended for optimizers acting on leaves.
  [[nodiscard]] Matrix& mutable_value() { return node_->value; }
  [[nodiscard]] const Shape& shape() const { return node_->shape; }
  [[nodiscard]] std::size_t rank() const { return node_->shape.size(); }
  [[nodiscard]] Eigen::Index rows() const { return node_->value.rows(); }
  [[nodiscard]] Eigen::Index cols() const { return node_->value.cols(); }
  [[nodiscard]] Eigen::Index size() const { return node_->value.size(); }
  [[nodiscard]] double item() const;

  [[nodiscard]] bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on);

  /// Accumulated gradient; zeros when nothing reached this tensor.
  [[nodiscard]] Matrix grad() const;
  [[nodiscard]] bool has_grad() const { return node_->grad.size() != 0; }
  void zero_grad() { node_->grad.resize(0, 0); }

  [[nodiscard]] const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

/// Disables recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

[[nodiscard]] bool grad_enabled();

/// Builds the output of a primitive. Throws NonFiniteValue if `value` has NaN/Inf.
/// The node is recorded (keeps inputs and `fn`) only when gradients are enabled
/// and at least one input requires them.
[[nodiscard]] Tensor make_result(const char* op, Matrix value, Shape shape, const std::vector<Tensor>& inputs,
                                 BackwardFn fn);

/// Reverse pass from a scalar loss. Each recorded node on the path to a
/// requires_grad leaf is visited once, in reverse creation order. Gradients
/// accumulate into leaves; intermediate gradients are released afterwards.
void backward(const Tensor& loss);

[[nodiscard]] std::string shape_string(const Shape& s);

}  // namespace flowssm::ad
