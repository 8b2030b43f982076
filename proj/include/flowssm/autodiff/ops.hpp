#pragma once

#include <vector>

#include "flowssm/autodiff/tensor.hpp"

namespace flowssm::ad {

/// (r x k)(k x c). A rank-1 left operand is treated as a single row.
[[nodiscard]] Tensor matmul(const Tensor& a, const Tensor& b);

/// Affine map of a column-wise concatenation, [p_1 ... p_k] W + b, without
/// materialising the concatenation. A single-row part is broadcast over all
/// rows. `bias` may be undefined.
[[nodiscard]] Tensor affine(const std::vector<Tensor>& parts, const Tensor& weight, const Tensor& bias);

/// Elementwise sum; `b` may also be a single row added to every row of `a` (bias).
[[nodiscard]] Tensor add(const Tensor& a, const Tensor& b);
[[nodiscard]] Tensor sub(const Tensor& a, const Tensor& b);
[[nodiscard]] Tensor mul(const Tensor& a, const Tensor& b);

/// Multiplication by a constant.
[[nodiscard]] Tensor scale(const Tensor& a, double factor);
/// Multiplication by a 1-element tensor.
[[nodiscard]] Tensor mul_scalar(const Tensor& a, const Tensor& s);
/// Row i of `a` times s(i); `s` is r x 1.
[[nodiscard]] Tensor scale_rows(const Tensor& a, const Tensor& s);

/// Concatenation along the last axis.
[[nodiscard]] Tensor concat(const std::vector<Tensor>& parts);

[[nodiscard]] Tensor leaky_relu(const Tensor& a, double negative_slope);

/// Euclidean norm of all entries (scalar). The subgradient at 0 is 0.
[[nodiscard]] Tensor l2_norm(const Tensor& a);
/// Euclidean norm of each row, r x 1.
[[nodiscard]] Tensor row_norms(const Tensor& a);

[[nodiscard]] Tensor sum(const Tensor& a);
[[nodiscard]] Tensor mean(const Tensor& a);

/// Selects rows (rank 2) or elements (rank 1). Indices may repeat.
[[nodiscard]] Tensor gather(const Tensor& a, const std::vector<Eigen::Index>& indices);
/// Contiguous row block [begin, begin + count).
[[nodiscard]] Tensor slice_rows(const Tensor& a, Eigen::Index begin, Eigen::Index count);

/// Reshape preserving the row-major element order.
[[nodiscard]] Tensor reshape(const Tensor& a, Shape shape);

}  // namespace flowssm::ad
