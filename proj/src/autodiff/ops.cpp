#include "flowssm/autodiff/ops.hpp"

#include <algorithm>
#include <cmath>

#include "flowssm/common/error.hpp"

namespace flowssm::ad {

namespace {

void require(bool ok, const char* op, const Tensor& a, const Tensor& b) {
  if (!ok) {
    throw ShapeMismatch(std::string(op) + ": incompatible shapes " + shape_string(a.shape()) + " and " +
                        shape_string(b.shape()));
  }
}

bool same_dims(const Tensor& a, const Tensor& b) { return a.rows() == b.rows() && a.cols() == b.cols(); }

Shape matrix_shape(Eigen::Index r, Eigen::Index c) { return {r, c}; }

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require(a.rank() >= 1 && b.rank() == 2 && a.cols() == b.rows(), "matmul", a, b);
  Matrix out = a.value() * b.value();
  Shape shape = a.rank() == 1 ? Shape{b.cols()} : matrix_shape(a.rows(), b.cols());
  return make_result("matmul", std::move(out), std::move(shape), {a, b}, [](Node& self) {
    auto& x = *self.inputs[0];
    auto& w = *self.inputs[1];
    if (x.requires_grad) x.accumulate(self.grad * w.value.transpose());
    if (w.requires_grad) w.accumulate(x.value.transpose() * self.grad);
  });
}

Tensor affine(const std::vector<Tensor>& parts, const Tensor& weight, const Tensor& bias) {
  if (parts.empty()) throw ShapeMismatch("affine of nothing");
  Eigen::Index rows = 1;
  Eigen::Index in = 0;
  for (const auto& p : parts) {
    rows = std::max(rows, p.rows());
    in += p.cols();
  }
  for (const auto& p : parts) require(p.rows() == rows || p.rows() == 1, "affine", parts.front(), p);
  require(weight.rank() == 2 && weight.rows() == in, "affine", parts.front(), weight);
  const auto out_dim = weight.cols();
  if (bias.defined()) require(bias.size() == out_dim, "affine", weight, bias);

  Matrix out(rows, out_dim);
  Eigen::RowVectorXd shared = Eigen::RowVectorXd::Zero(out_dim);
  if (bias.defined()) shared += bias.value().row(0);
  bool first_full = true;
  Eigen::Index offset = 0;
  for (const auto& p : parts) {
    const auto block = weight.value().middleRows(offset, p.cols());
    if (p.rows() == rows && rows != 1) {
      if (first_full) {
        out.noalias() = p.value() * block;
        first_full = false;
      } else {
        out.noalias() += p.value() * block;
      }
    } else {
      shared.noalias() += p.value().row(0) * block;
    }
    offset += p.cols();
  }
  if (first_full) {
    out.rowwise() = shared;
  } else {
    out.rowwise() += shared;
  }

  std::vector<Tensor> inputs = parts;
  inputs.push_back(weight);
  if (bias.defined()) inputs.push_back(bias);
  const auto n_parts = parts.size();
  const bool has_bias = bias.defined();
  Shape shape = parts.front().rank() == 1 && rows == 1 ? Shape{out_dim} : matrix_shape(rows, out_dim);
  return make_result("affine", std::move(out), std::move(shape), inputs, [n_parts, has_bias, rows](Node& self) {
    auto& w = *self.inputs[n_parts];
    Matrix gw;
    if (w.requires_grad) gw.resize(w.value.rows(), w.value.cols());
    Eigen::RowVectorXd col_sum;
    Eigen::Index offset = 0;
    for (std::size_t k = 0; k < n_parts; ++k) {
      auto& p = *self.inputs[k];
      const auto cols = p.value.cols();
      const auto block = w.value.middleRows(offset, cols);
      const bool broadcast = p.value.rows() == 1 && rows != 1;
      if (broadcast && col_sum.size() == 0) col_sum = self.grad.colwise().sum();
      if (p.requires_grad) {
        if (broadcast) {
          p.accumulate(Matrix(col_sum * block.transpose()));
        } else {
          p.accumulate(Matrix(self.grad * block.transpose()));
        }
      }
      if (w.requires_grad) {
        if (broadcast) {
          gw.middleRows(offset, cols).noalias() = p.value.row(0).transpose() * col_sum;
        } else {
          gw.middleRows(offset, cols).noalias() = p.value.transpose() * self.grad;
        }
      }
      offset += cols;
    }
    if (w.requires_grad) w.accumulate(std::move(gw));
    if (has_bias) {
      auto& b = *self.inputs[n_parts + 1];
      if (b.requires_grad) {
        if (col_sum.size() == 0) col_sum = self.grad.colwise().sum();
        b.accumulate(Matrix(col_sum));
      }
    }
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (same_dims(a, b)) {
    return make_result("add", a.value() + b.value(), a.shape(), {a, b}, [](Node& self) {
      self.inputs[0]->accumulate(self.grad);
      self.inputs[1]->accumulate(self.grad);
    });
  }
  require(b.rows() == 1 && b.cols() == a.cols(), "add", a, b);
  Matrix out = a.value();
  out.rowwise() += b.value().row(0);
  return make_result("add_bias", std::move(out), a.shape(), {a, b}, [](Node& self) {
    self.inputs[0]->accumulate(self.grad);
    if (self.inputs[1]->requires_grad) self.inputs[1]->accumulate(self.grad.colwise().sum());
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require(same_dims(a, b), "sub", a, b);
  return make_result("sub", a.value() - b.value(), a.shape(), {a, b}, [](Node& self) {
    self.inputs[0]->accumulate(self.grad);
    if (self.inputs[1]->requires_grad) self.inputs[1]->accumulate(-self.grad);
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require(same_dims(a, b), "mul", a, b);
  return make_result("mul", a.value().cwiseProduct(b.value()), a.shape(), {a, b}, [](Node& self) {
    auto& x = *self.inputs[0];
    auto& y = *self.inputs[1];
    if (x.requires_grad) x.accumulate(self.grad.cwiseProduct(y.value));
    if (y.requires_grad) y.accumulate(self.grad.cwiseProduct(x.value));
  });
}

Tensor scale(const Tensor& a, double factor) {
  return make_result("scale", a.value() * factor, a.shape(), {a},
                     [factor](Node& self) { self.inputs[0]->accumulate(self.grad * factor); });
}

Tensor mul_scalar(const Tensor& a, const Tensor& s) {
  require(s.size() == 1, "mul_scalar", a, s);
  const double k = s.value()(0, 0);
  return make_result("mul_scalar", a.value() * k, a.shape(), {a, s}, [](Node& self) {
    auto& x = *self.inputs[0];
    auto& sc = *self.inputs[1];
    if (x.requires_grad) x.accumulate(self.grad * sc.value(0, 0));
    if (sc.requires_grad) {
      Matrix g(1, 1);
      g(0, 0) = self.grad.cwiseProduct(x.value).sum();
      sc.accumulate(std::move(g));
    }
  });
}

Tensor scale_rows(const Tensor& a, const Tensor& s) {
  require(s.rows() == a.rows() && s.cols() == 1, "scale_rows", a, s);
  Matrix out = a.value().array().colwise() * s.value().col(0).array();
  return make_result("scale_rows", std::move(out), a.shape(), {a, s}, [](Node& self) {
    auto& x = *self.inputs[0];
    auto& sc = *self.inputs[1];
    if (x.requires_grad) {
      Matrix g = self.grad.array().colwise() * sc.value.col(0).array();
      x.accumulate(std::move(g));
    }
    if (sc.requires_grad) {
      Matrix g = self.grad.cwiseProduct(x.value).rowwise().sum();
      sc.accumulate(std::move(g));
    }
  });
}

Tensor concat(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeMismatch("concat of nothing");
  const auto rows = parts.front().rows();
  Eigen::Index cols = 0;
  for (const auto& p : parts) {
    require(p.rows() == rows && p.rank() == parts.front().rank(), "concat", parts.front(), p);
    cols += p.cols();
  }
  Matrix out(rows, cols);
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    at += p.cols();
  }
  Shape shape = parts.front().shape();
  shape.back() = cols;
  return make_result("concat", std::move(out), std::move(shape), parts, [](Node& self) {
    Eigen::Index offset = 0;
    for (auto& in : self.inputs) {
      const auto c = in->value.cols();
      if (in->requires_grad) in->accumulate(self.grad.middleCols(offset, c));
      offset += c;
    }
  });
}

Tensor leaky_relu(const Tensor& a, double negative_slope) {
  Matrix out = (a.value().array() > 0.0).select(a.value(), negative_slope * a.value());
  return make_result("leaky_relu", std::move(out), a.shape(), {a}, [negative_slope](Node& self) {
    auto& x = *self.inputs[0];
    Matrix g = (x.value.array() > 0.0).select(self.grad, negative_slope * self.grad);
    x.accumulate(std::move(g));
  });
}

Tensor l2_norm(const Tensor& a) {
  Matrix out(1, 1);
  out(0, 0) = a.value().norm();
  return make_result("l2_norm", std::move(out), {}, {a}, [](Node& self) {
    auto& x = *self.inputs[0];
    const double n = self.value(0, 0);
    if (n == 0.0) return;
    x.accumulate(x.value * (self.grad(0, 0) / n));
  });
}

Tensor row_norms(const Tensor& a) {
  Matrix out = a.value().rowwise().norm();
  return make_result("row_norms", std::move(out), matrix_shape(a.rows(), 1), {a}, [](Node& self) {
    auto& x = *self.inputs[0];
    Matrix g(x.value.rows(), x.value.cols());
    for (Eigen::Index i = 0; i < g.rows(); ++i) {
      const double n = self.value(i, 0);
      if (n == 0.0) {
        g.row(i).setZero();
      } else {
        g.row(i) = x.value.row(i) * (self.grad(i, 0) / n);
      }
    }
    x.accumulate(std::move(g));
  });
}

Tensor sum(const Tensor& a) {
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return make_result("sum", std::move(out), {}, {a}, [](Node& self) {
    auto& x = *self.inputs[0];
    x.accumulate(Matrix::Constant(x.value.rows(), x.value.cols(), self.grad(0, 0)));
  });
}

Tensor mean(const Tensor& a) {
  Matrix out(1, 1);
  const auto n = static_cast<double>(a.size());
  out(0, 0) = a.value().sum() / n;
  return make_result("mean", std::move(out), {}, {a}, [n](Node& self) {
    auto& x = *self.inputs[0];
    x.accumulate(Matrix::Constant(x.value.rows(), x.value.cols(), self.grad(0, 0) / n));
  });
}

Tensor gather(const Tensor& a, const std::vector<Eigen::Index>& indices) {
  const auto count = static_cast<Eigen::Index>(indices.size());
  if (a.rank() == 1) {
    Matrix out(1, count);
    for (Eigen::Index k = 0; k < count; ++k) {
      const auto i = indices[static_cast<std::size_t>(k)];
      if (i < 0 || i >= a.cols()) throw ShapeMismatch("gather index out of range");
      out(0, k) = a.value()(0, i);
    }
    return make_result("gather", std::move(out), {count}, {a}, [indices](Node& self) {
      auto& x = *self.inputs[0];
      Matrix g = Matrix::Zero(1, x.value.cols());
      for (std::size_t k = 0; k < indices.size(); ++k) g(0, indices[k]) += self.grad(0, static_cast<Eigen::Index>(k));
      x.accumulate(std::move(g));
    });
  }
  Matrix out(count, a.cols());
  for (Eigen::Index k = 0; k < count; ++k) {
    const auto i = indices[static_cast<std::size_t>(k)];
    if (i < 0 || i >= a.rows()) throw ShapeMismatch("gather index out of range");
    out.row(k) = a.value().row(i);
  }
  return make_result("gather", std::move(out), matrix_shape(count, a.cols()), {a}, [indices](Node& self) {
    auto& x = *self.inputs[0];
    Matrix g = Matrix::Zero(x.value.rows(), x.value.cols());
    for (std::size_t k = 0; k < indices.size(); ++k) g.row(indices[k]) += self.grad.row(static_cast<Eigen::Index>(k));
    x.accumulate(std::move(g));
  });
}

Tensor slice_rows(const Tensor& a, Eigen::Index begin, Eigen::Index count) {
  if (begin < 0 || count < 0 || begin + count > a.rows()) throw ShapeMismatch("slice_rows out of range");
  return make_result("slice_rows", a.value().middleRows(begin, count), matrix_shape(count, a.cols()), {a},
                     [begin, count](Node& self) {
                       auto& x = *self.inputs[0];
                       Matrix g = Matrix::Zero(x.value.rows(), x.value.cols());
                       g.middleRows(begin, count) = self.grad;
                       x.accumulate(std::move(g));
                     });
}

Tensor reshape(const Tensor& a, Shape shape) {
  Eigen::Index n = 1;
  for (auto d : shape) n *= d;
  if (n != a.size()) throw ShapeMismatch("cannot reshape " + shape_string(a.shape()) + " to " + shape_string(shape));
  const Eigen::Index r = shape.size() == 2 ? shape[0] : 1;
  const Eigen::Index c = shape.size() == 2 ? shape[1] : n;
  Matrix out = Eigen::Map<const Matrix>(a.value().data(), r, c);
  return make_result("reshape", std::move(out), std::move(shape), {a}, [](Node& self) {
    auto& x = *self.inputs[0];
    x.accumulate(Eigen::Map<const Matrix>(self.grad.data(), x.value.rows(), x.value.cols()));
  });
}

}  // namespace flowssm::ad
