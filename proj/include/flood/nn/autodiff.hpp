#pragma once

#include <Eigen/Dense>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "flood/common.hpp"

namespace flood::nn {

using Matrix = Eigen::MatrixXd;

// One node of the dynamically-built computation tape. Values are dense
// 64-bit matrices; vectors are 1xN or Nx1 as convenient for the caller.
struct Node {
  Matrix val;
  Matrix grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;  // pulls grad into parents

  Node(Matrix v, bool rg) : val(std::move(v)), requires_grad(rg) {
    if (requires_grad) grad = Matrix::Zero(val.rows(), val.cols());
  }
};

// Cheap handle; copying shares the underlying node.
class Value {
 public:
  Value() = default;
  explicit Value(Matrix v, bool requires_grad = false)
      : node_(std::make_shared<Node>(std::move(v), requires_grad)) {}

  static Value scalar(double x, bool requires_grad = false) {
    Matrix m(1, 1);
    m(0, 0) = x;
    return Value(m, requires_grad);
  }

  bool defined() const { return node_ != nullptr; }
  const Matrix& val() const { return node_->val; }
  Matrix& mutable_val() { return node_->val; }
  const Matrix& grad() const { return node_->grad; }
  bool requires_grad() const { return node_->requires_grad; }
  Eigen::Index rows() const { return node_->val.rows(); }
  Eigen::Index cols() const { return node_->val.cols(); }
  double item() const;

  void zero_grad() {
    if (node_->requires_grad) node_->grad.setZero();
  }

  // Reverse sweep from this (scalar) node; accumulates into .grad of every
  // reachable node with requires_grad.
  void backward() const;

  std::shared_ptr<Node> node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

// Scoped inference mode: while any guard is alive, newly built ops record no
// parents and no backward closures, so intermediate results are freed as soon
// as their handles go out of scope. Gradients cannot flow through values
// created under an active guard.
class NoGradGuard {
 public:
  NoGradGuard() { ++depth_; }
  ~NoGradGuard() { --depth_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
  static bool active() { return depth_ > 0; }

 private:
  static thread_local int depth_;
};

std::string shape_str(const Matrix& m);

// --- primitives ---------------------------------------------------------

Value matmul(const Value& a, const Value& b);
Value add(const Value& a, const Value& b);       // same shape, or b 1xC row-broadcast
Value sub(const Value& a, const Value& b);
Value mul(const Value& a, const Value& b);       // elementwise
Value scale(const Value& a, double s);
Value transpose(const Value& a);
Value sigmoid(const Value& a);
Value tanh_op(const Value& a);
Value relu(const Value& a);
Value gelu(const Value& a);
Value softmax_rows(const Value& a);
Value layer_norm_rows(const Value& x, const Value& gain, const Value& bias,
                      double eps = 1e-5);
Value dropout(const Value& x, double rate, bool training, Rng& rng);
Value concat_rows(const std::vector<Value>& parts);
Value concat_cols(const std::vector<Value>& parts);
Value slice_rows(const Value& a, Eigen::Index r0, Eigen::Index n);
Value slice_cols(const Value& a, Eigen::Index c0, Eigen::Index n);
Value sum_all(const Value& a);                   // 1x1

// Row-major reinterpretation to r x c (element count preserved).
Value reshape_rows(const Value& a, Eigen::Index r, Eigen::Index c);
// (B*N) x h, rows grouped in B blocks of N  ->  N x (B*h), block b at
// columns [b*h, (b+1)*h). Lets one shared N x N operator act on a whole
// batch with a single matmul.
Value stack_blocks_to_cols(const Value& a, Eigen::Index n_blocks);
Value cols_to_blocks(const Value& a, Eigen::Index n_blocks);  // inverse
// Row gather; backward scatter-adds. Indices may repeat.
Value gather_rows(const Value& a, std::vector<Eigen::Index> indices);
Value mean_rows(const Value& a);                 // 1xC column means
Value mse(const Value& pred, const Value& target);  // 1x1

// --- verification oracle -------------------------------------------------

// Central finite differences against the tape's analytic gradients.
// `f` must rebuild its forward pass from `inputs` on every call so that
// perturbations of the underlying matrices are observed. Returns
// max over all input entries of |analytic - numeric| / max(|a|,|n|,1e-8).
double gradient_check(const std::function<Value(const std::vector<Value>&)>& f,
                      std::vector<Value>& inputs, double eps = 1e-5);

}  // namespace flood::nn
