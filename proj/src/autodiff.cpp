#include "flood/nn/autodiff.hpp"

#include <cmath>
#include <sstream>
#include <unordered_set>

namespace flood::nn {

namespace {

Value make_result(Matrix v, std::vector<Value> parents,
                  std::function<void(Node&)> backward_fn) {
  if (NoGradGuard::active()) return Value(std::move(v), false);
  bool rg = false;
  for (const auto& p : parents) rg = rg || p.requires_grad();
  Value out(std::move(v), rg);
  if (rg) {
    auto n = out.node();
    n->parents.reserve(parents.size());
    for (auto& p : parents) n->parents.push_back(p.node());
    n->backward_fn = std::move(backward_fn);
  }
  return out;
}

void check_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a) +
                     " vs " + shape_str(b));
  }
}

}  // namespace

thread_local int NoGradGuard::depth_ = 0;

std::string shape_str(const Matrix& m) {
  std::ostringstream os;
  os << "(" << m.rows() << "x" << m.cols() << ")";
  return os.str();
}

double Value::item() const {
  if (rows() != 1 || cols() != 1)
    throw ShapeError("item(): not a scalar " + shape_str(val()));
  return val()(0, 0);
}

void Value::backward() const {
  if (rows() != 1 || cols() != 1)
    throw ShapeError("backward(): root must be scalar, got " + shape_str(val()));
  if (!node_->requires_grad) return;

  // Iterative post-order DFS to get a topological order of the tape.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, idx] = stack.back();
    if (idx < n->parents.size()) {
      Node* p = n->parents[idx++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  node_->grad(0, 0) += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backward_fn) (*it)->backward_fn(**it);
  }
}

Value matmul(const Value& a, const Value& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: shape mismatch " + shape_str(a.val()) + " vs " +
                     shape_str(b.val()));
  }
  Matrix v = a.val() * b.val();
  return make_result(std::move(v), {a, b}, [a, b](Node& n) {
    if (a.requires_grad()) a.node()->grad.noalias() += n.grad * b.val().transpose();
    if (b.requires_grad()) b.node()->grad.noalias() += a.val().transpose() * n.grad;
  });
}

Value add(const Value& a, const Value& b) {
  const bool broadcast = b.rows() == 1 && a.rows() != 1 && b.cols() == a.cols();
  if (!broadcast) check_same_shape(a.val(), b.val(), "add");
  Matrix v = broadcast ? Matrix(a.val().rowwise() + b.val().row(0))
                       : Matrix(a.val() + b.val());
  return make_result(std::move(v), {a, b}, [a, b, broadcast](Node& n) {
    if (a.requires_grad()) a.node()->grad += n.grad;
    if (b.requires_grad()) {
      if (broadcast)
        b.node()->grad.row(0) += n.grad.colwise().sum();
      else
        b.node()->grad += n.grad;
    }
  });
}

Value sub(const Value& a, const Value& b) {
  check_same_shape(a.val(), b.val(), "sub");
  Matrix v = a.val() - b.val();
  return make_result(std::move(v), {a, b}, [a, b](Node& n) {
    if (a.requires_grad()) a.node()->grad += n.grad;
    if (b.requires_grad()) b.node()->grad -= n.grad;
  });
}

Value mul(const Value& a, const Value& b) {
  check_same_shape(a.val(), b.val(), "mul");
  Matrix v = a.val().cwiseProduct(b.val());
  return make_result(std::move(v), {a, b}, [a, b](Node& n) {
    if (a.requires_grad()) a.node()->grad += n.grad.cwiseProduct(b.val());
    if (b.requires_grad()) b.node()->grad += n.grad.cwiseProduct(a.val());
  });
}

Value scale(const Value& a, double s) {
  Matrix v = a.val() * s;
  return make_result(std::move(v), {a}, [a, s](Node& n) {
    if (a.requires_grad()) a.node()->grad += n.grad * s;
  });
}

Value transpose(const Value& a) {
  Matrix v = a.val().transpose();
  return make_result(std::move(v), {a}, [a](Node& n) {
    if (a.requires_grad()) a.node()->grad += n.grad.transpose();
  });
}

Value sigmoid(const Value& a) {
  Matrix v = (1.0 / (1.0 + (-a.val().array()).exp())).matrix();
  return make_result(v, {a}, [a, v](Node& n) {
    if (a.requires_grad())
      a.node()->grad.array() += n.grad.array() * v.array() * (1.0 - v.array());
  });
}

Value tanh_op(const Value& a) {
  Matrix v = a.val().array().tanh().matrix();
  return make_result(v, {a}, [a, v](Node& n) {
    if (a.requires_grad())
      a.node()->grad.array() += n.grad.array() * (1.0 - v.array().square());
  });
}

Value relu(const Value& a) {
  Matrix v = a.val().cwiseMax(0.0);
  return make_result(v, {a}, [a](Node& n) {
    if (a.requires_grad())
      a.node()->grad.array() +=
          n.grad.array() * (a.val().array() > 0.0).cast<double>();
  });
}

Value gelu(const Value& a) {
  auto norm_cdf = [](double x) {
    return 0.5 * (1.0 + std::erf(x * 0.7071067811865475244));
  };
  Matrix v = a.val().unaryExpr(
      [&](double x) { return x * norm_cdf(x); });
  return make_result(std::move(v), {a}, [a, norm_cdf](Node& n) {
    if (!a.requires_grad()) return;
    const double inv_sqrt2pi = 0.3989422804014327;
    Matrix d = a.val().unaryExpr([&](double x) {
      return norm_cdf(x) + x * inv_sqrt2pi * std::exp(-0.5 * x * x);
    });
    a.node()->grad += n.grad.cwiseProduct(d);
  });
}

Value softmax_rows(const Value& a) {
  if (a.cols() == 0) throw ShapeError("softmax: empty axis");
  Matrix v(a.rows(), a.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    Eigen::ArrayXd row = a.val().row(i).array();
    row -= row.maxCoeff();
    Eigen::ArrayXd e = row.exp();
    v.row(i) = (e / e.sum()).matrix();
  }
  return make_result(v, {a}, [a, v](Node& n) {
    if (!a.requires_grad()) return;
    for (Eigen::Index i = 0; i < v.rows(); ++i) {
      double s = n.grad.row(i).dot(v.row(i));
      a.node()->grad.row(i).array() +=
          v.row(i).array() * (n.grad.row(i).array() - s);
    }
  });
}

Value layer_norm_rows(const Value& x, const Value& gain, const Value& bias,
                      double eps) {
  const Eigen::Index d = x.cols();
  if (gain.rows() != 1 || gain.cols() != d || bias.rows() != 1 || bias.cols() != d)
    throw ShapeError("layer_norm: affine params must be 1x" + std::to_string(d));
  using RowArray = Eigen::Array<double, 1, Eigen::Dynamic>;
  Matrix xhat(x.rows(), d);
  Eigen::VectorXd inv_std(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    double mu = x.val().row(i).mean();
    RowArray c = x.val().row(i).array() - mu;
    double var = c.square().mean();
    inv_std(i) = 1.0 / std::sqrt(var + eps);
    xhat.row(i) = (c * inv_std(i)).matrix();
  }
  Matrix v = (xhat.array().rowwise() * gain.val().row(0).array()).matrix();
  v.rowwise() += bias.val().row(0);
  return make_result(v, {x, gain, bias}, [x, gain, bias, xhat, inv_std](Node& n) {
    const Eigen::Index d = x.cols();
    if (gain.requires_grad())
      gain.node()->grad.row(0) += (n.grad.array() * xhat.array()).colwise().sum().matrix();
    if (bias.requires_grad())
      bias.node()->grad.row(0) += n.grad.colwise().sum();
    if (x.requires_grad()) {
      using RowArray = Eigen::Array<double, 1, Eigen::Dynamic>;
      for (Eigen::Index i = 0; i < x.rows(); ++i) {
        RowArray dxhat = n.grad.row(i).array() * gain.val().row(0).array();
        double m1 = dxhat.mean();
        double m2 = (dxhat * xhat.row(i).array()).mean();
        x.node()->grad.row(i).array() +=
            inv_std(i) * (dxhat - m1 - xhat.row(i).array() * m2);
      }
    }
  });
}

Value dropout(const Value& x, double rate, bool training, Rng& rng) {
  if (!training || rate <= 0.0) return x;
  if (rate >= 1.0) throw ConfigError("dropout rate must be < 1");
  std::bernoulli_distribution keep(1.0 - rate);
  Matrix mask(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = 0; j < x.cols(); ++j)
      mask(i, j) = keep(rng) ? 1.0 / (1.0 - rate) : 0.0;
  Matrix v = x.val().cwiseProduct(mask);
  return make_result(std::move(v), {x}, [x, mask](Node& n) {
    if (x.requires_grad()) x.node()->grad += n.grad.cwiseProduct(mask);
  });
}

Value concat_rows(const std::vector<Value>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no operands");
  Eigen::Index rows = 0;
  const Eigen::Index cols = parts[0].cols();
  for (const auto& p : parts) {
    if (p.cols() != cols)
      throw ShapeError("concat_rows: column mismatch " + shape_str(p.val()));
    rows += p.rows();
  }
  Matrix v(rows, cols);
  Eigen::Index r = 0;
  for (const auto& p : parts) {
    v.middleRows(r, p.rows()) = p.val();
    r += p.rows();
  }
  return make_result(std::move(v), parts, [parts](Node& n) {
    Eigen::Index r = 0;
    for (const auto& p : parts) {
      if (p.requires_grad())
        p.node()->grad += n.grad.middleRows(r, p.rows());
      r += p.rows();
    }
  });
}

Value concat_cols(const std::vector<Value>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no operands");
  Eigen::Index cols = 0;
  const Eigen::Index rows = parts[0].rows();
  for (const auto& p : parts) {
    if (p.rows() != rows)
      throw ShapeError("concat_cols: row mismatch " + shape_str(p.val()));
    cols += p.cols();
  }
  Matrix v(rows, cols);
  Eigen::Index c = 0;
  for (const auto& p : parts) {
    v.middleCols(c, p.cols()) = p.val();
    c += p.cols();
  }
  return make_result(std::move(v), parts, [parts](Node& n) {
    Eigen::Index c = 0;
    for (const auto& p : parts) {
      if (p.requires_grad())
        p.node()->grad += n.grad.middleCols(c, p.cols());
      c += p.cols();
    }
  });
}

Value slice_rows(const Value& a, Eigen::Index r0, Eigen::Index n_rows) {
  if (r0 < 0 || n_rows < 0 || r0 + n_rows > a.rows())
    throw ShapeError("slice_rows: [" + std::to_string(r0) + "," +
                     std::to_string(r0 + n_rows) + ") out of " + shape_str(a.val()));
  Matrix v = a.val().middleRows(r0, n_rows);
  return make_result(std::move(v), {a}, [a, r0, n_rows](Node& n) {
    if (a.requires_grad()) a.node()->grad.middleRows(r0, n_rows) += n.grad;
  });
}

Value slice_cols(const Value& a, Eigen::Index c0, Eigen::Index n_cols) {
  if (c0 < 0 || n_cols < 0 || c0 + n_cols > a.cols())
    throw ShapeError("slice_cols: [" + std::to_string(c0) + "," +
                     std::to_string(c0 + n_cols) + ") out of " + shape_str(a.val()));
  Matrix v = a.val().middleCols(c0, n_cols);
  return make_result(std::move(v), {a}, [a, c0, n_cols](Node& n) {
    if (a.requires_grad()) a.node()->grad.middleCols(c0, n_cols) += n.grad;
  });
}

Value sum_all(const Value& a) {
  Matrix v(1, 1);
  v(0, 0) = a.val().sum();
  return make_result(std::move(v), {a}, [a](Node& n) {
    if (a.requires_grad()) a.node()->grad.array() += n.grad(0, 0);
  });
}

Value mean_rows(const Value& a) {
  if (a.rows() == 0) throw ShapeError("mean_rows: empty matrix");
  Matrix v = a.val().colwise().mean();
  return make_result(std::move(v), {a}, [a](Node& n) {
    if (a.requires_grad())
      a.node()->grad += (Matrix::Ones(a.rows(), 1) * n.grad.row(0)) / double(a.rows());
  });
}

Value reshape_rows(const Value& a, Eigen::Index r, Eigen::Index c) {
  if (r * c != a.rows() * a.cols())
    throw ShapeError("reshape_rows: cannot view " + shape_str(a.val()) + " as (" +
                     std::to_string(r) + "x" + std::to_string(c) + ")");
  using RowMajor =
      Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  RowMajor rm = a.val();
  Matrix v = Eigen::Map<RowMajor>(rm.data(), r, c);
  return make_result(std::move(v), {a}, [a, r, c](Node& n) {
    if (!a.requires_grad()) return;
    RowMajor g = n.grad;
    a.node()->grad +=
        Matrix(Eigen::Map<RowMajor>(g.data(), a.rows(), a.cols()));
  });
}

Value stack_blocks_to_cols(const Value& a, Eigen::Index n_blocks) {
  if (a.rows() % n_blocks != 0)
    throw ShapeError("stack_blocks_to_cols: " + shape_str(a.val()) +
                     " not divisible into " + std::to_string(n_blocks) + " blocks");
  const Eigen::Index n = a.rows() / n_blocks, h = a.cols();
  Matrix v(n, n_blocks * h);
  for (Eigen::Index b = 0; b < n_blocks; ++b)
    v.middleCols(b * h, h) = a.val().middleRows(b * n, n);
  return make_result(std::move(v), {a}, [a, n_blocks, n, h](Node& node) {
    if (!a.requires_grad()) return;
    for (Eigen::Index b = 0; b < n_blocks; ++b)
      a.node()->grad.middleRows(b * n, n) += node.grad.middleCols(b * h, h);
  });
}

Value cols_to_blocks(const Value& a, Eigen::Index n_blocks) {
  if (a.cols() % n_blocks != 0)
    throw ShapeError("cols_to_blocks: " + shape_str(a.val()) +
                     " not divisible into " + std::to_string(n_blocks) + " blocks");
  const Eigen::Index n = a.rows(), h = a.cols() / n_blocks;
  Matrix v(n_blocks * n, h);
  for (Eigen::Index b = 0; b < n_blocks; ++b)
    v.middleRows(b * n, n) = a.val().middleCols(b * h, h);
  return make_result(std::move(v), {a}, [a, n_blocks, n, h](Node& node) {
    if (!a.requires_grad()) return;
    for (Eigen::Index b = 0; b < n_blocks; ++b)
      a.node()->grad.middleCols(b * h, h) += node.grad.middleRows(b * n, n);
  });
}

Value gather_rows(const Value& a, std::vector<Eigen::Index> indices) {
  for (Eigen::Index i : indices)
    if (i < 0 || i >= a.rows())
      throw ShapeError("gather_rows: index " + std::to_string(i) + " out of " +
                       shape_str(a.val()));
  Matrix v(Eigen::Index(indices.size()), a.cols());
  for (size_t r = 0; r < indices.size(); ++r) v.row(r) = a.val().row(indices[r]);
  return make_result(std::move(v), {a}, [a, indices](Node& n) {
    if (!a.requires_grad()) return;
    for (size_t r = 0; r < indices.size(); ++r)
      a.node()->grad.row(indices[r]) += n.grad.row(Eigen::Index(r));
  });
}

Value mse(const Value& pred, const Value& target) {
  check_same_shape(pred.val(), target.val(), "mse");
  const double n_elems = double(pred.rows() * pred.cols());
  Matrix v(1, 1);
  v(0, 0) = (pred.val() - target.val()).array().square().sum() / n_elems;
  return make_result(std::move(v), {pred, target}, [pred, target, n_elems](Node& n) {
    Matrix d = (2.0 / n_elems) * n.grad(0, 0) * (pred.val() - target.val());
    if (pred.requires_grad()) pred.node()->grad += d;
    if (target.requires_grad()) target.node()->grad -= d;
  });
}

double gradient_check(const std::function<Value(const std::vector<Value>&)>& f,
                      std::vector<Value>& inputs, double eps) {
  Value out = f(inputs);
  if (out.rows() != 1 || out.cols() != 1)
    throw ShapeError("gradient_check: f must return a scalar");
  for (auto& in : inputs) in.zero_grad();
  out.backward();
  if (!out.val().allFinite()) throw DivergenceError("gradient_check: non-finite output");

  double max_rel = 0.0;
  for (auto& in : inputs) {
    if (!in.requires_grad()) continue;
    Matrix& m = in.mutable_val();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) {
        const double orig = m(i, j);
        m(i, j) = orig + eps;
        const double fp = f(inputs).item();
        m(i, j) = orig - eps;
        const double fm = f(inputs).item();
        m(i, j) = orig;
        if (!std::isfinite(fp) || !std::isfinite(fm))
          throw DivergenceError("gradient_check: non-finite perturbed output");
        const double numeric = (fp - fm) / (2.0 * eps);
        const double analytic = in.grad()(i, j);
        const double rel = std::abs(analytic - numeric) /
                           std::max({std::abs(analytic), std::abs(numeric), 1e-8});
        max_rel = std::max(max_rel, rel);
      }
    }
  }
  return max_rel;
}

}  // namespace flood::nn
