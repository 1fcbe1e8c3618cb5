#pragma once

#include <cmath>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "flood/nn/autodiff.hpp"

namespace flood::nn {

// Named parameter set theta. Iteration follows insertion order so that
// optimizers, checkpoints, and seeded init are all deterministic.
class ParamStore {
 public:
  Value add(const std::string& name, Matrix init) {
    if (index_.count(name))
      throw ConfigError("duplicate parameter name: " + name);
    Value v(std::move(init), /*requires_grad=*/true);
    index_[name] = entries_.size();
    entries_.emplace_back(name, v);
    return v;
  }

  const Value& at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
    return entries_[it->second].second;
  }

  bool contains(const std::string& name) const { return index_.count(name) > 0; }
  const std::vector<std::pair<std::string, Value>>& entries() const { return entries_; }
  size_t size() const { return entries_.size(); }

  void zero_grads() {
    for (auto& [_, v] : entries_) v.zero_grad();
  }

  bool all_finite() const {
    for (const auto& [_, v] : entries_)
      if (!v.val().allFinite()) return false;
    return true;
  }

 private:
  std::vector<std::pair<std::string, Value>> entries_;
  std::unordered_map<std::string, size_t> index_;
};

// Glorot-uniform weight init: U(+-sqrt(6/(fan_in+fan_out))).
Matrix glorot_uniform(Eigen::Index fan_in, Eigen::Index fan_out, Rng& rng);

// Sinusoidal positional encoding table, T x d.
Matrix positional_encoding(Eigen::Index t_len, Eigen::Index d);

struct Linear {
  Value W, b;
  Linear() = default;
  Linear(ParamStore& ps, const std::string& prefix, Eigen::Index in,
         Eigen::Index out, Rng& rng)
      : W(ps.add(prefix + ".W", glorot_uniform(in, out, rng))),
        b(ps.add(prefix + ".b", Matrix::Zero(1, out))) {}
  Value forward(const Value& x) const { return add(matmul(x, W), b); }
};

// Standard LSTM cell operating on a batch of row vectors.
// Gate layout in the fused weight matrices is [i | f | g | o];
// the forget-gate bias block starts at +1.
struct LSTMCell {
  Value Wx, Wh, b;
  Eigen::Index hidden = 0;
  LSTMCell() = default;
  LSTMCell(ParamStore& ps, const std::string& prefix, Eigen::Index in,
           Eigen::Index h, Rng& rng);
  // x: Bxin, h/c: Bxh  ->  (h', c')
  std::pair<Value, Value> step(const Value& x, const Value& h, const Value& c) const;
};

// One graph-convolution layer H' = relu(A_hat H W); A_hat is a constant.
struct GCNLayer {
  Value W;
  GCNLayer() = default;
  GCNLayer(ParamStore& ps, const std::string& prefix, Eigen::Index in,
           Eigen::Index out, Rng& rng)
      : W(ps.add(prefix + ".W", glorot_uniform(in, out, rng))) {}
  Value forward(const Value& h, const Value& a_hat) const {
    if (a_hat.rows() != a_hat.cols())
      throw ShapeError("gcn: adjacency not square " + shape_str(a_hat.val()));
    return relu(matmul(matmul(a_hat, h), W));
  }
};

struct AttentionOut {
  Value output;                 // Tq x d
  std::vector<Matrix> weights;  // per head, Tq x Tk (detached values)
};

// Scaled dot-product attention over n_heads subspaces of width d/n_heads.
struct MultiHeadAttention {
  Value Wq, Wk, Wv, Wo;
  Eigen::Index d = 0;
  int n_heads = 0;
  MultiHeadAttention() = default;
  MultiHeadAttention(ParamStore& ps, const std::string& prefix, Eigen::Index d_model,
                     int heads, Rng& rng);
  AttentionOut forward(const Value& q, const Value& k, const Value& v) const;
  // Self-attention over n_seqs equal-length sequences packed along rows;
  // projections run as one matmul, the attention core per sequence.
  Value forward_packed_self(const Value& x, Eigen::Index n_seqs,
                            Eigen::Index t_len) const;
};

// Pre-norm-free classic encoder block:
//   y = LN(x + MHA(x,x,x)); out = LN(y + FF(y)), FF = relu(y W1 + b1) W2 + b2.
struct EncoderBlock {
  MultiHeadAttention mha;
  Linear ff1, ff2;
  Value ln1_g, ln1_b, ln2_g, ln2_b;
  double dropout_rate = 0.0;
  EncoderBlock() = default;
  EncoderBlock(ParamStore& ps, const std::string& prefix, Eigen::Index d_model,
               int heads, Eigen::Index ff_dim, double dropout, Rng& rng);
  Value forward(const Value& x, bool training, Rng& rng) const;
  Value forward_packed(const Value& x, Eigen::Index n_seqs, Eigen::Index t_len,
                       bool training, Rng& rng) const;
};

}  // namespace flood::nn
