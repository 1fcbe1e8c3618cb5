#include "flood/nn/layers.hpp"

namespace flood::nn {

Matrix glorot_uniform(Eigen::Index fan_in, Eigen::Index fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / double(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Matrix m(fan_in, fan_out);
  for (Eigen::Index i = 0; i < fan_in; ++i)
    for (Eigen::Index j = 0; j < fan_out; ++j) m(i, j) = dist(rng);
  return m;
}

Matrix positional_encoding(Eigen::Index t_len, Eigen::Index d) {
  Matrix pe(t_len, d);
  for (Eigen::Index pos = 0; pos < t_len; ++pos) {
    for (Eigen::Index i = 0; i < d; ++i) {
      const double angle =
          double(pos) / std::pow(10000.0, double(2 * (i / 2)) / double(d));
      pe(pos, i) = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  }
  return pe;
}

LSTMCell::LSTMCell(ParamStore& ps, const std::string& prefix, Eigen::Index in,
                   Eigen::Index h, Rng& rng)
    : hidden(h) {
  Wx = ps.add(prefix + ".Wx", glorot_uniform(in, 4 * h, rng));
  Wh = ps.add(prefix + ".Wh", glorot_uniform(h, 4 * h, rng));
  Matrix bias = Matrix::Zero(1, 4 * h);
  bias.middleCols(h, h).setConstant(1.0);  // forget-gate bias
  b = ps.add(prefix + ".b", bias);
}

std::pair<Value, Value> LSTMCell::step(const Value& x, const Value& h,
                                       const Value& c) const {
  if (x.rows() != h.rows() || h.cols() != hidden || c.cols() != hidden)
    throw ShapeError("lstm: state shape mismatch x" + shape_str(x.val()) + " h" +
                     shape_str(h.val()) + " c" + shape_str(c.val()));
  Value z = add(add(matmul(x, Wx), matmul(h, Wh)), b);
  Value i = sigmoid(slice_cols(z, 0, hidden));
  Value f = sigmoid(slice_cols(z, hidden, hidden));
  Value g = tanh_op(slice_cols(z, 2 * hidden, hidden));
  Value o = sigmoid(slice_cols(z, 3 * hidden, hidden));
  Value c_next = add(mul(f, c), mul(i, g));
  Value h_next = mul(o, tanh_op(c_next));
  return {h_next, c_next};
}

MultiHeadAttention::MultiHeadAttention(ParamStore& ps, const std::string& prefix,
                                       Eigen::Index d_model, int heads, Rng& rng)
    : d(d_model), n_heads(heads) {
  if (heads <= 0 || d_model % heads != 0)
    throw ConfigError("attention: model dim " + std::to_string(d_model) +
                      " not divisible by n_heads " + std::to_string(heads));
  Wq = ps.add(prefix + ".Wq", glorot_uniform(d, d, rng));
  Wk = ps.add(prefix + ".Wk", glorot_uniform(d, d, rng));
  Wv = ps.add(prefix + ".Wv", glorot_uniform(d, d, rng));
  Wo = ps.add(prefix + ".Wo", glorot_uniform(d, d, rng));
}

AttentionOut MultiHeadAttention::forward(const Value& q, const Value& k,
                                         const Value& v) const {
  if (q.cols() != d || k.cols() != d || v.cols() != d || k.rows() != v.rows())
    throw ShapeError("attention: bad input shapes q" + shape_str(q.val()) + " k" +
                     shape_str(k.val()) + " v" + shape_str(v.val()));
  const Eigen::Index dh = d / n_heads;
  Value qp = matmul(q, Wq), kp = matmul(k, Wk), vp = matmul(v, Wv);
  std::vector<Value> head_outs;
  std::vector<Matrix> head_weights;
  head_outs.reserve(n_heads);
  for (int h = 0; h < n_heads; ++h) {
    Value qh = slice_cols(qp, h * dh, dh);
    Value kh = slice_cols(kp, h * dh, dh);
    Value vh = slice_cols(vp, h * dh, dh);
    Value scores = scale(matmul(qh, transpose(kh)), 1.0 / std::sqrt(double(dh)));
    Value w = softmax_rows(scores);
    head_weights.push_back(w.val());
    head_outs.push_back(matmul(w, vh));
  }
  return {matmul(concat_cols(head_outs), Wo), std::move(head_weights)};
}

Value MultiHeadAttention::forward_packed_self(const Value& x, Eigen::Index n_seqs,
                                              Eigen::Index t_len) const {
  if (x.rows() != n_seqs * t_len || x.cols() != d)
    throw ShapeError("attention: packed input " + shape_str(x.val()) +
                     " does not hold " + std::to_string(n_seqs) + " sequences of " +
                     std::to_string(t_len));
  const Eigen::Index dh = d / n_heads;
  Value qp = matmul(x, Wq), kp = matmul(x, Wk), vp = matmul(x, Wv);
  std::vector<Value> seq_outs;
  seq_outs.reserve(size_t(n_seqs));
  const double inv_sqrt = 1.0 / std::sqrt(double(dh));
  for (Eigen::Index s = 0; s < n_seqs; ++s) {
    std::vector<Value> head_outs;
    head_outs.reserve(size_t(n_heads));
    Value qs = slice_rows(qp, s * t_len, t_len);
    Value ks = slice_rows(kp, s * t_len, t_len);
    Value vs = slice_rows(vp, s * t_len, t_len);
    for (int h = 0; h < n_heads; ++h) {
      Value qh = slice_cols(qs, h * dh, dh);
      Value kh = slice_cols(ks, h * dh, dh);
      Value vh = slice_cols(vs, h * dh, dh);
      Value w = softmax_rows(scale(matmul(qh, transpose(kh)), inv_sqrt));
      head_outs.push_back(matmul(w, vh));
    }
    seq_outs.push_back(concat_cols(head_outs));
  }
  return matmul(concat_rows(seq_outs), Wo);
}

EncoderBlock::EncoderBlock(ParamStore& ps, const std::string& prefix,
                           Eigen::Index d_model, int heads, Eigen::Index ff_dim,
                           double dropout, Rng& rng)
    : mha(ps, prefix + ".mha", d_model, heads, rng),
      ff1(ps, prefix + ".ff1", d_model, ff_dim, rng),
      ff2(ps, prefix + ".ff2", ff_dim, d_model, rng),
      ln1_g(ps.add(prefix + ".ln1.g", Matrix::Ones(1, d_model))),
      ln1_b(ps.add(prefix + ".ln1.b", Matrix::Zero(1, d_model))),
      ln2_g(ps.add(prefix + ".ln2.g", Matrix::Ones(1, d_model))),
      ln2_b(ps.add(prefix + ".ln2.b", Matrix::Zero(1, d_model))),
      dropout_rate(dropout) {}

Value EncoderBlock::forward(const Value& x, bool training, Rng& rng) const {
  Value attn = dropout(mha.forward(x, x, x).output, dropout_rate, training, rng);
  Value y = layer_norm_rows(add(x, attn), ln1_g, ln1_b);
  Value ff = dropout(ff2.forward(gelu(ff1.forward(y))), dropout_rate, training, rng);
  return layer_norm_rows(add(y, ff), ln2_g, ln2_b);
}

Value EncoderBlock::forward_packed(const Value& x, Eigen::Index n_seqs,
                                   Eigen::Index t_len, bool training,
                                   Rng& rng) const {
  Value attn = dropout(mha.forward_packed_self(x, n_seqs, t_len), dropout_rate,
                       training, rng);
  Value y = layer_norm_rows(add(x, attn), ln1_g, ln1_b);
  Value ff = dropout(ff2.forward(gelu(ff1.forward(y))), dropout_rate, training, rng);
  return layer_norm_rows(add(y, ff), ln2_g, ln2_b);
}

}  // namespace flood::nn
