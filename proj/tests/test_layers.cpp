#include "doctest.h"

#include "flood/nn/layers.hpp"

using namespace flood;
using namespace flood::nn;

namespace {

Matrix random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng) {
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = d(rng);
  return m;
}

// Collects a layer's parameters plus extra inputs into one vector for
// gradient_check; params first, then extras.
std::vector<Value> gather(const ParamStore& ps, std::vector<Value> extra = {}) {
  std::vector<Value> all;
  for (const auto& [_, v] : ps.entries()) all.push_back(v);
  for (auto& v : extra) all.push_back(v);
  return all;
}

}  // namespace

TEST_CASE("lstm cell: all-zero inputs and params give zero state") {
  ParamStore ps;
  Rng rng(1);
  LSTMCell cell(ps, "lstm", 3, 4, rng);
  // overwrite the random init with zeros (including the forget bias)
  for (const auto& [_, v] : ps.entries())
    const_cast<Matrix&>(v.val()).setZero();
  Value x(Matrix::Zero(1, 3)), h(Matrix::Zero(1, 4)), c(Matrix::Zero(1, 4));
  auto [h2, c2] = cell.step(x, h, c);
  CHECK(c2.val().cwiseAbs().maxCoeff() == doctest::Approx(0.0));
  CHECK(h2.val().cwiseAbs().maxCoeff() == doctest::Approx(0.0));
}

TEST_CASE("lstm cell: saturated forget gate passes cell state through") {
  ParamStore ps;
  Rng rng(2);
  LSTMCell cell(ps, "lstm", 3, 4, rng);
  // push forget-gate bias to +20: f ~= 1, so c' ~= c + i.*g
  Matrix& b = const_cast<Matrix&>(ps.at("lstm.b").val());
  b.middleCols(4, 4).setConstant(20.0);
  Value x(random_matrix(1, 3, rng)), h(random_matrix(1, 4, rng)),
      c(random_matrix(1, 4, rng));
  auto [h2, c2] = cell.step(x, h, c);

  Value z = add(add(matmul(x, ps.at("lstm.Wx")), matmul(h, ps.at("lstm.Wh"))),
                ps.at("lstm.b"));
  Matrix i = (1.0 / (1.0 + (-slice_cols(z, 0, 4).val().array()).exp()));
  Matrix g = slice_cols(z, 8, 4).val().array().tanh();
  Matrix expected = c.val() + i.cwiseProduct(g);
  CHECK((c2.val() - expected).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("lstm cell gradient vs finite differences") {
  Rng rng(42);
  for (int trial = 0; trial < 5; ++trial) {
    ParamStore ps;
    LSTMCell cell(ps, "lstm", 3, 4, rng);
    Value x(random_matrix(2, 3, rng), true);
    Value h(random_matrix(2, 4, rng), true);
    Value c(random_matrix(2, 4, rng), true);
    auto inputs = gather(ps, {x, h, c});
    auto f = [&](const std::vector<Value>&) {
      auto [h2, c2] = cell.step(x, h, c);
      return sum_all(add(mul(h2, h2), c2));
    };
    CHECK(gradient_check(f, inputs, 1e-5) < 1e-4);
  }
}

TEST_CASE("gcn layer: single node identity case") {
  ParamStore ps;
  Rng rng(3);
  GCNLayer layer(ps, "gcn", 2, 2, rng);
  const_cast<Matrix&>(ps.at("gcn.W").val()) = Matrix::Identity(2, 2);
  Value a_hat(Matrix::Ones(1, 1));
  Matrix hmat(1, 2);
  hmat << 2.0, -3.0;
  Value out = layer.forward(Value(hmat), a_hat);
  CHECK(out.val()(0, 0) == doctest::Approx(2.0));
  CHECK(out.val()(0, 1) == doctest::Approx(0.0));
}

TEST_CASE("gcn layer gradient vs finite differences") {
  Rng rng(9);
  for (int trial = 0; trial < 5; ++trial) {
    ParamStore ps;
    GCNLayer layer(ps, "gcn", 3, 2, rng);
    Matrix a = random_matrix(4, 4, rng).cwiseAbs();
    Matrix a_sym = 0.5 * (a + a.transpose());
    Value a_hat(a_sym);
    Value h(random_matrix(4, 3, rng), true);
    auto inputs = gather(ps, {h});
    auto f = [&](const std::vector<Value>&) {
      Value o = layer.forward(h, a_hat);
      return sum_all(mul(o, o));
    };
    CHECK(gradient_check(f, inputs, 1e-5) < 1e-4);
  }
}

TEST_CASE("attention: sequence of length 1 attends to itself") {
  ParamStore ps;
  Rng rng(4);
  MultiHeadAttention mha(ps, "mha", 8, 2, rng);
  Value x(random_matrix(1, 8, rng));
  auto out = mha.forward(x, x, x);
  REQUIRE(out.weights.size() == 2);
  for (const auto& w : out.weights) {
    CHECK(w.rows() == 1);
    CHECK(w.cols() == 1);
    CHECK(w(0, 0) == doctest::Approx(1.0));
  }
}

TEST_CASE("attention: identical keys get equal weight") {
  ParamStore ps;
  Rng rng(5);
  MultiHeadAttention mha(ps, "mha", 8, 2, rng);
  Value q(random_matrix(3, 8, rng));
  Matrix key_row = random_matrix(1, 8, rng);
  Matrix keys(2, 8);
  keys.row(0) = key_row;
  keys.row(1) = key_row;
  auto out = mha.forward(q, Value(keys), Value(keys));
  for (const auto& w : out.weights)
    for (int i = 0; i < 3; ++i) {
      CHECK(w(i, 0) == doctest::Approx(0.5));
      CHECK(w(i, 1) == doctest::Approx(0.5));
    }
}

TEST_CASE("attention weight rows sum to 1") {
  ParamStore ps;
  Rng rng(6);
  MultiHeadAttention mha(ps, "mha", 8, 4, rng);
  Value x(random_matrix(5, 8, rng));
  auto out = mha.forward(x, x, x);
  for (const auto& w : out.weights)
    for (int i = 0; i < w.rows(); ++i)
      CHECK(std::abs(w.row(i).sum() - 1.0) < 1e-6);
}

TEST_CASE("attention rejects indivisible head split") {
  ParamStore ps;
  Rng rng(7);
  CHECK_THROWS_AS(MultiHeadAttention(ps, "mha", 10, 3, rng), ConfigError);
}

TEST_CASE("attention gradient vs finite differences") {
  Rng rng(1234);
  for (int trial = 0; trial < 5; ++trial) {
    ParamStore ps;
    MultiHeadAttention mha(ps, "mha", 8, 2, rng);
    Value x(random_matrix(3, 8, rng), true);
    auto inputs = gather(ps, {x});
    auto f = [&](const std::vector<Value>&) {
      auto out = mha.forward(x, x, x);
      return sum_all(mul(out.output, out.output));
    };
    CHECK(gradient_check(f, inputs, 1e-5) < 1e-4);
  }
}

TEST_CASE("positional encoding closed form at position 0") {
  Matrix pe = positional_encoding(4, 6);
  for (int i = 0; i < 6; i += 2) CHECK(pe(0, i) == doctest::Approx(0.0));
  for (int i = 1; i < 6; i += 2) CHECK(pe(0, i) == doctest::Approx(1.0));
}

TEST_CASE("encoder block preserves shape") {
  ParamStore ps;
  Rng rng(8);
  EncoderBlock block(ps, "enc", 32, 4, 64, 0.0, rng);
  Value x(random_matrix(24, 32, rng));
  Rng fwd_rng(0);
  Value y = block.forward(x, false, fwd_rng);
  CHECK(y.rows() == 24);
  CHECK(y.cols() == 32);
  CHECK(y.val().allFinite());
}

TEST_CASE("encoder block gradient vs finite differences") {
  Rng rng(99);
  for (int trial = 0; trial < 5; ++trial) {
    ParamStore ps;
    EncoderBlock block(ps, "enc", 4, 2, 8, 0.0, rng);
    Value x(random_matrix(3, 4, rng), true);
    auto inputs = gather(ps, {x});
    Rng fwd_rng(0);
    auto f = [&](const std::vector<Value>&) {
      Value y = block.forward(x, false, fwd_rng);
      // small scale keeps FD roundoff below the 1e-8 relative-error floor
      return scale(sum_all(mul(y, y)), 0.01);
    };
    // wider step: the deep composition leaves cancellation-level gradients
    // where 1e-5 steps are dominated by f64 roundoff
    CHECK(gradient_check(f, inputs, 1e-4) < 1e-3);
  }
}

TEST_CASE("linear layer gradient vs finite differences") {
  Rng rng(55);
  for (int trial = 0; trial < 5; ++trial) {
    ParamStore ps;
    Linear lin(ps, "lin", 5, 3, rng);
    Value x(random_matrix(4, 5, rng), true);
    auto inputs = gather(ps, {x});
    auto f = [&](const std::vector<Value>&) {
      Value y = lin.forward(x);
      return sum_all(mul(y, y));
    };
    CHECK(gradient_check(f, inputs, 1e-5) < 1e-4);
  }
}

TEST_CASE("param store rejects duplicate names and keeps order") {
  ParamStore ps;
  ps.add("a", Matrix::Zero(1, 1));
  ps.add("b", Matrix::Zero(1, 1));
  CHECK_THROWS_AS(ps.add("a", Matrix::Zero(1, 1)), ConfigError);
  CHECK(ps.entries()[0].first == "a");
  CHECK(ps.entries()[1].first == "b");
}

TEST_CASE("packed self-attention matches per-sequence attention") {
  ParamStore ps;
  Rng rng(123);
  MultiHeadAttention mha(ps, "mha", 8, 2, rng);
  const int S = 3, T = 5;
  Matrix packed = random_matrix(S * T, 8, rng);
  Value out = mha.forward_packed_self(Value(packed), S, T);
  for (int s = 0; s < S; ++s) {
    Value xs(Matrix(packed.middleRows(s * T, T)));
    auto single = mha.forward(xs, xs, xs);
    CHECK((out.val().middleRows(s * T, T) - single.output.val())
              .cwiseAbs()
              .maxCoeff() < 1e-12);
  }
}

TEST_CASE("packed encoder block matches per-sequence blocks") {
  ParamStore ps;
  Rng rng(321);
  EncoderBlock block(ps, "enc", 8, 2, 16, 0.0, rng);
  const int S = 4, T = 6;
  Matrix packed = random_matrix(S * T, 8, rng);
  Rng r1(0), r2(0);
  Value out = block.forward_packed(Value(packed), S, T, false, r1);
  for (int s = 0; s < S; ++s) {
    Value xs(Matrix(packed.middleRows(s * T, T)));
    Value single = block.forward(xs, false, r2);
    CHECK((out.val().middleRows(s * T, T) - single.val()).cwiseAbs().maxCoeff() <
          1e-12);
  }
}
