#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "signet/error.hpp"
#include "signet/layers.hpp"
#include "test_util.hpp"

using namespace signet;
using testutil::check_gradients;
using testutil::max_abs_diff;
using testutil::random_tensor;

namespace {

// Direct nested-loop evaluation of the cross-correlation sum, written
// independently of the conv1d op.
Tensor conv_oracle(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t stride,
                   std::size_t pad) {
  const std::size_t c_in = x.rows(), len = x.cols();
  const std::size_t c_out = w.shape()[0], k = w.shape()[2];
  const std::size_t out_len = (len + 2 * pad - k) / stride + 1;
  Tensor out({c_out, out_len});
  for (std::size_t o = 0; o < c_out; ++o) {
    for (std::size_t j = 0; j < out_len; ++j) {
      double acc = 0.0;
      for (std::size_t c = 0; c < c_in; ++c) {
        for (std::size_t a = 0; a < k; ++a) {
          const long long pos = static_cast<long long>(j * stride + a) - static_cast<long long>(pad);
          const double xv =
              (pos >= 0 && pos < static_cast<long long>(len)) ? x.at(c, static_cast<std::size_t>(pos)) : 0.0;
          acc += w.data()[(o * c_in + c) * k + a] * xv;
        }
      }
      out.at(o, j) = acc + b[o];
    }
  }
  return out;
}

void zero_params(std::vector<Parameter*> params) {
  for (Parameter* p : params) {
    std::fill(p->value.data().begin(), p->value.data().end(), 0.0);
  }
}

}  // namespace

TEST_CASE("conv1d: kernel [1] is the identity, kernel [1,-1] differences") {
  Rng rng(1);
  Conv1DLayer ident("ident", 1, 1, 1, 1, 0, Activation::kNone, rng);
  ident.weights.value[0] = 1.0;
  ident.bias.value[0] = 0.0;
  Tape t;
  Ctx ctx{t};
  Tensor signal = random_tensor({1, 12}, rng);
  Var y = ident.forward(ctx, t.constant(signal));
  CHECK(max_abs_diff(y.value(), signal) == 0.0);

  Conv1DLayer diff("diff", 1, 1, 2, 1, 0, Activation::kNone, rng);
  diff.weights.value[0] = 1.0;
  diff.weights.value[1] = -1.0;
  diff.bias.value[0] = 0.0;
  Var d = diff.forward(ctx, t.constant(Tensor::row({3, 5, 9})));
  CHECK(d.value()[0] == doctest::Approx(-2.0));
  CHECK(d.value()[1] == doctest::Approx(-4.0));
}

TEST_CASE("conv1d equals the nested-loop oracle exactly") {
  Rng rng(2);
  for (int rep = 0; rep < 60; ++rep) {
    const std::size_t c_in = 1 + rng.next_below(4);
    const std::size_t c_out = 1 + rng.next_below(4);
    const std::size_t k = 1 + rng.next_below(7);
    const std::size_t len = k + rng.next_below(32 - k + 1);
    const std::size_t stride = 1 + rng.next_below(3);
    const std::size_t pad = rng.next_below(3);
    if (len + 2 * pad < k) continue;
    Conv1DLayer layer("c", c_in, c_out, k, stride, pad, Activation::kNone, rng);
    Tensor x = random_tensor({c_in, len}, rng);
    Tape t;
    Ctx ctx{t};
    Var y = layer.forward(ctx, t.constant(x));
    Tensor expect = conv_oracle(x, layer.weights.value, layer.bias.value, stride, pad);
    REQUIRE(y.value().shape() == expect.shape());
    CHECK(max_abs_diff(y.value(), expect) == 0.0);  // same precision, same order
  }
}

TEST_CASE("conv1d gradient vs finite differences on a 2-channel input") {
  Rng rng(3);
  Conv1DLayer layer("c", 2, 3, 3, 1, 1, Activation::kNone, rng);
  Parameter x("x", random_tensor({2, 10}, rng));
  Rng wrng(77);
  const Tensor upstream = random_tensor({3, 10}, wrng);
  const double err = check_gradients({&x, &layer.weights, &layer.bias}, [&](Tape& t) {
    Ctx ctx{t};
    return reduce_sum(mul(layer.forward(ctx, t.use(x)), t.constant(upstream)));
  });
  CHECK(err < 1e-6);
}

TEST_CASE("conv1d config errors") {
  Rng rng(4);
  Conv1DLayer layer("c", 1, 1, 9, 1, 0, Activation::kNone, rng);
  CHECK_THROWS_AS(layer.output_length(4), ConfigError);
  Tape t;
  Ctx ctx{t};
  CHECK_THROWS_AS(layer.forward(ctx, t.constant(Tensor({1, 4}, 1.0))), ConfigError);
}

TEST_CASE("pooling: max and mean forward fixtures") {
  Tape t;
  Ctx ctx{t};
  PoolLayer max2(2, PoolMode::kMax);
  Var m = max2.forward(ctx, t.constant(Tensor::row({1, 4, 2, 2})));
  CHECK(m.value()[0] == 4.0);
  CHECK(m.value()[1] == 2.0);

  PoolLayer mean2(2, PoolMode::kMean);
  Var a = mean2.forward(ctx, t.constant(Tensor::row({1, 3, 5, 7})));
  CHECK(a.value()[0] == 2.0);
  CHECK(a.value()[1] == 6.0);

  // trailing remainder dropped
  Var r = max2.forward(ctx, t.constant(Tensor::row({1, 2, 9})));
  CHECK(r.value().numel() == 1);
  CHECK(r.value()[0] == 2.0);

  CHECK_THROWS_AS(mean2.forward(ctx, t.constant(Tensor::row({1}))), ConfigError);
}

TEST_CASE("max-pool routes gradient to first argmax; fd check away from ties") {
  // explicit tie: both window entries equal, gradient goes to the first
  {
    Parameter x("x", Tensor::row({2.0, 2.0, 1.0, 5.0}));
    x.zero_grad();
    Tape t;
    Var y = pool1d(t.use(x), 2, PoolMode::kMax);
    t.backward(reduce_sum(y));
    CHECK(x.grad[0] == 1.0);
    CHECK(x.grad[1] == 0.0);
    CHECK(x.grad[2] == 0.0);
    CHECK(x.grad[3] == 1.0);
  }
  Rng rng(5);
  Parameter x("x", Tensor({2, 12}));
  // well-separated values keep finite differences away from the tie cliff
  for (std::size_t i = 0; i < x.size(); ++i) x.value[i] = rng.next_uniform(0, 1) + 0.001 * static_cast<double>(i);
  Rng urng(6);
  const Tensor upstream = random_tensor({2, 4}, urng);
  for (PoolMode mode : {PoolMode::kMax, PoolMode::kMean}) {
    const double err = check_gradients({&x}, [&](Tape& t) {
      return reduce_sum(mul(pool1d(t.use(x), 3, mode), t.constant(upstream)));
    });
    CHECK(err < 1e-5);
  }
}

TEST_CASE("lstm step with zero weights matches the closed form exactly") {
  Rng rng(7);
  LSTMLayer layer("l", 4, 3, false, rng);
  std::vector<Parameter*> params;
  layer.collect(params);
  zero_params(params);

  Tape t;
  Ctx ctx{t};
  Rng crng(8);
  Tensor c_prev = random_tensor({1, 3}, crng);
  Var x = t.constant(random_tensor({1, 4}, rng));
  Var h0 = t.constant(Tensor({1, 3}));
  Var c0 = t.constant(c_prev);
  auto [h_t, c_t] = layer.step(ctx, x, h0, c0);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(c_t.value()[i] == 0.5 * c_prev[i]);
    CHECK(h_t.value()[i] == 0.5 * std::tanh(0.5 * c_prev[i]));
  }

  // zero cell state and zero candidate keep h at 0 regardless of gates
  Var czero = t.constant(Tensor({1, 3}));
  auto [h2, c2] = layer.step(ctx, x, h0, czero);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(h2.value()[i] == 0.0);
    CHECK(c2.value()[i] == 0.0);
  }
}

TEST_CASE("lstm: gradients of all 8 parameter blocks through 3 steps") {
  Rng rng(9);
  LSTMLayer layer("l", 2, 3, true, rng);
  std::vector<Parameter*> params;
  layer.collect(params);
  REQUIRE(params.size() == 8);
  Tensor sequence = random_tensor({3, 2}, rng);
  const double err = check_gradients(params, [&](Tape& t) {
    Ctx ctx{t};
    Var states = layer.forward_sequence(ctx, t.constant(sequence));
    Var last = slice(states, 0, 2, 3);
    return reduce_sum(last);
  });
  CHECK(err < 1e-4);
}

TEST_CASE("lstm rejects mismatched shapes") {
  Rng rng(10);
  LSTMLayer layer("l", 4, 3, true, rng);
  Tape t;
  Ctx ctx{t};
  Var x = t.constant(Tensor({1, 5}, 1.0));
  Var h = t.constant(Tensor({1, 3}));
  CHECK_THROWS_AS(layer.step(ctx, x, h, h), DimError);
}

TEST_CASE("attention: single segment gives A=[[1]]; zero Q/K gives uniform rows") {
  Rng rng(11);
  MultiHeadAttention mha("a", 8, 2, rng);
  {
    Tape t;
    Ctx ctx{t};
    AttentionTrace trace;
    mha.forward(ctx, t.constant(random_tensor({1, 8}, rng)), &trace);
    REQUIRE(trace.attention.size() == 2);
    for (const Tensor& a : trace.attention) {
      CHECK(a.numel() == 1);
      CHECK(a[0] == 1.0);
    }
  }
  {
    std::fill(mha.w_query.value.data().begin(), mha.w_query.value.data().end(), 0.0);
    std::fill(mha.w_key.value.data().begin(), mha.w_key.value.data().end(), 0.0);
    Tape t;
    Ctx ctx{t};
    AttentionTrace trace;
    mha.forward(ctx, t.constant(random_tensor({5, 8}, rng)), &trace);
    for (const Tensor& a : trace.attention) {
      for (std::size_t i = 0; i < a.numel(); ++i) CHECK(a[i] == doctest::Approx(0.2).epsilon(1e-12));
    }
  }
}

TEST_CASE("attention matches a direct loop oracle on one head") {
  Rng rng(12);
  const std::size_t n = 3, d = 2;
  MultiHeadAttention mha("a", d, 1, rng);
  Tensor x = random_tensor({n, d}, rng);

  Tape t;
  Ctx ctx{t};
  Var out = mha.forward(ctx, t.constant(x));

  // oracle: Q = XWq, K = XWk, V = XWv, A = softmax(QK^T / sqrt(d)), (AV)Wo + b
  auto matmul_plain = [](const Tensor& a, const Tensor& b) {
    Tensor c({a.rows(), b.cols()});
    for (std::size_t i = 0; i < a.rows(); ++i) {
      for (std::size_t j = 0; j < b.cols(); ++j) {
        double acc = 0.0;
        for (std::size_t k2 = 0; k2 < a.cols(); ++k2) acc += a.at(i, k2) * b.at(k2, j);
        c.at(i, j) = acc;
      }
    }
    return c;
  };
  Tensor q = matmul_plain(x, mha.w_query.value);
  Tensor k = matmul_plain(x, mha.w_key.value);
  Tensor v = matmul_plain(x, mha.w_value.value);
  Tensor scores({n, n});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t k2 = 0; k2 < d; ++k2) acc += q.at(i, k2) * k.at(j, k2);
      scores.at(i, j) = acc / std::sqrt(static_cast<double>(d));
    }
  }
  Tensor attn({n, n});
  for (std::size_t i = 0; i < n; ++i) {
    double mx = scores.at(i, 0);
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, scores.at(i, j));
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) sum += std::exp(scores.at(i, j) - mx);
    for (std::size_t j = 0; j < n; ++j) attn.at(i, j) = std::exp(scores.at(i, j) - mx) / sum;
  }
  Tensor head = matmul_plain(attn, v);
  Tensor expect = matmul_plain(head, mha.w_out.value);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) expect.at(i, j) += mha.b_out.value[j];
  }
  CHECK(max_abs_diff(out.value(), expect) < 1e-10);
}

TEST_CASE("attention gradient check on projections") {
  Rng rng(13);
  MultiHeadAttention mha("a", 6, 2, rng);
  Tensor x = random_tensor({4, 6}, rng);
  std::vector<Parameter*> params;
  mha.collect(params);
  Rng urng(14);
  const Tensor upstream = random_tensor({4, 6}, urng);
  const double err = check_gradients(params, [&](Tape& t) {
    Ctx ctx{t};
    return reduce_sum(mul(mha.forward(ctx, t.constant(x)), t.constant(upstream)));
  });
  CHECK(err < 1e-5);
}

TEST_CASE("attention rows are stochastic for logits up to |50|") {
  Rng rng(15);
  MultiHeadAttention mha("a", 4, 1, rng);
  for (int rep = 0; rep < 10; ++rep) {
    Tape t;
    Ctx ctx{t};
    AttentionTrace trace;
    mha.forward(ctx, t.constant(random_tensor({6, 4}, rng, -5.0, 5.0)), &trace);
    for (const Tensor& a : trace.attention) {
      for (std::size_t i = 0; i < a.rows(); ++i) {
        double sum = 0.0;
        for (std::size_t j = 0; j < a.cols(); ++j) {
          sum += a.at(i, j);
          CHECK(a.at(i, j) >= 0.0);
        }
        CHECK(std::abs(sum - 1.0) < 1e-12);
      }
    }
  }
}

TEST_CASE("attention is permutation-equivariant without positions") {
  Rng rng(16);
  MultiHeadAttention mha("a", 8, 4, rng);
  const std::size_t n = 6;
  Tensor x = random_tensor({n, 8}, rng);
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  for (int rep = 0; rep < 5; ++rep) {
    shuffle(perm, rng);
    Tensor px({n, 8});
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < 8; ++j) px.at(i, j) = x.at(perm[i], j);
    }
    Tape t;
    Ctx ctx{t};
    Tensor base = mha.forward(ctx, t.constant(x)).value();
    Tensor permuted = mha.forward(ctx, t.constant(px)).value();
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < 8; ++j) {
        CHECK(permuted.at(i, j) == doctest::Approx(base.at(perm[i], j)).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("attention construction rejects indivisible widths") {
  Rng rng(17);
  CHECK_THROWS_AS(MultiHeadAttention("a", 10, 4, rng), ConfigError);
}

TEST_CASE("positional embedding: identity cases and pass-through gradient") {
  Rng rng(18);
  PositionalEmbedding pos("p", 4, 6, rng);
  Tensor x = random_tensor({4, 6}, rng);
  {
    std::fill(pos.table.value.data().begin(), pos.table.value.data().end(), 0.0);
    Tape t;
    Ctx ctx{t};
    CHECK(max_abs_diff(pos.forward(ctx, t.constant(x)).value(), x) == 0.0);
  }
  {
    Tensor table = random_tensor({4, 6}, rng);
    pos.table.value = table;
    Tape t;
    Ctx ctx{t};
    CHECK(max_abs_diff(pos.forward(ctx, t.constant(Tensor({4, 6}))).value(), table) == 0.0);
  }
  {
    // gradient wrt the table equals the upstream weighting
    Rng urng(19);
    Tensor upstream = random_tensor({4, 6}, urng);
    pos.table.zero_grad();
    Tape t;
    Ctx ctx{t};
    Var y = pos.forward(ctx, t.constant(x));
    t.backward(reduce_sum(mul(y, t.constant(upstream))));
    CHECK(max_abs_diff(pos.table.grad, upstream) < 1e-15);
  }
  {
    Tape t;
    Ctx ctx{t};
    CHECK_THROWS_AS(pos.forward(ctx, t.constant(Tensor({3, 6}, 1.0))), DimError);
  }
}

TEST_CASE("dense layer: forward shape checks and fd gradient") {
  Rng rng(20);
  DenseLayer dense("d", 5, 3, Activation::kTanh, rng);
  Parameter x("x", random_tensor({2, 5}, rng));
  Rng urng(21);
  const Tensor upstream = random_tensor({2, 3}, urng);
  const double err = check_gradients({&x, &dense.weights, &dense.bias}, [&](Tape& t) {
    Ctx ctx{t};
    return reduce_sum(mul(dense.forward(ctx, t.use(x)), t.constant(upstream)));
  });
  CHECK(err < 1e-6);
  Tape t;
  Ctx ctx{t};
  CHECK_THROWS_AS(dense.forward(ctx, t.constant(Tensor({2, 4}, 1.0))), DimError);
}

TEST_CASE("glorot init is deterministic per seed and within limits") {
  Rng a(42), b(42), c(43);
  Tensor ta = glorot_uniform({20, 10}, 10, 20, a);
  Tensor tb = glorot_uniform({20, 10}, 10, 20, b);
  Tensor tc = glorot_uniform({20, 10}, 10, 20, c);
  CHECK(max_abs_diff(ta, tb) == 0.0);
  CHECK(max_abs_diff(ta, tc) > 0.0);
  const double limit = std::sqrt(6.0 / 30.0);
  for (std::size_t i = 0; i < ta.numel(); ++i) {
    CHECK(std::abs(ta[i]) <= limit);
  }
}
