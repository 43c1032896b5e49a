#include <doctest.h>

#include <cmath>

#include "signet/autodiff.hpp"
#include "signet/error.hpp"
#include "test_util.hpp"

using namespace signet;
using testutil::check_gradients;
using testutil::random_tensor;

namespace {

// Loss with a fixed random upstream weighting so gradient bugs that vanish
// under an all-ones adjoint still show up.
Var weighted_sum(Tape& t, const Var& y, Rng rng) {
  Tensor w = random_tensor(y.value().shape(), rng);
  return reduce_sum(mul(y, t.constant(w)));
}

}  // namespace

TEST_CASE("matmul identity and hand-computed products") {
  Tape t;
  Var eye = t.constant(Tensor::matrix(2, 2, {1, 0, 0, 1}));
  Var a = t.constant(Tensor::matrix(2, 2, {1, 2, 3, 4}));
  Var prod = matmul(eye, a);
  for (std::size_t i = 0; i < 4; ++i) CHECK(prod.value()[i] == a.value()[i]);

  Var row = t.constant(Tensor::matrix(1, 2, {1, 2}));
  Var col = t.constant(Tensor::matrix(2, 1, {3, 4}));
  CHECK(matmul(row, col).value().item() == doctest::Approx(11.0));
}

TEST_CASE("matmul rejects mismatched shapes naming both") {
  Tape t;
  Var a = t.constant(Tensor({2, 3}, 1.0));
  Var b = t.constant(Tensor({2, 2}, 1.0));
  CHECK_THROWS_WITH_AS(matmul(a, b), doctest::Contains("2x3"), DimError);
  CHECK_THROWS_WITH_AS(matmul(a, b), doctest::Contains("2x2"), DimError);
}

TEST_CASE("matmul gradient: sum of 3x4 by 4x2 equals column sums of b") {
  Rng rng(7);
  Parameter a("a", random_tensor({3, 4}, rng));
  Parameter b("b", random_tensor({4, 2}, rng));
  a.zero_grad();
  Tape t;
  Var loss = reduce_sum(matmul(t.use(a), t.use(b)));
  t.backward(loss);
  // d sum(AB) / dA_{ik} = sum_j B_{kj}
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t k = 0; k < 4; ++k) {
      const double colsum = b.value.at(k, 0) + b.value.at(k, 1);
      CHECK(a.grad.at(i, k) == doctest::Approx(colsum).epsilon(1e-12));
    }
  }
  // and against finite differences
  const double err = check_gradients({&a, &b}, [&](Tape& tp) {
    return reduce_sum(matmul(tp.use(a), tp.use(b)));
  });
  CHECK(err < 1e-6);
}

TEST_CASE("sigmoid values, saturation and gradient") {
  Tape t;
  Var x = t.constant(Tensor::row({0.0, -1000.0, 1000.0, 1.0}));
  Var y = sigmoid(x);
  CHECK(y.value()[0] == doctest::Approx(0.5));
  CHECK(y.value()[1] == doctest::Approx(0.0));
  CHECK(y.value()[2] == doctest::Approx(1.0));
  CHECK(y.value()[3] == doctest::Approx(0.7310585786300049));
  CHECK(y.value().all_finite());

  Rng rng(3);
  Parameter p("p", Tensor::row({1.0}));
  const double err =
      check_gradients({&p}, [&](Tape& tp) { return reduce_sum(sigmoid(tp.use(p))); });
  CHECK(err < 1e-6);
  // gradient value at x=1 is y(1-y) = 0.196611...
  p.zero_grad();
  Tape t2;
  Var loss = reduce_sum(sigmoid(t2.use(p)));
  t2.backward(loss);
  CHECK(p.grad[0] == doctest::Approx(0.19661193324148185));
}

TEST_CASE("tanh odd symmetry and gradient at 0.5") {
  Rng rng(11);
  Tape t;
  Tensor xs = random_tensor({1, 16}, rng, -3.0, 3.0);
  Tensor neg = xs;
  for (double& v : neg.data()) v = -v;
  Var y1 = tanh_act(t.constant(xs));
  Var y2 = tanh_act(t.constant(neg));
  for (std::size_t i = 0; i < xs.numel(); ++i) {
    CHECK(y1.value()[i] == doctest::Approx(-y2.value()[i]).epsilon(1e-15));
  }

  Parameter p("p", Tensor::row({0.5}));
  p.zero_grad();
  Tape t2;
  Var loss = reduce_sum(tanh_act(t2.use(p)));
  t2.backward(loss);
  const double expected = 1.0 - std::tanh(0.5) * std::tanh(0.5);
  CHECK(p.grad[0] == doctest::Approx(expected).epsilon(1e-12));
  CHECK(expected == doctest::Approx(0.7864477329659274));
}

TEST_CASE("softmax rows: uniform, overflow-safe, gradient") {
  Tape t;
  Var flat = softmax_rows(t.constant(Tensor::row({0.0, 0.0, 0.0})));
  for (std::size_t i = 0; i < 3; ++i) CHECK(flat.value()[i] == doctest::Approx(1.0 / 3.0));

  Var big = softmax_rows(t.constant(Tensor::row({1000.0, 0.0})));
  CHECK(big.value()[0] == doctest::Approx(1.0));
  CHECK(big.value()[1] == doctest::Approx(0.0));
  CHECK(big.value().all_finite());

  Rng rng(5);
  Parameter p("p", random_tensor({2, 3}, rng));
  const double err = check_gradients({&p}, [&](Tape& tp) {
    return weighted_sum(tp, softmax_rows(tp.use(p)), Rng(99));
  });
  CHECK(err < 1e-6);
}

TEST_CASE("softmax rows sum to 1 within 1e-12 for |x| <= 50") {
  Rng rng(17);
  for (int rep = 0; rep < 20; ++rep) {
    Tape t;
    Var y = softmax_rows(t.constant(random_tensor({5, 7}, rng, -50.0, 50.0)));
    for (std::size_t i = 0; i < 5; ++i) {
      double sum = 0.0;
      for (std::size_t j = 0; j < 7; ++j) sum += y.value().at(i, j);
      CHECK(std::abs(sum - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("backward on parameters: ones for sum, w for quadratic") {
  Rng rng(23);
  Parameter w("w", random_tensor({3, 3}, rng));
  w.zero_grad();
  {
    Tape t;
    t.backward(reduce_sum(t.use(w)));
    for (std::size_t i = 0; i < w.size(); ++i) CHECK(w.grad[i] == doctest::Approx(1.0));
  }
  w.zero_grad();
  {
    Tape t;
    Var u = t.use(w);
    t.backward(scale(reduce_sum(mul(u, u)), 0.5));
    for (std::size_t i = 0; i < w.size(); ++i) {
      CHECK(w.grad[i] == doctest::Approx(w.value[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("backward on a constant scalar is a no-op") {
  Parameter w("w", Tensor({2}, 1.0));
  w.zero_grad();
  Tape t;
  t.use(w);
  t.backward(t.constant(Tensor::scalar(3.0)));
  CHECK(w.grad[0] == 0.0);
  CHECK(w.grad[1] == 0.0);
}

TEST_CASE("backward rejects non-scalar loss; unreachable parameters stay zero") {
  Parameter w("w", Tensor({2, 2}, 1.0));
  Parameter unused("u", Tensor({2}, 1.0));
  w.zero_grad();
  unused.zero_grad();
  Tape t;
  Var y = t.use(w);
  CHECK_THROWS_AS(t.backward(y), ContractError);
  Var loss = reduce_sum(y);
  t.use(unused);  // on tape but not feeding the loss
  t.backward(loss);
  for (std::size_t i = 0; i < unused.size(); ++i) CHECK(unused.grad[i] == 0.0);
}

TEST_CASE("gradients of remaining primitives match finite differences") {
  Rng rng(31);
  Parameter a("a", random_tensor({4, 5}, rng));
  Parameter b("b", random_tensor({4, 5}, rng));
  Parameter bias("bias", random_tensor({5}, rng));

  auto check = [&](const char* what, const std::function<Var(Tape&)>& fn) {
    INFO(what);
    CHECK(check_gradients({&a, &b, &bias}, fn) < 1e-6);
  };

  check("add", [&](Tape& t) { return weighted_sum(t, add(t.use(a), t.use(b)), Rng(1)); });
  check("subtract", [&](Tape& t) { return weighted_sum(t, subtract(t.use(a), t.use(b)), Rng(2)); });
  check("mul", [&](Tape& t) { return weighted_sum(t, mul(t.use(a), t.use(b)), Rng(3)); });
  check("scale", [&](Tape& t) { return weighted_sum(t, scale(t.use(a), -1.7), Rng(4)); });
  check("add_bias", [&](Tape& t) { return weighted_sum(t, add_bias(t.use(a), t.use(bias)), Rng(5)); });
  check("transpose", [&](Tape& t) { return weighted_sum(t, transpose(t.use(a)), Rng(6)); });
  check("reshape", [&](Tape& t) { return weighted_sum(t, reshape(t.use(a), {2, 10}), Rng(7)); });
  check("relu", [&](Tape& t) { return weighted_sum(t, relu(t.use(a)), Rng(8)); });
  check("concat rows", [&](Tape& t) { return weighted_sum(t, concat(t.use(a), t.use(b), 0), Rng(9)); });
  check("concat cols", [&](Tape& t) { return weighted_sum(t, concat(t.use(a), t.use(b), 1), Rng(10)); });
  check("slice rows", [&](Tape& t) { return weighted_sum(t, slice(t.use(a), 0, 1, 3), Rng(11)); });
  check("slice cols", [&](Tape& t) { return weighted_sum(t, slice(t.use(a), 1, 2, 5), Rng(12)); });
  check("mean_rows", [&](Tape& t) { return weighted_sum(t, mean_rows(t.use(a)), Rng(13)); });
  check("reduce_mean", [&](Tape& t) { return reduce_mean(t.use(a)); });
  check("matmul_nt", [&](Tape& t) { return weighted_sum(t, matmul_nt(t.use(a), t.use(b)), Rng(14)); });
}

TEST_CASE("layer_norm_rows gradient") {
  Rng rng(41);
  Parameter x("x", random_tensor({3, 6}, rng));
  Parameter g("g", random_tensor({6}, rng, 0.5, 1.5));
  Parameter b("b", random_tensor({6}, rng));
  const double err = check_gradients({&x, &g, &b}, [&](Tape& t) {
    return weighted_sum(t, layer_norm_rows(t.use(x), t.use(g), t.use(b)), Rng(15));
  });
  CHECK(err < 1e-5);
}

TEST_CASE("cross_entropy_logits matches -log softmax and its gradient") {
  Rng rng(47);
  Parameter logits("l", random_tensor({3, 2}, rng));
  const std::vector<int> labels{0, 1, 1};
  {
    Tape t;
    Var loss = cross_entropy_logits(t.use(logits), labels);
    double expected = 0.0;
    for (std::size_t i = 0; i < 3; ++i) {
      const double l0 = logits.value.at(i, 0), l1 = logits.value.at(i, 1);
      const double mx = std::max(l0, l1);
      const double lse = mx + std::log(std::exp(l0 - mx) + std::exp(l1 - mx));
      expected += lse - logits.value.at(i, static_cast<std::size_t>(labels[i]));
    }
    expected /= 3.0;
    CHECK(loss.value().item() == doctest::Approx(expected).epsilon(1e-12));
  }
  const double err = check_gradients(
      {&logits}, [&](Tape& t) { return cross_entropy_logits(t.use(logits), labels); });
  CHECK(err < 1e-6);
}

TEST_CASE("dropout: identity at rate 0, mask consistency between value and grad") {
  Rng rng(53);
  Parameter x("x", random_tensor({4, 4}, rng));
  Rng drop(99);
  x.zero_grad();
  Tape t;
  Var y = dropout(t.use(x), 0.5, drop);
  t.backward(reduce_sum(y));
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (y.value()[i] == 0.0) {
      CHECK(x.grad[i] == 0.0);
    } else {
      CHECK(y.value()[i] == doctest::Approx(2.0 * x.value[i]));
      CHECK(x.grad[i] == doctest::Approx(2.0));
    }
  }
  Rng unused(1);
  Tape t2;
  Var same = dropout(t2.use(x), 0.0, unused);
  CHECK(same.index() == t2.use(x).index());
}

TEST_CASE("shape discipline: output shapes depend only on input shapes") {
  Rng rng(61);
  for (int rep = 0; rep < 30; ++rep) {
    const std::size_t m = 1 + rng.next_below(8);
    const std::size_t k = 1 + rng.next_below(8);
    const std::size_t n = 1 + rng.next_below(8);
    Tape t;
    Var a = t.constant(random_tensor({m, k}, rng));
    Var b = t.constant(random_tensor({k, n}, rng));
    CHECK(matmul(a, b).value().shape() == Shape{m, n});
    CHECK(transpose(a).value().shape() == Shape{k, m});
    CHECK(softmax_rows(a).value().shape() == Shape{m, k});
    CHECK(mean_rows(a).value().shape() == Shape{1, k});
    CHECK(concat(a, a, 0).value().shape() == Shape{2 * m, k});
    CHECK(concat(a, a, 1).value().shape() == Shape{m, 2 * k});
  }
}

TEST_CASE("determinism: identical inputs give bit-identical outputs") {
  Rng rng(71);
  Tensor a = random_tensor({6, 6}, rng);
  Tensor b = random_tensor({6, 6}, rng);
  auto run = [&] {
    Tape t;
    Var y = matmul(tanh_act(t.constant(a)), sigmoid(t.constant(b)));
    return reduce_sum(y).value().item();
  };
  const double first = run();
  for (int i = 0; i < 5; ++i) CHECK(run() == first);
}

TEST_CASE("forward ops keep finite inputs finite") {
  Rng rng(83);
  Tape t;
  Var x = t.constant(random_tensor({4, 4}, rng, -700.0, 700.0));
  CHECK(sigmoid(x).value().all_finite());
  CHECK(tanh_act(x).value().all_finite());
  CHECK(softmax_rows(x).value().all_finite());
}
