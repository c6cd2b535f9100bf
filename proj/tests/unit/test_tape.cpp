#include <cmath>
#include <stdexcept>

#include "doctest.h"
#include "grad_check.hpp"
#include "marlab/nn.hpp"
#include "marlab/tape.hpp"

using namespace marlab;
using marlab::testing::check_loss_gradients;

TEST_SUITE_BEGIN("tape");

TEST_CASE("linear identity maps input unchanged") {
  ParamStore ps;
  Rng rng(1);
  Linear lin(ps, "lin", 2, 2, rng);
  ps.value(lin.w) = Tensor({2, 2}, {1, 0, 0, 1});
  ps.value(lin.b).fill(0.0);

  Tape t(&ps);
  int y = lin.forward(t, t.constant(Tensor({1, 2}, {3, 4})));
  CHECK(t.value(y)[0] == doctest::Approx(3.0));
  CHECK(t.value(y)[1] == doctest::Approx(4.0));
}

TEST_CASE("layer norm of a constant vector is zero before affine") {
  ParamStore ps;
  LayerNorm ln(ps, "ln", 3);
  Tape t(&ps);
  int y = ln.forward(t, t.constant(Tensor({1, 3}, {5, 5, 5})));
  for (int i = 0; i < 3; ++i) CHECK(t.value(y)[i] == doctest::Approx(0.0));
}

TEST_CASE("softmax of equal logits is uniform and rows sum to one") {
  Tape t;
  int y = t.softmax_lastdim(t.constant(Tensor({1, 2}, {0, 0})));
  CHECK(t.value(y)[0] == doctest::Approx(0.5));
  CHECK(t.value(y)[1] == doctest::Approx(0.5));

  Rng rng(7);
  Tensor logits({8, 5});
  for (int i = 0; i < logits.size(); ++i) logits[i] = rng.uniform(-4, 4);
  Tape t2;
  int s = t2.softmax_lastdim(t2.constant(logits));
  for (int r = 0; r < 8; ++r) {
    double sum = 0.0;
    for (int c = 0; c < 5; ++c) {
      double p = t2.value(s)[r * 5 + c];
      CHECK(p >= 0.0);
      sum += p;
    }
    CHECK(std::abs(sum - 1.0) < 1e-9);
  }
}

TEST_CASE("masked softmax gives exactly zero weight to masked entries") {
  Tensor mask({2, 4}, {1, 0, 1, 1, 0, 1, 0, 1});
  Tensor logits({2, 4}, {0.3, 9.0, -0.7, 1.2, 5.0, 0.1, 2.0, -3.0});
  Tape t;
  int y = t.softmax_lastdim(t.constant(logits), &mask);
  CHECK(t.value(y)[1] == 0.0);
  CHECK(t.value(y)[4] == 0.0);
  CHECK(t.value(y)[6] == 0.0);
  for (int r = 0; r < 2; ++r) {
    double sum = 0.0;
    for (int c = 0; c < 4; ++c) sum += t.value(y)[r * 4 + c];
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("fully masked row is an error") {
  Tensor mask({1, 3}, {0, 0, 0});
  Tensor logits({1, 3}, {1, 2, 3});
  Tape t;
  CHECK_THROWS(t.softmax_lastdim(t.constant(logits), &mask));
}

TEST_CASE("loss = x^2 has gradient 2x") {
  ParamStore ps;
  int x = ps.add("x", Tensor::scalar(3.0));
  Tape t(&ps);
  int node = t.param(x);
  int loss = t.sum(t.mul(node, node));
  t.backward(loss);
  CHECK(ps.grad(x)[0] == doctest::Approx(6.0));
}

TEST_CASE("sum of softmax has zero gradient") {
  ParamStore ps;
  int z = ps.add("z", Tensor({1, 4}, {0.3, -1.2, 2.0, 0.7}));
  Tape t(&ps);
  int loss = t.sum(t.softmax_lastdim(t.param(z)));
  t.backward(loss);
  for (int i = 0; i < 4; ++i) CHECK(std::abs(ps.grad(z)[i]) < 1e-12);
}

TEST_CASE("non-scalar loss is rejected") {
  Tape t;
  int v = t.constant(Tensor({2}, {1, 2}));
  CHECK_THROWS(t.backward(v));
}

TEST_CASE("shape mismatch errors name the op") {
  Tape t;
  int a = t.constant(Tensor({2}, {1, 2}));
  int b = t.constant(Tensor({3}, {1, 2, 3}));
  CHECK_THROWS_WITH_AS(t.add(a, b), doctest::Contains("add"), std::runtime_error);
}

TEST_CASE("two-layer mlp gradients match finite differences") {
  Rng rng(42);
  for (int trial = 0; trial < 5; ++trial) {
    ParamStore ps;
    Mlp mlp(ps, "mlp", {4, 8, 8, 3}, rng);
    Tensor input({6, 4});
    for (int i = 0; i < input.size(); ++i) input[i] = rng.uniform(-1, 1);
    auto res = check_loss_gradients(ps, [&](Tape& t) {
      int y = mlp.forward(t, t.constant(input));
      return t.mean(t.mul(y, y));
    });
    CAPTURE(res.worst_param);
    CHECK(res.ok);
    CHECK(res.worst_rel_err < 1e-4);
  }
}

TEST_CASE("elementary op gradients match finite differences") {
  Rng rng(99);
  ParamStore ps;
  int a = ps.add("a", init_linear_weight(3, 4, rng));
  int b = ps.add("b", init_linear_weight(3, 4, rng));
  auto res = check_loss_gradients(ps, [&](Tape& t) {
    int x = t.param(a);
    int y = t.param(b);
    int h = t.add(t.mul(x, y), t.softplus(t.sub(x, y)));
    h = t.mul_scalar(t.add_scalar(h, 0.3), 1.7);
    int e = t.exp_(t.clamp(h, -2.0, 2.0));
    int m = t.min_(e, t.relu(y));
    int mx = t.max_(m, t.elu(x));
    return t.mean(t.mul(mx, mx));
  });
  CAPTURE(res.worst_param);
  CHECK(res.ok);
}

TEST_CASE("matmul/bmm/log-softmax gradients match finite differences") {
  Rng rng(123);
  ParamStore ps;
  int a = ps.add("a", init_linear_weight(4, 6, rng));   // [4,6]
  int b = ps.add("b", init_linear_weight(6, 3, rng));   // [6,3]
  Tensor bt({2, 3, 5});
  for (int i = 0; i < bt.size(); ++i) bt[i] = rng.uniform(-1, 1);
  int c = ps.add("c", bt);
  auto res = check_loss_gradients(ps, [&](Tape& t) {
    int mm = t.matmul(t.param(a), t.param(b));          // [4,3]
    int lsm = t.log_softmax_lastdim(mm);
    int r1 = t.reshape(lsm, {2, 2, 3});
    int z = t.bmm(r1, t.param(c));                       // [2,2,5]
    int z2 = t.bmm_nt(z, t.param(c));                    // [2,2,3]
    int mx = t.max_lastdim(z2);
    return t.mean(t.mul(mx, mx));
  });
  CAPTURE(res.worst_param);
  CHECK(res.ok);
}

TEST_CASE("gather/scatter/select/stack gradients match finite differences") {
  Rng rng(321);
  ParamStore ps;
  int table = ps.add("table", init_linear_weight(5, 4, rng));
  auto res = check_loss_gradients(ps, [&](Tape& t) {
    int g = t.gather_rows(t.param(table), {0, 2, 2, 4});     // [4,4]
    int sc = t.scatter_rows(g, {1, 0, 3, 2}, 4);             // [4,4]
    int sel = t.select_col(sc, {0, 3, 1, 2});                // [4]
    int st = t.stack_slots({g, sc});                         // [4,2,4]
    int sl = t.slice_slot(st, 1);                            // [4,4]
    int sum1 = t.sum(t.mul(sl, sl));
    int sum2 = t.sum(t.mul_const(sel, Tensor({4}, {1.0, -2.0, 0.5, 3.0})));
    return t.add(sum1, sum2);
  });
  CAPTURE(res.worst_param);
  CHECK(res.ok);
}

TEST_CASE("layer norm and huber gradients match finite differences") {
  Rng rng(555);
  ParamStore ps;
  LayerNorm ln(ps, "ln", 6);
  int x = ps.add("x", init_linear_weight(4, 6, rng));
  Tensor target({4});
  for (int i = 0; i < 4; ++i) target[i] = rng.uniform(-2, 2);
  auto res = check_loss_gradients(ps, [&](Tape& t) {
    int y = ln.forward(t, t.param(x));
    int s = t.sum_lastdim(y);
    int h = t.huber(s, target, 0.7);
    return t.mean(h);
  });
  CAPTURE(res.worst_param);
  CHECK(res.ok);
}

TEST_SUITE_END();
