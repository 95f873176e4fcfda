// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <functional>
#include <string>

#include "support.hpp"
#include "wyner/tensor.hpp"

using namespace wyner;
using wyner::testing::random_matrix;

TEST_CASE("square and its derivative at 3") {
  Tape tape;
  Var x = tape.variable(Tensor::scalar(3.0));
  Var f = x * x;
  CHECK(f.item() == 9.0);
  tape.backward(f);
  CHECK(tape.grad(x).item() == 6.0);
}

TEST_CASE("relu forward and subgradient") {
  Tape tape;
  Var x = tape.variable(Tensor::row({-1.0, 0.0, 2.0}));
  const Tensor r = relu(x).value();
  CHECK(r == Tensor::row({0.0, 0.0, 2.0}));

  Tape t2;
  Var y = t2.variable(Tensor::row({-1.0, 2.0}));
  t2.backward(sum(relu(y)));
  CHECK(t2.grad(y) == Tensor::row({0.0, 1.0}));

  Tape t3;
  Var zero = t3.variable(Tensor::row({0.0}));
  t3.backward(sum(relu(zero)));
  CHECK(t3.grad(zero)[0] == 0.0);
}

TEST_CASE("matmul of all-ones operands gives row sums") {
  Tape tape;
  Var a = tape.constant(Tensor({2, 3}, 1.0));
  Var b = tape.constant(Tensor({3, 1}, 1.0));
  const Tensor c = matmul(a, b).value();
  CHECK(c.shape() == std::vector<std::size_t>{2, 1});
  CHECK(c[0] == 3.0);
  CHECK(c[1] == 3.0);
}

TEST_CASE("shape errors") {
  Tape tape;
  Var a = tape.constant(Tensor({2, 3}, 1.0));
  Var b = tape.constant(Tensor({2, 3}, 1.0));
  CHECK_THROWS_AS(matmul(a, b), ShapeMismatch);
  CHECK_THROWS_AS(add(a, tape.constant(Tensor({3, 2}, 1.0))), ShapeMismatch);
  CHECK_THROWS_AS(slice(a, 2, 5), ShapeMismatch);
  CHECK_THROWS_AS(concat({a, tape.constant(Tensor({3, 1}, 1.0))}), ShapeMismatch);
}

TEST_CASE("backward needs a scalar output") {
  Tape tape;
  Var a = tape.variable(Tensor({2, 2}, 1.0));
  CHECK_THROWS_AS(tape.backward(a), NonScalarOutput);
}

TEST_CASE("non-finite values are reported with the op name") {
  Tape tape;
  Var a = tape.variable(Tensor::row({-1.0}));
  try {
    log(a);
    FAIL("log(-1) should throw");
  } catch (const NonFiniteValue& e) {
    CHECK(std::string(e.what()).find("log") != std::string::npos);
  }
  Var big = tape.variable(Tensor::row({1000.0}));
  CHECK_THROWS_AS(exp(big), NonFiniteValue);
}

TEST_CASE("unused leaves get zero gradients") {
  Tape tape;
  Var used = tape.variable(Tensor::row({1.0, 2.0}));
  Var unused = tape.variable(Tensor::row({5.0, 6.0}));
  tape.backward(sum(square(used)));
  CHECK(tape.grad(unused) == Tensor::row({0.0, 0.0}));
}

TEST_CASE("clamp passes gradient only inside the interval") {
  Tape tape;
  Var x = tape.variable(Tensor::row({-20.0, 0.5, 20.0}));
  tape.backward(sum(clamp(x, -10.0, 10.0)));
  CHECK(tape.grad(x) == Tensor::row({0.0, 1.0, 0.0}));
}

TEST_CASE("grad_check on a quadratic and a constant") {
  const double quad = grad_check(
      [](Tape&, std::span<const Var> p) { return sum(square(p[0])); }, {Tensor::row({1.0, 2.0})});
  CHECK(quad <= 1e-8);

  const double constant = grad_check(
      [](Tape& t, std::span<const Var> p) {
        return add(scale(sum(p[0]), 0.0), t.constant(Tensor::scalar(4.0)));
      },
      {Tensor::row({1.0, 2.0})});
  CHECK(constant == 0.0);
}

namespace {

// sum(c * op(x)) with a fixed random weight c, so every output coordinate
// contributes with a distinct coefficient.
double op_check(std::function<Var(Tape&, Var)> op, std::function<Tensor(Rng&)> point,
                std::uint64_t seed) {
  Rng rng(seed);
  double worst = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    Rng trial_rng = rng.split(static_cast<std::uint64_t>(trial));
    Tensor x = point(trial_rng);
    Tape probe;
    const Tensor shape = op(probe, probe.constant(x)).value();
    Tensor c = random_matrix(shape.rows(), shape.cols(), trial_rng);
    if (shape.rank() < 2) c = Tensor(shape.shape(), std::vector<double>(c.data().begin(), c.data().end()));
    worst = std::max(worst, grad_check(
                                [&](Tape& t, std::span<const Var> p) {
                                  return sum(mul(op(t, p[0]), t.constant(c)));
                                },
                                {x}));
  }
  return worst;
}

Tensor normal_3x4(Rng& rng) { return random_matrix(3, 4, rng); }

}  // namespace

TEST_CASE("every op matches central differences at 10 random points") {
  const double tol = 1e-4;
  CHECK(op_check([](Tape&, Var x) { return neg(x); }, normal_3x4, 1) <= tol);
  CHECK(op_check([](Tape&, Var x) { return scale(x, -2.5); }, normal_3x4, 2) <= tol);
  CHECK(op_check([](Tape&, Var x) { return add_scalar(x, 1.5); }, normal_3x4, 3) <= tol);
  CHECK(op_check([](Tape&, Var x) { return exp(x); }, normal_3x4, 4) <= tol);
  CHECK(op_check([](Tape&, Var x) { return log(exp(x)); }, normal_3x4, 5) <= tol);
  CHECK(op_check([](Tape&, Var x) { return log(x); },
                 [](Rng& r) {
                   Tensor t = random_matrix(3, 4, r);
                   for (double& v : t.data()) v = 0.5 + std::abs(v);
                   return t;
                 },
                 6) <= tol);
  CHECK(op_check([](Tape&, Var x) { return square(x); }, normal_3x4, 7) <= tol);
  CHECK(op_check([](Tape&, Var x) { return clamp(x, -0.7, 0.9); }, normal_3x4, 8) <= tol);
  CHECK(op_check([](Tape&, Var x) { return relu(x); }, normal_3x4, 9) <= tol);
  CHECK(op_check([](Tape&, Var x) { return leaky_relu(x, 0.2); }, normal_3x4, 10) <= tol);
  CHECK(op_check([](Tape&, Var x) { return sum(x); }, normal_3x4, 11) <= tol);
  CHECK(op_check([](Tape&, Var x) { return mean(x); }, normal_3x4, 12) <= tol);
  CHECK(op_check([](Tape&, Var x) { return row_sum(x); }, normal_3x4, 13) <= tol);
  CHECK(op_check([](Tape&, Var x) { return slice(x, 1, 3); }, normal_3x4, 14) <= tol);
  CHECK(op_check([](Tape&, Var x) { return concat({x, square(x), slice(x, 0, 1)}); }, normal_3x4,
                 15) <= tol);
  CHECK(op_check([](Tape&, Var x) { return mul(x, x); }, normal_3x4, 16) <= tol);

  // Binary ops: one operand is the checked variable, the other a constant,
  // including the broadcast row on either side.
  Rng k(99);
  const Tensor w = random_matrix(4, 2, k);
  const Tensor row = random_matrix(1, 4, k);
  const Tensor full = random_matrix(3, 4, k);
  CHECK(op_check([&](Tape& t, Var x) { return matmul(x, t.constant(w)); }, normal_3x4, 17) <= tol);
  CHECK(op_check([&](Tape& t, Var x) { return matmul(t.constant(Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6})), x); },
                 normal_3x4, 18) <= tol);
  CHECK(op_check([&](Tape& t, Var x) { return add(x, t.constant(row)); }, normal_3x4, 19) <= tol);
  CHECK(op_check([&](Tape& t, Var x) { return sub(t.constant(full), x); }, normal_3x4, 20) <= tol);
  CHECK(op_check([&](Tape& t, Var x) { return mul(x, t.constant(row)); }, normal_3x4, 21) <= tol);
  CHECK(op_check([&](Tape& t, Var x) { return add(t.constant(full), x); },
                 [](Rng& r) { return random_matrix(1, 4, r); }, 22) <= tol);
  CHECK(op_check([&](Tape& t, Var x) { return mul(t.constant(full), x); },
                 [](Rng& r) { return random_matrix(1, 4, r); }, 23) <= tol);
  CHECK(op_check([&](Tape& t, Var x) { return sub(t.constant(full), x); },
                 [](Rng& r) { return random_matrix(1, 4, r); }, 24) <= tol);
}

TEST_CASE("two-layer MLP loss matches central differences") {
  Rng rng(7);
  const Tensor input = random_matrix(5, 3, rng);
  const Tensor target = random_matrix(5, 2, rng);
  std::vector<Tensor> params = {random_matrix(3, 8, rng, 0.5), random_matrix(1, 8, rng, 0.1),
                                random_matrix(8, 2, rng, 0.5), random_matrix(1, 2, rng, 0.1)};
  const double err = grad_check(
      [&](Tape& t, std::span<const Var> p) {
        Var h = relu(add(matmul(t.constant(input), p[0]), p[1]));
        Var out = add(matmul(h, p[2]), p[3]);
        return mean(square(sub(out, t.constant(target))));
      },
      params, 1e-5);
  CHECK(err <= 1e-4);
}

TEST_CASE("backward is linear in the output") {
  Rng rng(3);
  const Tensor x0 = random_matrix(2, 3, rng);
  const double a = 0.7;
  const double b = -1.3;
  auto grad_of = [&](std::function<Var(Tape&, Var)> f) {
    Tape tape;
    Var x = tape.variable(x0);
    tape.backward(f(tape, x));
    return tape.grad(x);
  };
  auto l1 = [](Tape&, Var x) { return sum(exp(x)); };
  auto l2 = [](Tape&, Var x) { return mean(square(leaky_relu(x))); };
  const Tensor g1 = grad_of(l1);
  const Tensor g2 = grad_of(l2);
  const Tensor g = grad_of([&](Tape& t, Var x) { return add(scale(l1(t, x), a), scale(l2(t, x), b)); });
  for (std::size_t i = 0; i < g.size(); ++i) CHECK(std::abs(g[i] - (a * g1[i] + b * g2[i])) <= 1e-12);
}

TEST_CASE("replaying a tape gives bit-identical gradients") {
  Rng rng(5);
  Tape tape;
  Var x = tape.variable(random_matrix(4, 3, rng));
  Var w = tape.variable(random_matrix(3, 2, rng));
  Var loss = sum(square(relu(matmul(x, w))));
  tape.backward(loss);
  const Tensor gx = tape.grad(x);
  const Tensor gw = tape.grad(w);
  tape.backward(loss);
  CHECK(tape.grad(x) == gx);
  CHECK(tape.grad(w) == gw);
}

TEST_CASE("leaf parameters are referenced, constants get no gradient") {
  Tensor param = Tensor::row({2.0});
  Tape tape;
  Var p = tape.leaf(param);
  Var frozen = tape.leaf(param, false);
  Var c = tape.constant(Tensor::row({3.0}));
  tape.backward(sum(mul(mul(p, frozen), c)));
  CHECK(tape.grad(p)[0] == 6.0);
  CHECK(tape.grad(frozen)[0] == 0.0);
  CHECK(tape.grad(c)[0] == 0.0);
}
