#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "mainet/grad_check.hpp"
#include "mainet/ops.hpp"
#include "mainet/rng.hpp"
#include "mainet/tape.hpp"

using namespace mainet;

namespace {

Tensor randn(Shape shape, rng::Xoshiro256& gen, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (auto& v : t.mutable_data()) v = gen.normal() * scale;
  return t;
}

}  // namespace

TEST_CASE("grad_check on sum of squares is essentially exact") {
  rng::Xoshiro256 gen(7);
  const double err = grad_check(
      [](const Tensor& x, GradTape* tape) {
        return ops::reduce_sum(ops::mul(x, x, tape), tape);
      },
      randn({8}, gen));
  CHECK(err <= 1e-8);
}

TEST_CASE("softmax followed by cross-entropy passes the gradient check") {
  rng::Xoshiro256 gen(9);
  const double err = grad_check(
      [](const Tensor& x, GradTape* tape) {
        return ops::cross_entropy(ops::softmax(x, 0, tape), 2, tape);
      },
      randn({5}, gen));
  CHECK(err <= 1e-6);
}

TEST_CASE("every differentiable op passes grad_check at 1e-6") {
  rng::Xoshiro256 gen(11);

  SUBCASE("matmul + transpose") {
    const Tensor b = randn({4, 3}, gen);
    CHECK(grad_check(
              [&](const Tensor& x, GradTape* t) {
                return ops::reduce_sum(ops::matmul(ops::transpose(x, t), b, t), t);
              },
              randn({4, 2}, gen)) <= 1e-6);
  }
  SUBCASE("elementwise add/sub/mul/scale") {
    const Tensor other = randn({6}, gen);
    CHECK(grad_check(
              [&](const Tensor& x, GradTape* t) {
                const Tensor y = ops::mul(ops::add(x, other, t), ops::sub(x, other, t), t);
                return ops::reduce_sum(ops::scale(y, 0.3, t), t);
              },
              randn({6}, gen)) <= 1e-6);
  }
  SUBCASE("exp/log/sigmoid/relu chain") {
    CHECK(grad_check(
              [](const Tensor& x, GradTape* t) {
                const Tensor pos = ops::add_scalar(ops::sigmoid(x, t), 0.1, t);
                return ops::reduce_mean(ops::log(ops::exp(pos, t), t), t);
              },
              randn({7}, gen)) <= 1e-6);
  }
  SUBCASE("conv2d w.r.t. input and kernel") {
    const Tensor x0 = randn({2, 6, 6}, gen);
    const Tensor k0 = randn({3, 2, 3, 3}, gen);
    ops::Conv2dSpec spec;
    spec.stride = 2;
    spec.padding = 1;
    CHECK(grad_check(
              [&](const Tensor& x, GradTape* t) {
                return ops::reduce_sum(ops::conv2d(x, k0, spec, t), t);
              },
              x0) <= 1e-6);
    CHECK(grad_check(
              [&](const Tensor& k, GradTape* t) {
                return ops::reduce_sum(ops::conv2d(x0, k, spec, t), t);
              },
              k0) <= 1e-6);
  }
  SUBCASE("pooling, channel scale and bias") {
    const Tensor z = randn({3}, gen);
    CHECK(grad_check(
              [&](const Tensor& x, GradTape* t) {
                const Tensor scaled = ops::scale_channels(x, z, t);
                const Tensor biased = ops::add_channel_bias(scaled, z, t);
                const Tensor pooled = ops::adaptive_avg_pool(biased, 2, 3, t);
                return ops::reduce_sum(ops::global_avg_pool(pooled, t), t);
              },
              randn({3, 5, 7}, gen)) <= 1e-6);
  }
  SUBCASE("broadcast ops against a scalar tensor") {
    const Tensor s = Tensor({1}, {1.7});
    Tensor sp = s;
    sp.set_requires_grad(true);
    CHECK(grad_check(
              [&](const Tensor& x, GradTape* t) {
                Tensor y = ops::add_bcast(x, s, t);
                y = ops::mul_bcast(y, s, t);
                y = ops::div_bcast(y, ops::add_scalar(s, 1.0, t), t);
                y = ops::sub_bcast(y, s, t);
                return ops::reduce_sum(y, t);
              },
              randn({5}, gen)) <= 1e-6);
    // and through the scalar itself
    const Tensor x0 = randn({5}, gen);
    CHECK(grad_check(
              [&](const Tensor& sc, GradTape* t) {
                return ops::reduce_sum(ops::div_bcast(ops::mul_bcast(x0, sc, t),
                                                      ops::add_scalar(sc, 2.0, t), t),
                                       t);
              },
              Tensor({1}, {0.8})) <= 1e-6);
  }
  SUBCASE("rowvec broadcasts, mean_axis0, concat, reshape") {
    const Tensor v = randn({4}, gen);
    CHECK(grad_check(
              [&](const Tensor& x, GradTape* t) {
                Tensor y = ops::mul_rowvec(ops::add_rowvec(x, v, t), v, t);
                const std::array<Tensor, 2> parts{y, x};
                const Tensor joined = ops::concat(parts, 1, t);
                const Tensor flat = ops::reshape(joined, {3 * 8}, t);
                return ops::reduce_sum(ops::mean_axis0(ops::reshape(flat, {6, 4}, t), t), t);
              },
              randn({3, 4}, gen)) <= 1e-6);
  }
  SUBCASE("softmax along both axes of a matrix") {
    CHECK(grad_check(
              [](const Tensor& x, GradTape* t) {
                const Tensor s0 = ops::softmax(x, 0, t);
                const Tensor s1 = ops::softmax(x, 1, t);
                return ops::reduce_sum(ops::mul(s0, s1, t), t);
              },
              randn({3, 4}, gen)) <= 1e-6);
  }
}

TEST_CASE("backward visits the tape exactly once and rejects a second pass") {
  Tensor x({3}, {1.0, 2.0, 3.0});
  x.set_requires_grad(true);
  GradTape tape;
  const Tensor loss = ops::reduce_sum(ops::mul(x, x, &tape), &tape);
  CHECK(tape.size() == 2);
  tape.backward(loss);
  CHECK(x.grad()[0] == doctest::Approx(2.0));
  CHECK(x.grad()[2] == doctest::Approx(6.0));
  CHECK(tape.consumed());
  CHECK_THROWS_AS(tape.backward(loss), ContractError);
  // recording onto a consumed tape is rejected too
  CHECK_THROWS_AS(ops::scale(x, 2.0, &tape), ContractError);
  tape.reset();
  CHECK(tape.size() == 0);
}

TEST_CASE("backward from a non-scalar is a contract error") {
  Tensor x({2, 2});
  x.set_requires_grad(true);
  GradTape tape;
  const Tensor y = ops::scale(x, 2.0, &tape);
  CHECK_THROWS_AS(tape.backward(y), ContractError);
}

TEST_CASE("grad_check rejects eps outside its valid window and non-scalar outputs") {
  Tensor x({2}, {0.5, 0.25});
  auto f = [](const Tensor& t, GradTape* tape) { return ops::reduce_sum(t, tape); };
  CHECK_THROWS_AS(grad_check(f, x, 1e-2), ContractError);
  CHECK_THROWS_AS(grad_check(f, x, 1e-9), ContractError);
  auto bad = [](const Tensor& t, GradTape* tape) { return ops::scale(t, 1.0, tape); };
  CHECK_THROWS_AS(grad_check(bad, x), ContractError);
}

TEST_CASE("gradients accumulate across reuse of the same tensor") {
  Tensor x({2}, {3.0, -1.0});
  x.set_requires_grad(true);
  GradTape tape;
  // y = x + x => dy/dx = 2 on each element
  const Tensor y = ops::reduce_sum(ops::add(x, x, &tape), &tape);
  tape.backward(y);
  CHECK(x.grad()[0] == doctest::Approx(2.0));
  CHECK(x.grad()[1] == doctest::Approx(2.0));
}
