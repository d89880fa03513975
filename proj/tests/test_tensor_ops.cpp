#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>

#include "mainet/ops.hpp"
#include "mainet/rng.hpp"
#include "mainet/serialize.hpp"
#include "mainet/tensor.hpp"

using namespace mainet;

namespace {

Tensor randn(Shape shape, rng::Xoshiro256& gen, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (auto& v : t.mutable_data()) v = gen.normal() * scale;
  return t;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  REQUIRE(a.size() == b.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::fabs(a[i] - b[i]));
  return worst;
}

double max_rel_diff(const std::vector<double>& a, const std::vector<double>& b) {
  REQUIRE(a.size() == b.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double denom = std::max({std::fabs(a[i]), std::fabs(b[i]), 1e-12});
    worst = std::max(worst, std::fabs(a[i] - b[i]) / denom);
  }
  return worst;
}

}  // namespace

TEST_CASE("matmul identity and analytic cases") {
  const Tensor eye({2, 2}, {1, 0, 0, 1});
  const Tensor b({2, 2}, {3, 4, 5, 6});
  CHECK(ops::matmul(eye, b).data() == b.data());
  CHECK(ops::matmul(b, eye).data() == b.data());

  const Tensor row({1, 2}, {1, 2});
  const Tensor col({2, 1}, {3, 4});
  CHECK(ops::matmul(row, col).item() == doctest::Approx(11.0).epsilon(1e-15));
}

TEST_CASE("matmul matches the naive triple loop on random instances") {
  rng::Xoshiro256 gen(11);
  for (int rep = 0; rep < 30; ++rep) {
    const Tensor a = randn({7, 5}, gen);
    const Tensor b = randn({5, 3}, gen);
    std::vector<double> want(7 * 3, 0.0);
    for (std::size_t i = 0; i < 7; ++i)
      for (std::size_t j = 0; j < 3; ++j) {
        double acc = 0.0;
        for (std::size_t t = 0; t < 5; ++t) acc += a(i, t) * b(t, j);
        want[i * 3 + j] = acc;
      }
    CHECK(max_rel_diff(ops::matmul(a, b).data(), want) <= 1e-12);
  }
}

TEST_CASE("matmul rejects mismatched inner dimensions naming both shapes") {
  const Tensor a({2, 3});
  const Tensor b({4, 2});
  try {
    ops::matmul(a, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2x3]") != std::string::npos);
    CHECK(msg.find("[4x2]") != std::string::npos);
  }
}

TEST_CASE("softmax analytic cases") {
  const Tensor zeros({3});
  const auto u = ops::softmax(zeros, 0).data();
  for (double v : u) CHECK(v == doctest::Approx(1.0 / 3).epsilon(1e-12));

  const Tensor pair({2}, {std::log(2.0), 0.0});
  const auto s = ops::softmax(pair, 0).data();
  CHECK(s[0] == doctest::Approx(2.0 / 3).epsilon(1e-12));
  CHECK(s[1] == doctest::Approx(1.0 / 3).epsilon(1e-12));
}

TEST_CASE("softmax matches extended-precision direct evaluation") {
  rng::Xoshiro256 gen(21);
  for (int rep = 0; rep < 50; ++rep) {
    const Tensor x = randn({6}, gen, 4.0);
    long double denom = 0.0;
    for (double v : x.data()) denom += expl(static_cast<long double>(v));
    std::vector<double> want(6);
    for (std::size_t i = 0; i < 6; ++i)
      want[i] = static_cast<double>(expl(static_cast<long double>(x.data()[i])) / denom);
    CHECK(max_rel_diff(ops::softmax(x, 0).data(), want) <= 1e-12);
  }
}

TEST_CASE("softmax slices sum to one and shift invariance holds") {
  rng::Xoshiro256 gen(31);
  for (int rep = 0; rep < 20; ++rep) {
    const Tensor x = randn({4, 5}, gen, 6.0);
    for (std::size_t axis : {std::size_t{0}, std::size_t{1}}) {
      const Tensor s = ops::softmax(x, axis);
      const std::size_t slices = axis == 1 ? 4 : 5;
      const std::size_t len = axis == 1 ? 5 : 4;
      for (std::size_t sl = 0; sl < slices; ++sl) {
        double sum = 0.0;
        for (std::size_t i = 0; i < len; ++i) sum += axis == 1 ? s(sl, i) : s(i, sl);
        CHECK(std::fabs(sum - 1.0) <= 1e-9);
      }
    }
    const Tensor shifted = ops::add_scalar(x, 17.25);
    CHECK(max_abs_diff(ops::softmax(x, 1).data(), ops::softmax(shifted, 1).data()) <= 1e-12);
  }
}

TEST_CASE("conv2d identity and constant-image cases") {
  rng::Xoshiro256 gen(41);
  const Tensor x = randn({2, 5, 5}, gen);
  Tensor k1({2, 1, 1, 1}, {1.0, 1.0});
  ops::Conv2dSpec dw;
  dw.depthwise = true;
  CHECK(max_abs_diff(ops::conv2d(x, k1, dw).data(), x.data()) == 0.0);

  const double c = 2.5;
  const Tensor flat({1, 6, 6}, std::vector<double>(36, c));
  Tensor ones({1, 1, 3, 3}, std::vector<double>(9, 1.0));
  const Tensor y = ops::conv2d(flat, ones, dw);  // valid: 4x4 interior
  for (double v : y.data()) CHECK(v == doctest::Approx(9.0 * c).epsilon(1e-15));
}

TEST_CASE("conv2d matches the nested-loop oracle incl. 13x13 depthwise and strides") {
  rng::Xoshiro256 gen(51);
  auto oracle = [](const Tensor& x, const Tensor& k, std::size_t stride, std::size_t pad,
                   std::size_t dil, bool depthwise) {
    const std::size_t cin = x.dim(0), h = x.dim(1), w = x.dim(2);
    const std::size_t cout = k.dim(0), kk = k.dim(2);
    const std::size_t oh = (h + 2 * pad - dil * (kk - 1) - 1) / stride + 1;
    const std::size_t ow = (w + 2 * pad - dil * (kk - 1) - 1) / stride + 1;
    std::vector<double> out(cout * oh * ow, 0.0);
    for (std::size_t co = 0; co < cout; ++co)
      for (std::size_t i = 0; i < oh; ++i)
        for (std::size_t j = 0; j < ow; ++j) {
          double acc = 0.0;
          for (std::size_t ci = 0; ci < cin; ++ci) {
            if (depthwise && ci != co) continue;
            for (std::size_t u = 0; u < kk; ++u)
              for (std::size_t v = 0; v < kk; ++v) {
                const long iy = static_cast<long>(i * stride + u * dil) - static_cast<long>(pad);
                const long ix = static_cast<long>(j * stride + v * dil) - static_cast<long>(pad);
                if (iy < 0 || ix < 0 || iy >= static_cast<long>(h) || ix >= static_cast<long>(w))
                  continue;
                const std::size_t kci = depthwise ? 0 : ci;
                acc += x(ci, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix)) *
                       k.data()[((co * k.dim(1) + kci) * kk + u) * kk + v];
              }
          }
          out[(co * oh + i) * ow + j] = acc;
        }
    return out;
  };

  {
    const Tensor x = randn({4, 16, 16}, gen);
    const Tensor k = randn({4, 1, 13, 13}, gen);
    ops::Conv2dSpec spec;
    spec.padding = 6;
    spec.depthwise = true;
    CHECK(max_rel_diff(ops::conv2d(x, k, spec).data(), oracle(x, k, 1, 6, 1, true)) <= 1e-10);
  }
  {
    const Tensor x = randn({3, 11, 9}, gen);
    const Tensor k = randn({5, 3, 3, 3}, gen);
    ops::Conv2dSpec spec;
    spec.stride = 2;
    spec.padding = 1;
    CHECK(max_rel_diff(ops::conv2d(x, k, spec).data(), oracle(x, k, 2, 1, 1, false)) <= 1e-10);
  }
  {
    const Tensor x = randn({2, 14, 14}, gen);
    const Tensor k = randn({2, 1, 3, 3}, gen);
    ops::Conv2dSpec spec;
    spec.padding = 3;
    spec.dilation = 3;
    spec.depthwise = true;
    CHECK(max_rel_diff(ops::conv2d(x, k, spec).data(), oracle(x, k, 1, 3, 3, true)) <= 1e-10);
  }
}

TEST_CASE("conv2d rejects non-positive output dims and bad kernels") {
  const Tensor x({1, 4, 4});
  CHECK_THROWS_AS(ops::conv2d(x, Tensor({1, 1, 7, 7}), {}), ConfigError);
  CHECK_THROWS_AS(ops::conv2d(x, Tensor({1, 1, 2, 2}), {}), ConfigError);  // even kernel
  ops::Conv2dSpec dw;
  dw.depthwise = true;
  CHECK_THROWS_AS(ops::conv2d(x, Tensor({2, 1, 3, 3}), dw), ShapeError);
}

TEST_CASE("sigmoid, relu, pooling and concat basics") {
  CHECK(ops::sigmoid(Tensor::scalar(0.0)).item() == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(ops::relu(Tensor({2}, {-3.0, 4.0})).data() == std::vector<double>{0.0, 4.0});

  const double c = -1.75;
  const Tensor plane({3, 4, 4}, std::vector<double>(48, c));
  for (double v : ops::global_avg_pool(plane).data())
    CHECK(v == doctest::Approx(c).epsilon(1e-15));

  const Tensor a({2, 3});
  const Tensor b({2, 5});
  const std::array<Tensor, 2> parts{a, b};
  CHECK(ops::concat(parts, 1).shape() == Shape{2, 8});
  CHECK_THROWS_AS(ops::concat(std::array<Tensor, 2>{a, Tensor({3, 3})}, 1), ShapeError);
}

TEST_CASE("adaptive_avg_pool identity, quadrants, and window-enumeration oracle") {
  rng::Xoshiro256 gen(61);
  const Tensor x = randn({2, 4, 4}, gen);
  CHECK(max_abs_diff(ops::adaptive_avg_pool(x, 4, 4).data(), x.data()) == 0.0);

  const Tensor q = ops::adaptive_avg_pool(x, 2, 2);
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t i = 0; i < 2; ++i)
      for (std::size_t j = 0; j < 2; ++j) {
        const double mean = (x(c, 2 * i, 2 * j) + x(c, 2 * i, 2 * j + 1) +
                             x(c, 2 * i + 1, 2 * j) + x(c, 2 * i + 1, 2 * j + 1)) /
                            4.0;
        CHECK(q(c, i, j) == doctest::Approx(mean).epsilon(1e-14));
      }

  const Tensor y = randn({3, 7, 7}, gen);
  const Tensor p = ops::adaptive_avg_pool(y, 3, 3);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 3; ++j) {
        const std::size_t y0 = i * 7 / 3;
        const std::size_t y1 = static_cast<std::size_t>(std::ceil((i + 1) * 7.0 / 3.0));
        const std::size_t x0 = j * 7 / 3;
        const std::size_t x1 = static_cast<std::size_t>(std::ceil((j + 1) * 7.0 / 3.0));
        double acc = 0.0;
        for (std::size_t yy = y0; yy < y1; ++yy)
          for (std::size_t xx = x0; xx < x1; ++xx) acc += y(c, yy, xx);
        acc /= static_cast<double>((y1 - y0) * (x1 - x0));
        CHECK(std::fabs(p(c, i, j) - acc) <= 1e-12);
      }
}

TEST_CASE("adaptive_avg_pool preserves the global mean when windows partition exactly") {
  rng::Xoshiro256 gen(71);
  const Tensor x = randn({2, 12, 8}, gen);
  const Tensor p = ops::adaptive_avg_pool(x, 4, 4);
  double in_mean = 0.0, out_mean = 0.0;
  for (double v : x.data()) in_mean += v;
  for (double v : p.data()) out_mean += v;
  in_mean /= static_cast<double>(x.size());
  out_mean /= static_cast<double>(p.size());
  CHECK(std::fabs(in_mean - out_mean) <= 1e-9);
}

TEST_CASE("tensor serialization round-trips bit-exactly") {
  rng::Xoshiro256 gen(81);
  for (int rep = 0; rep < 10; ++rep) {
    Shape shape;
    const std::size_t rank = 1 + gen.below(3);
    for (std::size_t r = 0; r < rank; ++r) shape.push_back(1 + gen.below(6));
    const Tensor t = randn(shape, gen, 100.0);
    std::ostringstream os;
    io::write_tensor(os, t);
    // layout: u32 rank, u32 per dim, f64 payload, little endian
    CHECK(os.str().size() == 4 + 4 * rank + 8 * t.size());
    std::istringstream is(os.str());
    const Tensor back = io::read_tensor(is);
    CHECK(back.shape() == t.shape());
    CHECK(back.data() == t.data());
  }
}

TEST_CASE("linear applies x.W + b for vectors and matrices") {
  const Tensor w({3, 2}, {1, 2, 3, 4, 5, 6});
  const Tensor b({2}, {0.5, -0.5});
  const Tensor v({3}, {1, 1, 1});
  const auto out = ops::linear(v, w, b).data();
  CHECK(out[0] == doctest::Approx(9.5));
  CHECK(out[1] == doctest::Approx(11.5));

  const Tensor m({2, 3}, {1, 0, 0, 0, 1, 0});
  const Tensor y = ops::linear(m, w, Tensor());
  CHECK(y(0, 0) == doctest::Approx(1.0));
  CHECK(y(1, 1) == doctest::Approx(4.0));
}
