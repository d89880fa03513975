#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "mainet/backbone.hpp"
#include "mainet/grad_check.hpp"
#include "mainet/ops.hpp"
#include "mainet/rng.hpp"

using namespace mainet;
using namespace mainet::backbone;

namespace {

Tensor randn(Shape shape, rng::Xoshiro256& gen, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (auto& v : t.mutable_data()) v = gen.normal() * scale;
  return t;
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

BackboneConfig small_config() {
  BackboneConfig cfg;
  cfg.stage_channels = {4, 8, 12, 16};
  cfg.large_kernel = 5;
  cfg.dilated_branches = {{5, 1}, {3, 2}};
  cfg.blocks_per_stage = 1;
  cfg.input_size = 16;
  cfg.feature_dim = 64;
  return cfg;
}

}  // namespace

TEST_CASE("se_block: zero excitation weights halve the input") {
  SeBlock se = SeBlock::zeros(8, 4);
  rng::Xoshiro256 gen(3);
  const Tensor x = randn({8, 5, 5}, gen);
  const Tensor y = se.forward(x);
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i)
    worst = std::max(worst, std::fabs(y.data()[i] - 0.5 * x.data()[i]));
  CHECK(worst <= 1e-15);
}

TEST_CASE("se_block: zero input stays zero and gates stay in (0,1)") {
  const SeBlock se = SeBlock::init(8, 4, 17);
  const Tensor zero({8, 3, 3});
  for (double v : se.forward(zero).data()) CHECK(v == 0.0);

  rng::Xoshiro256 gen(5);
  const Tensor x = randn({8, 6, 6}, gen, 2.0);
  const Tensor y = se.forward(x);
  // output magnitude never exceeds input magnitude per element (gates < 1)
  for (std::size_t i = 0; i < x.size(); ++i) {
    CHECK(std::fabs(y.data()[i]) <= std::fabs(x.data()[i]) + 1e-15);
    if (x.data()[i] != 0.0) CHECK(std::fabs(y.data()[i]) > 0.0);
  }
}

TEST_CASE("se_block matches the pool/mlp/scale composition oracle") {
  const SeBlock se = SeBlock::init(8, 4, 29);
  rng::Xoshiro256 gen(7);
  const Tensor x = randn({8, 4, 4}, gen);
  const Tensor got = se.forward(x);

  std::vector<double> pooled(8, 0.0);
  for (std::size_t c = 0; c < 8; ++c) {
    for (std::size_t p = 0; p < 16; ++p) pooled[c] += x.data()[c * 16 + p];
    pooled[c] /= 16.0;
  }
  std::vector<double> hidden(2, 0.0);
  for (std::size_t h = 0; h < 2; ++h) {
    double acc = se.b1(h);
    for (std::size_t c = 0; c < 8; ++c) acc += pooled[c] * se.w1(c, h);
    hidden[h] = std::max(acc, 0.0);
  }
  double worst = 0.0;
  for (std::size_t c = 0; c < 8; ++c) {
    double logit = se.b2(c);
    for (std::size_t h = 0; h < 2; ++h) logit += hidden[h] * se.w2(h, c);
    const double gate = 1.0 / (1.0 + std::exp(-logit));
    for (std::size_t p = 0; p < 16; ++p)
      worst = std::max(worst, std::fabs(got.data()[c * 16 + p] - x.data()[c * 16 + p] * gate));
  }
  CHECK(worst <= 1e-12);
}

TEST_CASE("se_block rejects channels not divisible by the reduction") {
  CHECK_THROWS_AS(SeBlock::init(6, 4, 1), ConfigError);
}

TEST_CASE("dilated_reparam: single (13,1) branch is a plain 13x13 depthwise conv") {
  rng::Xoshiro256 gen(11);
  auto conv = DilatedReparamConv::init(2, 13, {{13, 1}}, 99);
  const Tensor x = randn({2, 16, 16}, gen);
  ops::Conv2dSpec spec;
  spec.padding = 6;
  spec.depthwise = true;
  const Tensor plain = ops::conv2d(x, conv.branches[0].weight, spec);
  CHECK(max_rel_diff(conv.forward(x).data(), plain.data()) <= 1e-15);
}

TEST_CASE("dilated_reparam: multi-branch forward is the sum of branch convs; zero in, zero out") {
  rng::Xoshiro256 gen(13);
  auto conv = DilatedReparamConv::init(3, 13, {{13, 1}, {3, 2}}, 7);
  const Tensor x = randn({3, 12, 12}, gen);

  ops::Conv2dSpec s0;
  s0.padding = 6;
  s0.depthwise = true;
  ops::Conv2dSpec s1;
  s1.padding = 2;
  s1.dilation = 2;
  s1.depthwise = true;
  const Tensor want = ops::add(ops::conv2d(x, conv.branches[0].weight, s0),
                               ops::conv2d(x, conv.branches[1].weight, s1));
  CHECK(max_rel_diff(conv.forward(x).data(), want.data()) <= 1e-12);

  for (double v : conv.forward(Tensor({3, 12, 12})).data()) CHECK(v == 0.0);
}

TEST_CASE("reparam_merge: dilation-2 3x3 embeds into a 5x5 grid at even offsets") {
  auto conv = DilatedReparamConv::init(1, 5, {{3, 2}}, 23);
  const Tensor merged = conv.merged_kernel();
  REQUIRE(merged.shape() == Shape{1, 1, 5, 5});
  const auto& w = conv.branches[0].weight;
  for (std::size_t u = 0; u < 5; ++u)
    for (std::size_t v = 0; v < 5; ++v) {
      const double m = merged.data()[u * 5 + v];
      if (u % 2 == 0 && v % 2 == 0)
        CHECK(m == w.data()[(u / 2) * 3 + v / 2]);
      else
        CHECK(m == 0.0);
    }
}

TEST_CASE("reparam_merge: a 1x1 branch lands centered in the large kernel") {
  auto conv = DilatedReparamConv::init(1, 13, {{1, 1}}, 31);
  const Tensor merged = conv.merged_kernel();
  for (std::size_t u = 0; u < 13; ++u)
    for (std::size_t v = 0; v < 13; ++v) {
      const double m = merged.data()[u * 13 + v];
      if (u == 6 && v == 6)
        CHECK(m == conv.branches[0].weight.data()[0]);
      else
        CHECK(m == 0.0);
    }
}

TEST_CASE("reparam merged kernel equals multi-branch forward on random configs") {
  rng::Xoshiro256 gen(37);
  const std::vector<std::vector<std::pair<std::size_t, std::size_t>>> configs = {
      {{13, 1}, {3, 2}, {5, 3}},
      {{13, 1}, {5, 2}, {3, 3}},
      {{5, 1}, {3, 2}},
      {{1, 1}},
      {{7, 1}, {3, 3}, {5, 2}, {1, 1}},
  };
  for (const auto& spec : configs) {
    std::size_t large = 0;
    for (const auto& [k, d] : spec) large = std::max(large, d * (k - 1) + 1);
    if (large % 2 == 0) ++large;
    auto conv = DilatedReparamConv::init(8, std::max<std::size_t>(large, 13), spec, gen.next());
    const Tensor x = randn({8, 32, 32}, gen);
    CHECK(max_rel_diff(conv.forward(x).data(), conv.forward_merged(x).data()) <= 1e-10);
  }
}

TEST_CASE("reparam rejects branches that overflow the large-kernel footprint") {
  CHECK_THROWS_AS(DilatedReparamConv::init(1, 13, {{7, 3}}, 1), ConfigError);  // 3*6+1 = 19 > 13
  BackboneConfig bad = small_config();
  bad.dilated_branches = {{5, 2}};  // 2*4+1 = 9 > 5
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("forward_stages produces the documented stage shapes") {
  BackboneConfig cfg;  // defaults: 224 input, channels 32/64/128/256
  cfg.blocks_per_stage = 1;
  const Backbone bb = Backbone::zeros(cfg, 3);
  const StageOutputs out = bb.forward_stages(Tensor({3, 224, 224}));
  CHECK(out.f[0].shape() == Shape{32, 112, 112});
  CHECK(out.f[1].shape() == Shape{64, 56, 56});
  CHECK(out.f[2].shape() == Shape{128, 28, 28});
  CHECK(out.f[3].shape() == Shape{256, 14, 14});
}

TEST_CASE("the same backbone code path handles 1-, 2- and 3-channel maps") {
  const BackboneConfig cfg = small_config();
  for (std::size_t channels : {1, 2, 3}) {
    const Backbone bb = Backbone::init(cfg, channels, 5);
    const StageOutputs out = bb.forward_stages(Tensor({channels, 16, 16}, std::vector<double>(channels * 256, 0.1)));
    CHECK(out.f[3].shape() == Shape{16, 1, 1});
  }
}

TEST_CASE("zero parameters and zero input give all-zero stage outputs") {
  const BackboneConfig cfg = small_config();
  const Backbone bb = Backbone::zeros(cfg, 3);
  const StageOutputs out = bb.forward_stages(Tensor({3, 16, 16}));
  for (const auto& f : out.f)
    for (double v : f.data()) CHECK(v == 0.0);
}

TEST_CASE("forward_stages rejects wrong spatial dims") {
  const Backbone bb = Backbone::init(small_config(), 3, 9);
  CHECK_THROWS_AS(bb.forward_stages(Tensor({3, 20, 20})), ShapeError);
  CHECK_THROWS_AS(bb.forward_stages(Tensor({2, 16, 16})), ShapeError);
}

TEST_CASE("fuse_stages emits the configured feature width and matches its oracle") {
  const BackboneConfig cfg = small_config();
  const StageFuser fuser = StageFuser::init(cfg, 77);
  rng::Xoshiro256 gen(41);
  StageOutputs stages;
  stages.f[0] = randn({4, 8, 8}, gen);
  stages.f[1] = randn({8, 4, 4}, gen);
  stages.f[2] = randn({12, 2, 2}, gen);
  stages.f[3] = randn({16, 1, 1}, gen);
  const Tensor feature = fuser.fuse(stages);
  REQUIRE(feature.shape() == Shape{64});

  // oracle: pool each stage, project, concatenate
  double worst = 0.0;
  for (std::size_t s = 0; s < 4; ++s) {
    const std::size_t c = stages.f[s].dim(0);
    const std::size_t plane = stages.f[s].dim(1) * stages.f[s].dim(2);
    std::vector<double> pooled(c, 0.0);
    for (std::size_t ch = 0; ch < c; ++ch) {
      for (std::size_t p = 0; p < plane; ++p) pooled[ch] += stages.f[s].data()[ch * plane + p];
      pooled[ch] /= static_cast<double>(plane);
    }
    for (std::size_t o = 0; o < 16; ++o) {
      double acc = fuser.b[s](o);
      for (std::size_t ch = 0; ch < c; ++ch) acc += pooled[ch] * fuser.w[s](ch, o);
      worst = std::max(worst, std::fabs(acc - feature(s * 16 + o)));
    }
  }
  CHECK(worst <= 1e-12);
}

TEST_CASE("constant stage maps fuse to the projection of their channel means") {
  const BackboneConfig cfg = small_config();
  StageFuser fuser = StageFuser::zeros(cfg);
  // identity-like: first min(c,16) columns pick out channels
  for (std::size_t s = 0; s < 4; ++s) {
    auto& w = fuser.w[s].mutable_data();
    const std::size_t c = cfg.stage_channels[s];
    for (std::size_t i = 0; i < std::min<std::size_t>(c, 16); ++i) w[i * 16 + i] = 1.0;
  }
  StageOutputs stages;
  const double vals[4] = {1.5, -2.0, 0.25, 4.0};
  stages.f[0] = Tensor({4, 8, 8}, std::vector<double>(256, vals[0]));
  stages.f[1] = Tensor({8, 4, 4}, std::vector<double>(128, vals[1]));
  stages.f[2] = Tensor({12, 2, 2}, std::vector<double>(48, vals[2]));
  stages.f[3] = Tensor({16, 1, 1}, std::vector<double>(16, vals[3]));
  const Tensor feature = fuser.fuse(stages);
  for (std::size_t s = 0; s < 4; ++s) {
    const std::size_t c = cfg.stage_channels[s];
    for (std::size_t o = 0; o < 16; ++o) {
      const double want = o < std::min<std::size_t>(c, 16) ? vals[s] : 0.0;
      CHECK(feature(s * 16 + o) == doctest::Approx(want).epsilon(1e-12));
    }
  }
}

TEST_CASE("gradients flow end to end through forward_stages and fuse_stages") {
  BackboneConfig cfg = small_config();
  cfg.stage_channels = {4, 4, 4, 4};
  cfg.input_size = 8;
  cfg.feature_dim = 16;
  cfg.dilated_branches = {{3, 1}};
  cfg.large_kernel = 3;
  Backbone bb = Backbone::init(cfg, 1, 55);
  const StageFuser fuser = StageFuser::init(cfg, 56);
  rng::Xoshiro256 gen(57);
  const Tensor map = randn({1, 8, 8}, gen, 0.5);

  // check w.r.t. the stem weights: swap the probe into the handle
  const double err = grad_check(
      [&](const Tensor& probe, GradTape* tape) {
        Backbone local = bb;
        local.stem_w = probe;
        const StageOutputs stages = local.forward_stages(map, tape);
        return ops::reduce_sum(fuser.fuse(stages, tape), tape);
      },
      bb.stem_w, 1e-5);
  CHECK(err <= 1e-4);
}
