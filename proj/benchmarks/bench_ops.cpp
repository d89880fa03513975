#include <benchmark/benchmark.h>

#include "mainet/arpm.hpp"
#include "mainet/backbone.hpp"
#include "mainet/fusion.hpp"
#include "mainet/ops.hpp"
#include "mainet/rng.hpp"
#include "mainet/signal.hpp"
#include "mainet/tape.hpp"

using namespace mainet;

namespace {

Tensor randn(Shape shape, std::uint64_t seed, double scale = 1.0) {
  rng::Xoshiro256 gen(seed);
  Tensor t(std::move(shape));
  for (auto& v : t.mutable_data()) v = gen.normal() * scale;
  return t;
}

}  // namespace

static void BM_matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Tensor a = randn({n, n}, 1);
  const Tensor b = randn({n, n}, 2);
  for (auto _ : state) benchmark::DoNotOptimize(ops::matmul(a, b));
  state.SetItemsProcessed(state.iterations() * n * n * n);
}
BENCHMARK(BM_matmul)->Arg(32)->Arg(128)->Arg(256);

static void BM_depthwise_conv_13x13(benchmark::State& state) {
  const auto hw = static_cast<std::size_t>(state.range(0));
  const Tensor x = randn({8, hw, hw}, 3);
  const Tensor k = randn({8, 1, 13, 13}, 4);
  ops::Conv2dSpec spec;
  spec.padding = 6;
  spec.depthwise = true;
  for (auto _ : state) benchmark::DoNotOptimize(ops::conv2d(x, k, spec));
  state.SetItemsProcessed(state.iterations() * 8 * hw * hw * 13 * 13);
}
BENCHMARK(BM_depthwise_conv_13x13)->Arg(32)->Arg(56);

static void BM_dilated_reparam_multibranch(benchmark::State& state) {
  const auto conv = backbone::DilatedReparamConv::init(8, 13, {{13, 1}, {5, 2}, {3, 3}}, 5);
  const Tensor x = randn({8, 32, 32}, 6);
  for (auto _ : state) benchmark::DoNotOptimize(conv.forward(x));
}
BENCHMARK(BM_dilated_reparam_multibranch);

static void BM_dilated_reparam_merged(benchmark::State& state) {
  const auto conv = backbone::DilatedReparamConv::init(8, 13, {{13, 1}, {5, 2}, {3, 3}}, 5);
  const Tensor x = randn({8, 32, 32}, 6);
  const Tensor merged = conv.merged_kernel();
  ops::Conv2dSpec spec;
  spec.padding = 6;
  spec.depthwise = true;
  for (auto _ : state) benchmark::DoNotOptimize(ops::conv2d(x, merged, spec));
}
BENCHMARK(BM_dilated_reparam_merged);

static void BM_mhsa(benchmark::State& state) {
  const auto width = static_cast<std::size_t>(state.range(0));
  arpm::AttentionConfig cfg;
  cfg.model_width = width;
  cfg.heads = 4;
  const auto p = arpm::AttentionParams::init(cfg, 7);
  const Tensor x = randn({4, width}, 8);
  for (auto _ : state) benchmark::DoNotOptimize(arpm::mhsa(x, p, cfg));
}
BENCHMARK(BM_mhsa)->Arg(32)->Arg(256);

static void BM_arpm_forward(benchmark::State& state) {
  arpm::AttentionConfig cfg;
  cfg.model_width = static_cast<std::size_t>(state.range(0));
  cfg.heads = 4;
  const auto p = arpm::ArpmParams::init(cfg, 9);
  const std::array<Tensor, 3> fs = {randn({4, cfg.model_width}, 10),
                                    randn({4, cfg.model_width}, 11),
                                    randn({4, cfg.model_width}, 12)};
  for (auto _ : state) benchmark::DoNotOptimize(arpm::arpm_forward(fs, p));
}
BENCHMARK(BM_arpm_forward)->Arg(32)->Arg(256);

static void BM_arpm_forward_backward(benchmark::State& state) {
  arpm::AttentionConfig cfg;
  cfg.model_width = 32;
  cfg.heads = 4;
  const auto p = arpm::ArpmParams::init(cfg, 13);
  const auto head = fusion::Head::init(32, 3, 14);
  const std::array<Tensor, 3> fs = {randn({4, 32}, 15), randn({4, 32}, 16), randn({4, 32}, 17)};
  for (auto _ : state) {
    GradTape tape;
    const auto enhanced = arpm::arpm_forward(fs, p, &tape);
    Tensor loss = Tensor::scalar(0.0);
    for (std::size_t m = 0; m < 3; ++m) {
      const fusion::EvidenceT e = head.forward(enhanced[m], &tape);
      loss = ops::add(loss, ops::cross_entropy(e.p, 0, &tape), &tape);
    }
    tape.backward(loss);
    benchmark::DoNotOptimize(loss);
  }
}
BENCHMARK(BM_arpm_forward_backward);

static void BM_er_combine(benchmark::State& state) {
  rng::Xoshiro256 gen(18);
  std::vector<fusion::Evidence> es;
  for (int m = 0; m < 3; ++m) {
    fusion::Evidence e;
    double sum = 0.0;
    for (int c = 0; c < 3; ++c) {
      e.p.push_back(0.1 + gen.uniform());
      sum += e.p.back();
    }
    for (auto& v : e.p) v /= sum;
    e.weight = 0.8;
    e.reliability = 0.9;
    es.push_back(std::move(e));
  }
  for (auto _ : state) benchmark::DoNotOptimize(fusion::er_combine(es));
}
BENCHMARK(BM_er_combine);

static void BM_log_mel_spectrogram(benchmark::State& state) {
  rng::Xoshiro256 gen(19);
  std::vector<double> pcm(16000);
  for (auto& v : pcm) v = gen.normal() * 0.1;
  signal::MelConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(signal::log_mel_spectrogram(pcm, 16000.0, cfg));
}
BENCHMARK(BM_log_mel_spectrogram);

BENCHMARK_MAIN();
