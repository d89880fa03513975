#include "mainet/preprocess.hpp"

#include <algorithm>
#include <cmath>

#include "mainet/error.hpp"
#include "mainet/ops.hpp"
#include "mainet/rng.hpp"

namespace mainet::preprocess {

double TrimodalStream::duration_s() const {
  double d = 1e300;
  if (audio.defined() && sample_rate > 0)
    d = std::min(d, static_cast<double>(audio.dim(1)) / sample_rate);
  if (wave.defined() && wave_rate > 0)
    d = std::min(d, static_cast<double>(wave.dim(1)) / wave_rate);
  return d == 1e300 ? 0.0 : d;
}

std::size_t window_count(double duration_s, double width_s, double overlap) {
  if (duration_s < width_s) return 0;
  const double step = width_s * (1.0 - overlap);
  return static_cast<std::size_t>(std::floor((duration_s - width_s) / step + 1e-9)) + 1;
}

std::vector<RawWindow> window_stream(const TrimodalStream& stream, double width_s,
                                     double overlap) {
  if (width_s <= 0.0 || overlap < 0.0 || overlap >= 1.0)
    throw ConfigError("window_stream: width must be positive and overlap in [0,1)");
  if (!stream.audio.defined() || stream.audio.rank() != 2 || stream.audio.dim(0) != 2)
    throw ShapeError("window_stream: audio must be [2,S]");
  if (!stream.wave.defined() || stream.wave.rank() != 2 || stream.wave.dim(0) != 9)
    throw ShapeError("window_stream: wave must be [9,T]");

  const std::size_t count = window_count(stream.duration_s(), width_s, overlap);
  const auto step_ms = static_cast<std::int64_t>(std::llround(width_s * (1.0 - overlap) * 1000.0));
  const auto width_ms = static_cast<std::int64_t>(std::llround(width_s * 1000.0));
  const auto audio_len = static_cast<std::size_t>(std::llround(width_s * stream.sample_rate));
  const auto wave_len = static_cast<std::size_t>(std::llround(width_s * stream.wave_rate));

  std::vector<RawWindow> out;
  for (std::size_t k = 0; k < count; ++k) {
    const std::int64_t t0 = static_cast<std::int64_t>(k) * step_ms;

    // nearest frame to the window start, required within half a window
    const Tensor* frame = nullptr;
    std::int64_t best = width_ms / 2 + 1;
    for (const auto& [ts, img] : stream.frames) {
      const std::int64_t d = std::llabs(ts - t0);
      if (d < best) {
        best = d;
        frame = &img;
      }
    }
    if (!frame) continue;

    int label = -1;
    for (const auto& [ts, cls] : stream.labels)
      if (ts == t0) {
        label = cls;
        break;
      }
    if (label < 0) continue;

    const auto a0 = static_cast<std::size_t>(
        std::llround(static_cast<double>(t0) / 1000.0 * stream.sample_rate));
    const auto w0 = static_cast<std::size_t>(
        std::llround(static_cast<double>(t0) / 1000.0 * stream.wave_rate));
    if (a0 + audio_len > stream.audio.dim(1) || w0 + wave_len > stream.wave.dim(1)) continue;

    Tensor audio({2, audio_len});
    auto& av = audio.mutable_data();
    const auto& src_a = stream.audio.data();
    const std::size_t sa = stream.audio.dim(1);
    for (std::size_t c = 0; c < 2; ++c)
      for (std::size_t i = 0; i < audio_len; ++i) av[c * audio_len + i] = src_a[c * sa + a0 + i];

    Tensor wave({9, wave_len});
    auto& wv = wave.mutable_data();
    const auto& src_w = stream.wave.data();
    const std::size_t sw = stream.wave.dim(1);
    for (std::size_t c = 0; c < 9; ++c)
      for (std::size_t i = 0; i < wave_len; ++i) wv[c * wave_len + i] = src_w[c * sw + w0 + i];

    out.push_back(RawWindow{*frame, audio, stream.sample_rate, wave, label, t0});
  }
  return out;
}

Tensor audio_to_melspec(const Tensor& pcm, double sample_rate, const AudioMapConfig& cfg) {
  if (pcm.rank() != 2 || pcm.dim(0) != 2)
    throw ShapeError("audio_to_melspec: [2,S] input required, got " + shape_str(pcm.shape()));
  if (sample_rate <= 0.0) throw ConfigError("audio_to_melspec: sample_rate must be positive");
  if (pcm.dim(1) < cfg.mel.stft.n_fft)
    throw ConfigError("audio_to_melspec: " + std::to_string(pcm.dim(1)) + " samples < n_fft " +
                      std::to_string(cfg.mel.stft.n_fft));

  const std::size_t n = pcm.dim(1);
  Tensor out({2, cfg.out_h, cfg.out_w});
  for (std::size_t c = 0; c < 2; ++c) {
    std::vector<double> channel(n);
    const auto& pv = pcm.data();
    for (std::size_t i = 0; i < n; ++i) channel[i] = pv[c * n + i];

    const auto mel = signal::log_mel_spectrogram(channel, sample_rate, cfg.mel);
    const std::size_t mels = mel.size(), frames = mel[0].size();
    Tensor plane({1, mels, frames});
    auto& mv = plane.mutable_data();
    for (std::size_t m = 0; m < mels; ++m)
      for (std::size_t f = 0; f < frames; ++f) mv[m * frames + f] = mel[m][f];

    const Tensor pooled = ops::adaptive_avg_pool(plane, cfg.out_h, cfg.out_w);
    auto& ov = out.mutable_data();
    const auto& sv = pooled.data();
    std::copy(sv.begin(), sv.end(), ov.begin() + static_cast<std::ptrdiff_t>(c * cfg.out_h * cfg.out_w));
  }
  return out;
}

WaveEmbedding WaveEmbedding::init(std::size_t width, std::uint64_t seed) {
  rng::Xoshiro256 gen(seed);
  WaveEmbedding e;
  e.weight = Tensor({9, width});
  const double s = std::sqrt(2.0 / 9.0);
  for (auto& v : e.weight.mutable_data()) v = gen.normal() * s;
  e.bias = Tensor({width});
  e.weight.set_requires_grad(true);
  e.bias.set_requires_grad(true);
  return e;
}

WaveEmbedding WaveEmbedding::zeros(std::size_t width) {
  WaveEmbedding e;
  e.weight = Tensor({9, width});
  e.bias = Tensor({width});
  e.weight.set_requires_grad(true);
  e.bias.set_requires_grad(true);
  return e;
}

Tensor standardize_rows(const Tensor& x) {
  if (x.rank() != 2) throw ShapeError("standardize_rows: rank-2 required");
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  Tensor out(x.shape());
  auto& ov = out.mutable_data();
  const auto& xv = x.data();
  for (std::size_t r = 0; r < rows; ++r) {
    double mn = xv[r * cols], mx = xv[r * cols];
    double mean = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      const double v = xv[r * cols + c];
      mean += v;
      mn = std::min(mn, v);
      mx = std::max(mx, v);
    }
    if (mn == mx) {
      // constant channel: centering removes everything, exactly
      for (std::size_t c = 0; c < cols; ++c) ov[r * cols + c] = 0.0;
      continue;
    }
    mean /= static_cast<double>(cols);
    double var = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      const double d = xv[r * cols + c] - mean;
      var += d * d;
    }
    var /= static_cast<double>(cols);
    const double inv = 1.0 / std::sqrt(var + 1e-8);
    for (std::size_t c = 0; c < cols; ++c) ov[r * cols + c] = (xv[r * cols + c] - mean) * inv;
  }
  return out;
}

Tensor wave_to_map(const Tensor& wave, const WaveEmbedding& embed, const WaveMapConfig& cfg,
                   GradTape* tape) {
  if (wave.rank() != 2 || wave.dim(0) != 9 || wave.dim(1) != 200)
    throw ShapeError("wave_to_map: [9,200] input required, got " + shape_str(wave.shape()));

  const Tensor standardized = standardize_rows(wave);          // [9,200], plain data
  const Tensor steps = ops::transpose(standardized, nullptr);  // [200,9]
  Tensor latent = ops::linear(steps, embed.weight, embed.bias, tape);  // [200,width]
  latent = ops::reshape(latent, {1, 200, embed.width()}, tape);
  return ops::adaptive_avg_pool(latent, cfg.out_h, cfg.out_w, tape);
}

}  // namespace mainet::preprocess
