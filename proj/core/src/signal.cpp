#include "mainet/signal.hpp"

#include <cmath>

#include "mainet/error.hpp"

namespace mainet::signal {

namespace {

constexpr double kPi = 3.141592653589793238462643383279502884;

bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

}  // namespace

void fft(std::vector<double>& re, std::vector<double>& im) {
  const std::size_t n = re.size();
  if (im.size() != n) throw ConfigError("fft: re/im length mismatch");
  if (!is_pow2(n)) throw ConfigError("fft: length must be a power of two, got " + std::to_string(n));

  // bit-reversal permutation
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) {
      std::swap(re[i], re[j]);
      std::swap(im[i], im[j]);
    }
  }

  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * kPi / static_cast<double>(len);
    const double wr = std::cos(ang), wi = std::sin(ang);
    for (std::size_t i = 0; i < n; i += len) {
      double cr = 1.0, ci = 0.0;
      for (std::size_t k = 0; k < len / 2; ++k) {
        const std::size_t a = i + k, b = i + k + len / 2;
        const double tr = re[b] * cr - im[b] * ci;
        const double ti = re[b] * ci + im[b] * cr;
        re[b] = re[a] - tr;
        im[b] = im[a] - ti;
        re[a] += tr;
        im[a] += ti;
        const double ncr = cr * wr - ci * wi;
        ci = cr * wi + ci * wr;
        cr = ncr;
      }
    }
  }
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }

double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

std::vector<std::vector<double>> mel_filter_bank(std::size_t n_mels, std::size_t n_fft,
                                                 double sample_rate) {
  if (n_mels == 0 || sample_rate <= 0.0)
    throw ConfigError("mel_filter_bank: n_mels and sample_rate must be positive");
  const std::size_t n_bins = n_fft / 2 + 1;
  const double mel_max = hz_to_mel(sample_rate / 2.0);

  std::vector<double> edges(n_mels + 2);
  for (std::size_t i = 0; i < edges.size(); ++i)
    edges[i] = mel_to_hz(mel_max * static_cast<double>(i) / static_cast<double>(n_mels + 1));

  std::vector<std::vector<double>> bank(n_mels, std::vector<double>(n_bins, 0.0));
  const double bin_hz = sample_rate / static_cast<double>(n_fft);
  for (std::size_t m = 0; m < n_mels; ++m) {
    const double lo = edges[m], mid = edges[m + 1], hi = edges[m + 2];
    double row_sum = 0.0;
    for (std::size_t b = 0; b < n_bins; ++b) {
      const double f = static_cast<double>(b) * bin_hz;
      double wgt = 0.0;
      if (f > lo && f < mid)
        wgt = (f - lo) / (mid - lo);
      else if (f >= mid && f < hi)
        wgt = (hi - f) / (hi - mid);
      bank[m][b] = wgt;
      row_sum += wgt;
    }
    if (row_sum == 0.0) {
      // Filter narrower than the bin spacing; pin it to the nearest bin.
      auto nearest = static_cast<std::size_t>(std::llround(mid / bin_hz));
      if (nearest >= n_bins) nearest = n_bins - 1;
      bank[m][nearest] = 1.0;
    }
  }
  return bank;
}

std::size_t stft_frames(std::size_t n_samples, const StftConfig& cfg) {
  if (n_samples < cfg.n_fft) return 0;
  return (n_samples - cfg.n_fft) / cfg.hop + 1;
}

std::vector<std::vector<double>> stft_power(const std::vector<double>& samples,
                                            const StftConfig& cfg) {
  if (!is_pow2(cfg.n_fft)) throw ConfigError("stft: n_fft must be a power of two");
  if (cfg.hop == 0) throw ConfigError("stft: hop must be >= 1");
  if (samples.size() < cfg.n_fft)
    throw ConfigError("stft: " + std::to_string(samples.size()) + " samples < n_fft " +
                      std::to_string(cfg.n_fft));

  const std::size_t frames = stft_frames(samples.size(), cfg);
  const std::size_t n_bins = cfg.n_fft / 2 + 1;

  std::vector<double> hann(cfg.n_fft);
  for (std::size_t i = 0; i < cfg.n_fft; ++i)
    hann[i] = 0.5 * (1.0 - std::cos(2.0 * kPi * static_cast<double>(i) /
                                    static_cast<double>(cfg.n_fft)));

  std::vector<std::vector<double>> power(frames, std::vector<double>(n_bins));
  std::vector<double> re(cfg.n_fft), im(cfg.n_fft);
  for (std::size_t f = 0; f < frames; ++f) {
    const std::size_t off = f * cfg.hop;
    for (std::size_t i = 0; i < cfg.n_fft; ++i) {
      re[i] = samples[off + i] * hann[i];
      im[i] = 0.0;
    }
    fft(re, im);
    for (std::size_t b = 0; b < n_bins; ++b) power[f][b] = re[b] * re[b] + im[b] * im[b];
  }
  return power;
}

std::vector<std::vector<double>> log_mel_spectrogram(const std::vector<double>& samples,
                                                     double sample_rate, const MelConfig& cfg) {
  const auto power = stft_power(samples, cfg.stft);
  const auto bank = mel_filter_bank(cfg.n_mels, cfg.stft.n_fft, sample_rate);
  const std::size_t frames = power.size();
  const std::size_t n_bins = cfg.stft.n_fft / 2 + 1;

  std::vector<std::vector<double>> mel(cfg.n_mels, std::vector<double>(frames));
  for (std::size_t m = 0; m < cfg.n_mels; ++m)
    for (std::size_t f = 0; f < frames; ++f) {
      double acc = 0.0;
      for (std::size_t b = 0; b < n_bins; ++b) acc += bank[m][b] * power[f][b];
      mel[m][f] = std::log(acc + 1e-10);
    }
  return mel;
}

}  // namespace mainet::signal
