#include <cmath>

#include "mainet/data.hpp"
#include "mainet/error.hpp"
#include "mainet/rng.hpp"

namespace mainet::data {

void SynthConfig::validate() const {
  if (n_samples == 0) throw ConfigError("synth: n_samples must be >= 1");
  double sum = 0.0;
  for (double r : class_ratio) {
    if (r < 0.0) throw ConfigError("synth: negative class ratio");
    sum += r;
  }
  if (std::fabs(sum - 1.0) > 1e-9) throw ConfigError("synth: class ratios must sum to 1");
  if (!(snr_image > 0.0) || !(snr_audio > 0.0) || !(snr_wave > 0.0))
    throw ConfigError("synth: snr values must be positive");
  if (correlation < 0.0 || correlation > 1.0) throw ConfigError("synth: correlation outside [0,1]");
  if (map_size < 8) throw ConfigError("synth: map_size must be >= 8");
}

std::array<std::size_t, 3> SynthConfig::class_counts() const {
  std::array<std::size_t, 3> counts{};
  std::size_t assigned = 0;
  for (std::size_t c = 0; c < 3; ++c) {
    counts[c] = static_cast<std::size_t>(std::floor(class_ratio[c] * static_cast<double>(n_samples)));
    assigned += counts[c];
  }
  for (std::size_t c = 0; assigned < n_samples; c = (c + 1) % 3) {
    ++counts[c];
    ++assigned;
  }
  return counts;
}

namespace {

// Class templates, all valued in [0,1] over unit coordinates.
//
// The three modalities carry complementary structure: each one isolates a
// different class cleanly and barely separates the remaining pair, so a
// single modality tops out well below a fused model while any fusion gains
// by construction. Image pins class 0, audio pins class 2, wave pins
// class 1.

// Image: one bright blob per class; classes 1 and 2 nearly coincide.
double image_template(int cls, std::size_t ch, double y, double x) {
  static const double cy[3] = {0.28, 0.669, 0.691};
  static const double cx[3] = {0.28, 0.679, 0.656};
  static const double chan_gain[3] = {1.0, 0.8, 0.6};
  const double dy = y - cy[cls], dx = x - cx[cls];
  const double blob = std::exp(-(dy * dy + dx * dx) / (2.0 * 0.15 * 0.15));
  return chan_gain[ch] * blob;
}

// Audio: a horizontal energy band; classes 0 and 1 sit close together.
double audio_template(int cls, std::size_t ch, double y, double x) {
  static const double band[3] = {0.415, 0.445, 0.78};
  const double d = y - band[cls];
  const double ridge = std::exp(-d * d / (2.0 * 0.08 * 0.08));
  const double tilt = ch == 0 ? 1.0 : 0.85;  // slight stereo asymmetry
  return tilt * ridge * (0.6 + 0.4 * std::cos(3.0 * x * 6.283185307179586));
}

// Wave: vertical stripes at a class frequency; classes 0 and 2 run close.
double wave_template(int cls, double /*y*/, double x) {
  static const double freq[3] = {3.18, 6.5, 3.32};
  return 0.5 + 0.5 * std::sin(freq[cls] * x * 6.283185307179586);
}

Tensor make_map(std::size_t channels, std::size_t size, int cls, double snr, double rho,
                double shared_noise, rng::Xoshiro256& gen,
                double (*tmpl)(int, std::size_t, double, double)) {
  Tensor map({channels, size, size});
  auto& mv = map.mutable_data();
  const double mix_signal = snr / (1.0 + snr);
  const double mix_noise = 1.0 / (1.0 + snr);
  const double own_scale = std::sqrt(1.0 - rho);
  const double shared_scale = std::sqrt(rho);
  std::size_t idx = 0;
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t i = 0; i < size; ++i)
      for (std::size_t j = 0; j < size; ++j, ++idx) {
        const double y = (static_cast<double>(i) + 0.5) / static_cast<double>(size);
        const double x = (static_cast<double>(j) + 0.5) / static_cast<double>(size);
        const double noise = own_scale * gen.normal() + shared_scale * shared_noise;
        mv[idx] = mix_signal * tmpl(cls, c, y, x) + mix_noise * noise;
      }
  return map;
}

double wave_template_adapter(int cls, std::size_t, double y, double x) {
  return wave_template(cls, y, x);
}

}  // namespace

Dataset gen_synthetic(const SynthConfig& cfg) {
  cfg.validate();
  const auto counts = cfg.class_counts();

  std::vector<int> labels;
  labels.reserve(cfg.n_samples);
  for (int c = 0; c < 3; ++c)
    labels.insert(labels.end(), counts[static_cast<std::size_t>(c)], c);
  rng::Xoshiro256 label_gen(rng::mix(cfg.seed, 1));
  rng::shuffle(labels, label_gen);

  rng::Xoshiro256 noise_gen(rng::mix(cfg.seed, 2));
  Dataset ds;
  ds.reserve(cfg.n_samples);
  for (std::size_t s = 0; s < cfg.n_samples; ++s) {
    const int cls = labels[s];
    const double shared = noise_gen.normal();
    ModalSample sample;
    sample.image_map = make_map(3, cfg.map_size, cls, cfg.snr_image, cfg.correlation, shared,
                                noise_gen, image_template);
    sample.audio_map = make_map(2, cfg.map_size, cls, cfg.snr_audio, cfg.correlation, shared,
                                noise_gen, audio_template);
    sample.wave_map = make_map(1, cfg.map_size, cls, cfg.snr_wave, cfg.correlation, shared,
                               noise_gen, wave_template_adapter);
    sample.label = cls;
    sample.timestamp_ms = static_cast<std::int64_t>(s) * 500;
    ds.push_back(std::move(sample));
  }
  return ds;
}

std::array<std::size_t, 3> count_classes(const Dataset& ds) {
  std::array<std::size_t, 3> counts{};
  for (const auto& s : ds) {
    if (s.label < 0 || s.label > 2) throw ConfigError("dataset: label outside {0,1,2}");
    ++counts[static_cast<std::size_t>(s.label)];
  }
  return counts;
}

}  // namespace mainet::data
