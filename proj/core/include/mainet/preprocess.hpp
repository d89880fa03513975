#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "mainet/signal.hpp"
#include "mainet/tape.hpp"
#include "mainet/tensor.hpp"

namespace mainet::preprocess {

/// One synchronized trimodal observation cut from a recording.
struct RawWindow {
  Tensor image;        // [3,224,224], values in [0,1]
  Tensor audio;        // [2,S] at sample_rate, 1 s worth
  double sample_rate;  // Hz
  Tensor wave;         // [9,200]: accel/gyro/angle x X/Y/Z at 200 Hz
  int label;           // 0 strong, 1 weak, 2 none
  std::int64_t timestamp_ms;
};

struct EmbeddingMaps {
  Tensor image_map;  // [3,224,224]
  Tensor audio_map;  // [2,224,224]
  Tensor wave_map;   // [1,224,224]
};

/// A whole recording on a shared clock, before windowing.
struct TrimodalStream {
  std::vector<std::pair<std::int64_t, Tensor>> frames;  // (timestamp ms, [3,H,W])
  Tensor audio;  // [2, S_total]
  double sample_rate = 16000.0;
  Tensor wave;  // [9, T_total]
  double wave_rate = 200.0;
  std::vector<std::pair<std::int64_t, int>> labels;  // (window start ms, class)

  double duration_s() const;
};

/// Cuts the stream into windows starting at t = 0, step = width*(1-overlap).
/// A window is emitted only when it is complete: an image frame within half a
/// window of its start and a label row matching the start exactly. Audio and
/// wave slices are cut on sample boundaries, which keeps the per-modality
/// start skew at or below 1 ms for the supported rates. A stream shorter than
/// one window yields an empty list.
std::vector<RawWindow> window_stream(const TrimodalStream& stream, double width_s = 1.0,
                                     double overlap = 0.5);

/// Window count implied by the duration alone (the formula value, before any
/// incomplete windows are dropped).
std::size_t window_count(double duration_s, double width_s = 1.0, double overlap = 0.5);

struct AudioMapConfig {
  signal::MelConfig mel;
  std::size_t out_h = 224;
  std::size_t out_w = 224;
};

/// Per channel: Hann STFT -> HTK mel bank -> log(power + 1e-10) -> adaptive
/// average pool to [out_h, out_w]. Output [2, out_h, out_w]. Deterministic.
Tensor audio_to_melspec(const Tensor& pcm, double sample_rate, const AudioMapConfig& cfg = {});

/// Learned per-timestep linear embedding for wave data, 9 -> width.
struct WaveEmbedding {
  Tensor weight;  // [9, width]
  Tensor bias;    // [width]

  static WaveEmbedding init(std::size_t width, std::uint64_t seed);
  static WaveEmbedding zeros(std::size_t width);
  std::size_t width() const { return weight.dim(1); }
};

struct WaveMapConfig {
  std::size_t out_h = 224;
  std::size_t out_w = 224;
};

/// Standardizes each of the 9 channels over the window (variance floor 1e-8),
/// embeds each time step through the learned 9->width map, then pools the
/// [steps, width] latent to [1, out_h, out_w]. Gradients flow to the
/// embedding when a tape is supplied.
Tensor wave_to_map(const Tensor& wave, const WaveEmbedding& embed,
                   const WaveMapConfig& cfg = {}, GradTape* tape = nullptr);

/// (x - mean) / sqrt(var + 1e-8) per row of a [C,T] tensor. Plain data path.
Tensor standardize_rows(const Tensor& x);

}  // namespace mainet::preprocess
