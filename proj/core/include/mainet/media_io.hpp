#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mainet/tensor.hpp"

namespace mainet::io {

struct WavData {
  Tensor samples;  // [channels, S], values in [-1, 1]
  double sample_rate = 0.0;
};

/// Reads 16-bit PCM RIFF/WAVE files.
WavData read_wav(const std::string& path);
void write_wav(const std::string& path, const Tensor& samples, double sample_rate);

/// Reads non-interlaced 8-bit grayscale/RGB/RGBA PNGs into [3,H,W] with values
/// in [0,1] (gray replicated, alpha dropped).
Tensor read_png(const std::string& path);
void write_png(const std::string& path, const Tensor& rgb);  // [3,H,W] in [0,1]

/// Whole-file CSV split into cells. Skips blank lines; no quoting support.
std::vector<std::vector<std::string>> read_csv(const std::string& path);

}  // namespace mainet::io
