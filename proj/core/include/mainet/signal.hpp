#pragma once

#include <cstddef>
#include <vector>

namespace mainet::signal {

/// In-place iterative radix-2 FFT. Lengths must be powers of two.
void fft(std::vector<double>& re, std::vector<double>& im);

double hz_to_mel(double hz);   // HTK scale: 2595 * log10(1 + f/700)
double mel_to_hz(double mel);

/// Triangular mel filter bank over the one-sided spectrum (n_fft/2 + 1 bins).
/// Filters are mel-spaced across [0, sample_rate/2]. A filter too narrow to
/// catch any FFT bin gets unit weight on the bin nearest its center, so no
/// row is ever all-zero.
std::vector<std::vector<double>> mel_filter_bank(std::size_t n_mels, std::size_t n_fft,
                                                 double sample_rate);

struct StftConfig {
  std::size_t n_fft = 1024;
  std::size_t hop = 256;
};

std::size_t stft_frames(std::size_t n_samples, const StftConfig& cfg);

/// Hann-windowed power spectrogram: [frames x (n_fft/2 + 1)], frame f covers
/// samples [f*hop, f*hop + n_fft). n_fft must be a power of two and
/// n_samples >= n_fft.
std::vector<std::vector<double>> stft_power(const std::vector<double>& samples,
                                            const StftConfig& cfg);

struct MelConfig {
  StftConfig stft;
  std::size_t n_mels = 128;
};

/// log(mel-filtered power + 1e-10), shape [n_mels x frames].
std::vector<std::vector<double>> log_mel_spectrogram(const std::vector<double>& samples,
                                                     double sample_rate, const MelConfig& cfg);

}  // namespace mainet::signal
