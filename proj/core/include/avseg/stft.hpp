#pragma once

#include <span>
#include <vector>

#include "avseg/tensor.hpp"
#include "avseg/types.hpp"

namespace avseg {

inline constexpr int kNFft = 512;
inline constexpr int kHop = 256;
inline constexpr int kNBins = kNFft / 2 + 1;
// windows per one-second segment with no padding
inline constexpr int kFramesPerSegment = (kSampleRate - kNFft) / kHop + 1;

// In-place radix-2 FFT on interleaved complex data; n must be a power of two.
void fft_radix2(std::vector<double>& re, std::vector<double>& im);

// Hann-windowed STFT magnitudes, one (kFramesPerSegment, kNBins) matrix per
// one-second segment. The waveform length must be an exact multiple of the
// sample rate.
Spectrogram<float> stft_spectrogram(std::span<const float> waveform);
Spectrogram<double> stft_spectrogram_f64(std::span<const double> waveform);

}  // namespace avseg
