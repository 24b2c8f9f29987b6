#include "avseg/stft.hpp"

#include <cmath>
#include <numbers>

#include "avseg/error.hpp"

namespace avseg {

void fft_radix2(std::vector<double>& re, std::vector<double>& im) {
  const std::size_t n = re.size();
  if (n == 0 || (n & (n - 1)) != 0 || im.size() != n)
    throw ContractError("fft_radix2 requires power-of-two complex input");

  // bit reversal
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
    const double ang = -2.0 * std::numbers::pi / double(len);
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

namespace {

template <typename T>
Spectrogram<T> stft_impl(std::span<const T> waveform) {
  if (waveform.empty() || waveform.size() % kSampleRate != 0)
    throw InputError("waveform length must be a positive multiple of the sample rate");
  const int t_frames = int(waveform.size() / kSampleRate);

  // periodic Hann window
  std::vector<double> window(kNFft);
  for (int i = 0; i < kNFft; ++i)
    window[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / kNFft);

  Spectrogram<T> spec;
  spec.n_time = kFramesPerSegment;
  spec.n_bins = kNBins;
  spec.segments.reserve(t_frames);

  std::vector<double> re(kNFft), im(kNFft);
  for (int t = 0; t < t_frames; ++t) {
    Tensor<T> mags(kFramesPerSegment, kNBins);
    const std::size_t base = std::size_t(t) * kSampleRate;
    for (int f = 0; f < kFramesPerSegment; ++f) {
      const std::size_t start = base + std::size_t(f) * kHop;
      for (int i = 0; i < kNFft; ++i) {
        re[i] = double(waveform[start + i]) * window[i];
        im[i] = 0.0;
      }
      fft_radix2(re, im);
      for (int b = 0; b < kNBins; ++b)
        mags(f, b) = T(std::sqrt(re[b] * re[b] + im[b] * im[b]));
    }
    spec.segments.push_back(std::move(mags));
  }
  return spec;
}

}  // namespace

Spectrogram<float> stft_spectrogram(std::span<const float> waveform) {
  return stft_impl<float>(waveform);
}

Spectrogram<double> stft_spectrogram_f64(std::span<const double> waveform) {
  return stft_impl<double>(waveform);
}

}  // namespace avseg
