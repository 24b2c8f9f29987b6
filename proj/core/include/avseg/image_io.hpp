#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace avseg {

// Raw 8-bit image; channels is 1 (gray) or 3 (RGB), row-major interleaved.
struct ImageU8 {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<std::uint8_t> pixels;
};

void write_png(const std::string& path, const ImageU8& image);
ImageU8 read_png(const std::string& path);

// 16-bit PCM mono WAV at the given sample rate; samples in [-1, 1] are
// quantized on write and rescaled on read.
void write_wav(const std::string& path, const std::vector<float>& samples, int sample_rate);
std::vector<float> read_wav(const std::string& path, int expected_sample_rate);

}  // namespace avseg
