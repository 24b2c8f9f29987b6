#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "avseg/error.hpp"
#include "avseg/image_io.hpp"

namespace avseg {

namespace {

void put_u32(std::ofstream& out, std::uint32_t v) {
  char b[4] = {char(v & 0xFF), char((v >> 8) & 0xFF), char((v >> 16) & 0xFF), char((v >> 24) & 0xFF)};
  out.write(b, 4);
}

void put_u16(std::ofstream& out, std::uint16_t v) {
  char b[2] = {char(v & 0xFF), char((v >> 8) & 0xFF)};
  out.write(b, 2);
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) |
         (std::uint32_t(p[3]) << 24);
}

std::uint16_t get_u16(const std::uint8_t* p) {
  return std::uint16_t(p[0] | (p[1] << 8));
}

}  // namespace

void write_wav(const std::string& path, const std::vector<float>& samples, int sample_rate) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path, "cannot open for writing");

  const std::uint32_t data_bytes = std::uint32_t(samples.size() * 2);
  out.write("RIFF", 4);
  put_u32(out, 36 + data_bytes);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  put_u32(out, 16);
  put_u16(out, 1);  // PCM
  put_u16(out, 1);  // mono
  put_u32(out, std::uint32_t(sample_rate));
  put_u32(out, std::uint32_t(sample_rate * 2));  // byte rate
  put_u16(out, 2);                               // block align
  put_u16(out, 16);                              // bits per sample
  out.write("data", 4);
  put_u32(out, data_bytes);
  for (float s : samples) {
    const float c = s < -1.0f ? -1.0f : (s > 1.0f ? 1.0f : s);
    const std::int16_t q = std::int16_t(std::lrint(c * 32767.0f));
    put_u16(out, std::uint16_t(q));
  }
  if (!out) throw IoError(path, "write failed");
}

std::vector<float> read_wav(const std::string& path, int expected_sample_rate) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path, "cannot open for reading");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (bytes.size() < 44 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw InputError("not a RIFF/WAVE file: " + path);

  // walk chunks
  std::size_t pos = 12;
  int sample_rate = 0, channels = 0, bits = 0;
  std::size_t data_off = 0, data_len = 0;
  while (pos + 8 <= bytes.size()) {
    const std::uint32_t size = get_u32(bytes.data() + pos + 4);
    if (std::memcmp(bytes.data() + pos, "fmt ", 4) == 0 && pos + 8 + 16 <= bytes.size()) {
      const std::uint8_t* f = bytes.data() + pos + 8;
      if (get_u16(f) != 1) throw InputError("only PCM WAV supported: " + path);
      channels = get_u16(f + 2);
      sample_rate = int(get_u32(f + 4));
      bits = get_u16(f + 14);
    } else if (std::memcmp(bytes.data() + pos, "data", 4) == 0) {
      data_off = pos + 8;
      data_len = size;
    }
    pos += 8 + size + (size & 1);
  }
  if (channels != 1 || bits != 16)
    throw InputError("expected 16-bit mono PCM: " + path);
  if (sample_rate != expected_sample_rate)
    throw InputError("unexpected sample rate in " + path);
  if (data_off == 0 || data_off + data_len > bytes.size())
    throw InputError("missing or truncated data chunk: " + path);

  std::vector<float> samples(data_len / 2);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const std::int16_t q = std::int16_t(get_u16(bytes.data() + data_off + i * 2));
    samples[i] = float(q) / 32767.0f;
  }
  return samples;
}

}  // namespace avseg
