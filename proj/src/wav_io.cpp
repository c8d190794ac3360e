#include "pfd/wav_io.hpp"

#include "pfd/error.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

namespace pfd::dsp {

namespace {

std::uint32_t read_u32(const unsigned char* p) {
  return p[0] | (p[1] << 8) | (p[2] << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
std::uint16_t read_u16(const unsigned char* p) { return static_cast<std::uint16_t>(p[0] | (p[1] << 8)); }

void put_u32(std::ostream& os, std::uint32_t v) {
  const std::array<char, 4> b{static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                              static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  os.write(b.data(), 4);
}
void put_u16(std::ostream& os, std::uint16_t v) {
  const std::array<char, 2> b{static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff)};
  os.write(b.data(), 2);
}

std::int16_t to_pcm(double s) {
  return static_cast<std::int16_t>(std::lround(std::clamp(s, -1.0, 1.0) * 32767.0));
}

}  // namespace

double quantize_pcm16(double sample) { return to_pcm(sample) / 32767.0; }

Waveform read_wav(const std::filesystem::path& path, int expected_rate) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(fmt::format("cannot open {}", path.string()));
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw IoError(fmt::format("{}: not a RIFF/WAVE file", path.string()));
  }
  std::size_t pos = 12;
  int channels = 0, bits = 0, format = 0;
  std::uint32_t rate = 0;
  const unsigned char* data = nullptr;
  std::uint32_t data_len = 0;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    const std::uint32_t len = read_u32(chunk + 4);
    if (pos + 8 + len > bytes.size()) throw IoError(fmt::format("{}: truncated chunk", path.string()));
    if (std::memcmp(chunk, "fmt ", 4) == 0 && len >= 16) {
      format = read_u16(chunk + 8);
      channels = read_u16(chunk + 10);
      rate = read_u32(chunk + 12);
      bits = read_u16(chunk + 22);
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = chunk + 8;
      data_len = len;
    }
    pos += 8 + len + (len & 1);
  }
  if (format != 1 || channels != 1 || bits != 16) {
    throw IoError(fmt::format("{}: expected PCM16 mono (format={}, channels={}, bits={})",
                              path.string(), format, channels, bits));
  }
  if (data == nullptr) throw IoError(fmt::format("{}: no data chunk", path.string()));
  if (expected_rate != 0 && rate != static_cast<std::uint32_t>(expected_rate)) {
    throw IoError(fmt::format("{}: sample rate {} Hz, expected {} Hz (resampling unsupported)",
                              path.string(), rate, expected_rate));
  }
  Waveform w;
  w.sample_rate = static_cast<int>(rate);
  w.samples.resize(data_len / 2);
  for (std::size_t i = 0; i < w.samples.size(); ++i) {
    const auto v = static_cast<std::int16_t>(read_u16(data + 2 * i));
    w.samples[i] = v / 32767.0;
  }
  return w;
}

void write_wav(const std::filesystem::path& path, const Waveform& w) {
  w.validate();
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError(fmt::format("cannot write {}", path.string()));
  const auto data_len = static_cast<std::uint32_t>(w.samples.size() * 2);
  os.write("RIFF", 4);
  put_u32(os, 36 + data_len);
  os.write("WAVEfmt ", 8);
  put_u32(os, 16);
  put_u16(os, 1);
  put_u16(os, 1);
  put_u32(os, static_cast<std::uint32_t>(w.sample_rate));
  put_u32(os, static_cast<std::uint32_t>(w.sample_rate) * 2);
  put_u16(os, 2);
  put_u16(os, 16);
  os.write("data", 4);
  put_u32(os, data_len);
  for (double s : w.samples) put_u16(os, static_cast<std::uint16_t>(to_pcm(s)));
  if (!os) throw IoError(fmt::format("write failed: {}", path.string()));
}

}  // namespace pfd::dsp
