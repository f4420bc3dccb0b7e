#include "tarnet/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "tarnet/errors.hpp"

namespace tarnet {

namespace {

uint32_t read_u32(const unsigned char* p) {
  return static_cast<uint32_t>(p[0]) | static_cast<uint32_t>(p[1]) << 8 |
         static_cast<uint32_t>(p[2]) << 16 | static_cast<uint32_t>(p[3]) << 24;
}

uint16_t read_u16(const unsigned char* p) {
  return static_cast<uint16_t>(p[0] | p[1] << 8);
}

void put_u32(std::string& s, uint32_t v) {
  s.push_back(static_cast<char>(v & 0xff));
  s.push_back(static_cast<char>((v >> 8) & 0xff));
  s.push_back(static_cast<char>((v >> 16) & 0xff));
  s.push_back(static_cast<char>((v >> 24) & 0xff));
}

void put_u16(std::string& s, uint16_t v) {
  s.push_back(static_cast<char>(v & 0xff));
  s.push_back(static_cast<char>((v >> 8) & 0xff));
}

}  // namespace

Waveform read_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open WAV file: " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() < 44 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw DataError("not a RIFF/WAVE file: " + path);

  Waveform w;
  bool have_fmt = false, have_data = false;
  size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const char* id = reinterpret_cast<const char*>(bytes.data() + pos);
    const uint32_t size = read_u32(bytes.data() + pos + 4);
    const size_t body = pos + 8;
    if (body + size > bytes.size())
      throw DataError("truncated WAV chunk in " + path);
    if (std::memcmp(id, "fmt ", 4) == 0) {
      if (size < 16) throw DataError("malformed fmt chunk in " + path);
      const uint16_t format = read_u16(bytes.data() + body);
      const uint16_t channels = read_u16(bytes.data() + body + 2);
      const uint32_t rate = read_u32(bytes.data() + body + 4);
      const uint16_t bits = read_u16(bytes.data() + body + 14);
      if (format != 1)
        throw DataError(path + ": only PCM encoding is supported (format tag " +
                        std::to_string(format) + ")");
      if (channels != 1)
        throw DataError(path + ": only mono is supported, file has " +
                        std::to_string(channels) + " channels");
      if (bits != 16)
        throw DataError(path + ": only 16-bit samples are supported, file has " +
                        std::to_string(bits) + " bits");
      w.sample_rate = static_cast<int>(rate);
      have_fmt = true;
    } else if (std::memcmp(id, "data", 4) == 0) {
      if (!have_fmt) throw DataError(path + ": data chunk precedes fmt chunk");
      const size_t count = size / 2;
      w.samples.resize(count);
      for (size_t i = 0; i < count; ++i) {
        const int16_t s = static_cast<int16_t>(
            bytes[body + 2 * i] | bytes[body + 2 * i + 1] << 8);
        w.samples[i] = static_cast<double>(s) / 32768.0;
      }
      have_data = true;
    }
    pos = body + size + (size & 1);  // chunks are word-aligned
  }
  if (!have_data) throw DataError(path + ": no data chunk found");
  return w;
}

void write_wav(const std::string& path, const Waveform& w) {
  const uint32_t n = static_cast<uint32_t>(w.samples.size());
  const uint32_t data_bytes = n * 2;
  std::string out;
  out.reserve(44 + data_bytes);
  out += "RIFF";
  put_u32(out, 36 + data_bytes);
  out += "WAVEfmt ";
  put_u32(out, 16);
  put_u16(out, 1);  // PCM
  put_u16(out, 1);  // mono
  put_u32(out, static_cast<uint32_t>(w.sample_rate));
  put_u32(out, static_cast<uint32_t>(w.sample_rate * 2));
  put_u16(out, 2);
  put_u16(out, 16);
  out += "data";
  put_u32(out, data_bytes);
  for (uint32_t i = 0; i < n; ++i) {
    const double v = std::clamp(w.samples[i], -1.0, 1.0);
    const int s = std::clamp(static_cast<int>(std::lrint(v * 32768.0)), -32768, 32767);
    put_u16(out, static_cast<uint16_t>(static_cast<int16_t>(s)));
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write WAV file: " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw DataError("short write to WAV file: " + path);
}

}  // namespace tarnet
