#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "joytts/common.hpp"

namespace joytts {

struct Waveform {
  int sample_rate = 8000;
  std::vector<float> samples;  // mono, in [-1, 1]

  size_t size() const { return samples.size(); }
};

namespace detail {

inline void put_u32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_u16(std::string& out, uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}
inline uint32_t get_u32(const unsigned char* p) {
  return p[0] | (p[1] << 8) | (p[2] << 16) | (uint32_t(p[3]) << 24);
}
inline uint16_t get_u16(const unsigned char* p) { return static_cast<uint16_t>(p[0] | (p[1] << 8)); }

}  // namespace detail

// RIFF/WAVE, PCM 16-bit little-endian, mono. Samples quantize as
// round(s * 32767).
inline void write_wav(const std::string& path, const Waveform& w) {
  std::string bytes;
  const uint32_t data_len = static_cast<uint32_t>(w.samples.size() * 2);
  bytes += "RIFF";
  detail::put_u32(bytes, 36 + data_len);
  bytes += "WAVEfmt ";
  detail::put_u32(bytes, 16);
  detail::put_u16(bytes, 1);  // PCM
  detail::put_u16(bytes, 1);  // mono
  detail::put_u32(bytes, static_cast<uint32_t>(w.sample_rate));
  detail::put_u32(bytes, static_cast<uint32_t>(w.sample_rate * 2));
  detail::put_u16(bytes, 2);
  detail::put_u16(bytes, 16);
  bytes += "data";
  detail::put_u32(bytes, data_len);
  for (float s : w.samples) {
    double q = std::round(static_cast<double>(s) * 32767.0);
    q = std::min(32767.0, std::max(-32768.0, q));
    detail::put_u16(bytes, static_cast<uint16_t>(static_cast<int16_t>(q)));
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("write_wav: cannot open " + path);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("write_wav: write failed for " + path);
}

inline Waveform read_wav(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("read_wav: cannot open " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() < 44 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw IoError("read_wav: not a RIFF/WAVE file: " + path);

  Waveform w;
  size_t pos = 12;
  bool got_fmt = false, got_data = false;
  while (pos + 8 <= bytes.size()) {
    uint32_t chunk_len = detail::get_u32(bytes.data() + pos + 4);
    const unsigned char* body = bytes.data() + pos + 8;
    if (pos + 8 + chunk_len > bytes.size()) throw IoError("read_wav: truncated chunk in " + path);
    if (std::memcmp(bytes.data() + pos, "fmt ", 4) == 0) {
      if (chunk_len < 16) throw IoError("read_wav: short fmt chunk in " + path);
      if (detail::get_u16(body) != 1 || detail::get_u16(body + 2) != 1 ||
          detail::get_u16(body + 14) != 16)
        throw IoError("read_wav: only PCM16 mono supported: " + path);
      w.sample_rate = static_cast<int>(detail::get_u32(body + 4));
      got_fmt = true;
    } else if (std::memcmp(bytes.data() + pos, "data", 4) == 0) {
      w.samples.reserve(chunk_len / 2);
      for (uint32_t i = 0; i + 1 < chunk_len; i += 2) {
        int16_t q = static_cast<int16_t>(detail::get_u16(body + i));
        w.samples.push_back(static_cast<float>(q) / 32767.0f);
      }
      got_data = true;
    }
    pos += 8 + chunk_len + (chunk_len & 1);
  }
  if (!got_fmt || !got_data) throw IoError("read_wav: missing fmt or data chunk in " + path);
  return w;
}

}  // namespace joytts
