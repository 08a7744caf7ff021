#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "fdbss/errors.hpp"
#include "fdbss/signal.hpp"

namespace fdbss {

namespace detail {

inline uint32_t read_u32(const uint8_t* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}
inline uint16_t read_u16(const uint8_t* p) {
  return static_cast<uint16_t>(p[0]) | (static_cast<uint16_t>(p[1]) << 8);
}

}  // namespace detail

// RIFF/WAVE reader for 16-bit PCM and 32-bit IEEE float, any channel count
// and sample rate. Amplitudes are normalized to [-1, 1] (PCM divided by 32768).
inline TimeSignal load_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("wav: cannot open " + path);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());

  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0)
    throw DataError("wav: missing RIFF header in " + path);
  if (std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw DataError("wav: missing WAVE form type in " + path);

  uint16_t format = 0, channels = 0, bits = 0;
  uint32_t sample_rate = 0;
  const uint8_t* data_ptr = nullptr;
  size_t data_len = 0;
  bool have_fmt = false;

  size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const char* id = reinterpret_cast<const char*>(bytes.data() + pos);
    const uint32_t size = detail::read_u32(bytes.data() + pos + 4);
    if (pos + 8 + size > bytes.size())
      throw DataError(std::string("wav: truncated '") + std::string(id, 4) +
                      "' chunk in " + path);
    const uint8_t* body = bytes.data() + pos + 8;
    if (std::memcmp(id, "fmt ", 4) == 0) {
      if (size < 16) throw DataError("wav: truncated 'fmt ' chunk in " + path);
      format = detail::read_u16(body);
      channels = detail::read_u16(body + 2);
      sample_rate = detail::read_u32(body + 4);
      bits = detail::read_u16(body + 14);
      have_fmt = true;
    } else if (std::memcmp(id, "data", 4) == 0) {
      data_ptr = body;
      data_len = size;
    }
    pos += 8 + size + (size & 1);  // chunks are word-aligned
  }
  if (!have_fmt) throw DataError("wav: missing 'fmt ' chunk in " + path);
  if (!data_ptr) throw DataError("wav: missing 'data' chunk in " + path);
  if (channels == 0 || sample_rate == 0)
    throw DataError("wav: invalid 'fmt ' fields in " + path);

  const bool pcm16 = format == 1 && bits == 16;
  const bool float32 = format == 3 && bits == 32;
  if (!pcm16 && !float32)
    throw DataError("wav: unsupported codec (need PCM16 or float32) in " + path);

  const size_t bytes_per_sample = bits / 8;
  const size_t frame_bytes = bytes_per_sample * channels;
  const size_t frames = data_len / frame_bytes;

  TimeSignal out;
  out.sample_rate = sample_rate;
  out.data.resize(channels, frames);
  for (size_t t = 0; t < frames; ++t) {
    for (int c = 0; c < channels; ++c) {
      const uint8_t* p = data_ptr + t * frame_bytes + c * bytes_per_sample;
      if (pcm16) {
        int16_t v;
        std::memcpy(&v, p, 2);
        out.data(c, t) = static_cast<double>(v) / 32768.0;
      } else {
        float v;
        std::memcpy(&v, p, 4);
        out.data(c, t) = v;
      }
    }
  }
  return out;
}

// Writes 32-bit IEEE float; float round trips are bit-exact.
inline void save_wav(const TimeSignal& x, const std::string& path) {
  if (x.channels() == 0 || x.samples() == 0) throw DataError("wav: empty signal");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("wav: cannot write " + path);

  const uint32_t channels = static_cast<uint32_t>(x.channels());
  const uint32_t frames = static_cast<uint32_t>(x.samples());
  const uint32_t data_bytes = frames * channels * 4;
  const uint32_t rate = static_cast<uint32_t>(x.sample_rate);
  const uint32_t byte_rate = rate * channels * 4;
  const uint16_t block_align = static_cast<uint16_t>(channels * 4);

  const auto put_u32 = [&](uint32_t v) { out.write(reinterpret_cast<char*>(&v), 4); };
  const auto put_u16 = [&](uint16_t v) { out.write(reinterpret_cast<char*>(&v), 2); };

  out.write("RIFF", 4);
  put_u32(4 + 26 + 12 + 8 + data_bytes);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  put_u32(18);
  put_u16(3);  // IEEE float
  put_u16(static_cast<uint16_t>(channels));
  put_u32(rate);
  put_u32(byte_rate);
  put_u16(block_align);
  put_u16(32);
  put_u16(0);  // no extension bytes
  out.write("fact", 4);
  put_u32(4);
  put_u32(frames);
  out.write("data", 4);
  put_u32(data_bytes);
  for (uint32_t t = 0; t < frames; ++t)
    for (uint32_t c = 0; c < channels; ++c) {
      const float v = static_cast<float>(x.data(c, t));
      out.write(reinterpret_cast<const char*>(&v), 4);
    }
  if (!out) throw DataError("wav: write failed for " + path);
}

}  // namespace fdbss
